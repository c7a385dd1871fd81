"""Scenario files: JSON schema validation, cross-reference checks, presets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from satnet.errors import ValidationError
from satnet.geometry import CONSTELLATIONS, GroundSiteSpec, ShellSpec
from satnet.orchestrator import EmulationConfig
from satnet.placement import MachineRecord
from satnet.statestore import ApplicationRecord
from satnet.topology import NODE_TYPES, sat_node_id, site_node_id
from satnet import geometry

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["shells", "machines"],
    "properties": {
        "name": _STR,
        "shells": {"type": "array", "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name", "altitude_km", "num_orbits", "sats_per_orbit",
                         "inclination_deg"],
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "altitude_km": {"type": "number", "exclusiveMinimum": 0},
                "num_orbits": {"type": "integer", "minimum": 1},
                "sats_per_orbit": {"type": "integer", "minimum": 1},
                "inclination_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 180},
                "phasing_factor": {"type": "integer", "minimum": 0},
                "raan_span_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 360},
            },
        }},
        "ground_sites": {"type": "array", "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name", "latitude_deg", "longitude_deg"],
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "latitude_deg": {"type": "number", "minimum": -90, "maximum": 90},
                "longitude_deg": {"type": "number", "exclusiveMinimum": -180, "maximum": 180},
                "altitude_km": {"type": "number", "minimum": 0},
                "min_elevation_deg": {"type": "number", "minimum": 0, "exclusiveMaximum": 90},
            },
        }},
        "machines": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["machine_index"],
            "properties": {
                "machine_index": {"type": "integer", "minimum": 0},
                "instance_capacity": {"type": "integer", "minimum": 1},
                "weight": {"type": "integer", "minimum": 1},
                "nic_ip": _STR,
                "nic_mac": {"type": "string",
                            "pattern": "^([0-9a-f]{2}:){5}[0-9a-f]{2}$"},
            },
        }},
        "apps": {"type": "array", "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["app_id", "node_id", "launch_timestamp"],
            "properties": {
                "app_id": {"type": "string", "minLength": 1},
                "node_id": _STR,
                "launch_timestamp": {"type": "number", "minimum": 0},
                "as_index": {"type": ["integer", "null"]},
                "user_defined": {"type": "object", "additionalProperties": _STR},
            },
        }},
        "config": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "is_leader": {"type": "boolean"},
                "is_servant": {"type": "boolean"},
                "interface_name": _STR,
                "instance_capacity": {"type": "integer", "minimum": 1},
                "parallel_num": {"type": "integer", "minimum": 1},
                "epoch_step_s": {"type": "number", "exclusiveMinimum": 0},
                "duration_s": {"type": "number", "minimum": 0},
                "link_mode": {"enum": ["ebpf", "legacy"]},
                "node_task_cost": {"type": "integer", "minimum": 1},
                "link_task_cost": {"type": "integer", "minimum": 1},
                "link_parallel": {"type": "integer", "minimum": 1},
                "delay_epsilon_ms": {"type": "number", "minimum": 0},
                "one_per_shell": {"type": "boolean"},
                "isl_failure_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "fail_nodes": {"type": "array", "items": _STR},
                "verify_delivery": {"type": "boolean"},
            },
        },
        "node_type_profiles": {
            "type": "object",
            "propertyNames": {"enum": list(NODE_TYPES)},
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "image": _STR,
                    "env": {"type": "object", "additionalProperties": _STR},
                    "resource_limit": {"type": "object",
                                       "additionalProperties": {"type": ["string", "number"]}},
                },
            },
        },
    },
}


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


@dataclass(frozen=True)
class ScenarioFile:
    shells: tuple
    machines: tuple
    ground_sites: tuple = ()
    apps: tuple = ()
    config: EmulationConfig = field(default_factory=EmulationConfig)
    node_type_profiles: dict = field(default_factory=dict)
    name: str = "scenario"

    def node_ids(self) -> set:
        ids = {site_node_id(s) for s in self.ground_sites}
        for spec in self.shells:
            ids.update(sat_node_id(e) for e in geometry.generate_shell(spec))
        return ids

    def to_dict(self) -> dict:
        def shell(s: ShellSpec):
            d = {k: getattr(s, k) for k in ("name", "altitude_km", "num_orbits",
                                            "sats_per_orbit", "inclination_deg",
                                            "phasing_factor")}
            if s.raan_span_deg is not None:
                d["raan_span_deg"] = s.raan_span_deg
            return d

        machines = []
        for m in self.machines:
            d = {"machine_index": m.machine_index, "instance_capacity": m.weight}
            d.update({k: getattr(m, k) for k in ("nic_ip", "nic_mac") if getattr(m, k)})
            machines.append(d)
        apps = [{k: v for k, v in a.to_dict().items() if v is not None} for a in self.apps]
        return {
            "name": self.name,
            "shells": [shell(s) for s in self.shells],
            "ground_sites": [dict(s.__dict__) for s in self.ground_sites],
            "machines": machines,
            "apps": apps,
            "config": self.config.to_dict(),
            "node_type_profiles": self.node_type_profiles,
        }


def scenario_from_dict(data) -> ScenarioFile:
    """Validate and build a scenario, reporting every violation at once."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = [f"{_path(e.absolute_path)}: {e.message}"
              for e in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        raise ValidationError(f"{len(errors)} scenario error(s):\n  " + "\n  ".join(errors),
                              errors=errors)

    cfg_raw = dict(data.get("config", {}))
    try:
        config = EmulationConfig.from_dict(cfg_raw)
    except ValidationError as exc:
        errors.append(f"config.{exc.field}: {exc}")
        config = None

    shells, sites = [], []
    for i, raw in enumerate(data["shells"]):
        try:
            shells.append(ShellSpec(**raw))
        except ValidationError as exc:
            errors.append(f"shells[{i}].{exc.field}: {exc}")
    for i, raw in enumerate(data.get("ground_sites", [])):
        try:
            sites.append(GroundSiteSpec(**raw))
        except ValidationError as exc:
            errors.append(f"ground_sites[{i}].{exc.field}: {exc}")
    for what, items in (("shells", shells), ("ground_sites", sites)):
        seen = set()
        for i, item in enumerate(items):
            if item.name in seen:
                errors.append(f"{what}[{i}].name: duplicate name {item.name!r}")
            seen.add(item.name)

    default_capacity = config.instance_capacity if config else 1
    machines = []
    for i, raw in enumerate(data["machines"]):
        weight = raw.get("weight", raw.get("instance_capacity", default_capacity))
        if "weight" in raw and "instance_capacity" in raw and raw["weight"] != raw["instance_capacity"]:
            errors.append(f"machines[{i}]: weight and instance_capacity disagree")
        machines.append(MachineRecord(raw["machine_index"], weight,
                                      raw.get("nic_ip", ""), raw.get("nic_mac", "")))
    idx = [m.machine_index for m in machines]
    if idx != list(range(len(machines))):
        errors.append(f"machines: indices must be dense from 0 in order, got {idx}")

    apps = []
    for i, raw in enumerate(data.get("apps", [])):
        apps.append(ApplicationRecord(**raw))
    if len({a.app_id for a in apps}) != len(apps):
        errors.append("apps: duplicate app_id")

    scenario = ScenarioFile(tuple(shells), tuple(machines), tuple(sites), tuple(apps),
                            config or EmulationConfig(), dict(data.get("node_type_profiles", {})),
                            data.get("name", "scenario"))
    if not errors:
        known = scenario.node_ids()
        for i, app in enumerate(apps):
            if app.node_id not in known:
                errors.append(f"apps[{i}].node_id: unknown node {app.node_id!r}")
        for j, nid in enumerate(scenario.config.fail_nodes):
            if nid not in known:
                errors.append(f"config.fail_nodes[{j}]: unknown node {nid!r}")
    if errors:
        raise ValidationError(f"{len(errors)} scenario error(s):\n  " + "\n  ".join(errors),
                              errors=errors)
    return scenario


def parse_scenario(path) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ValidationError(f"scenario file not found: {path}", field="path") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}", field="path") from None
    return scenario_from_dict(data)


# Sites near the poles see overlapping passes of near-polar shells.
DEFAULT_SITES = {
    "iridium": [GroundSiteSpec("svalbard", 78.23, 15.39), GroundSiteSpec("fairbanks", 64.84, -147.72)],
}
GENERIC_SITES = [GroundSiteSpec("beijing", 39.90, 116.40), GroundSiteSpec("newyork", 40.71, -74.01)]


def example_scenario(constellation: str, machines: int = 1, duration_s: float = 3600.0,
                     epoch_step_s: float = 10.0, parallel_num: int = 4,
                     ground_sites: Optional[list] = None) -> ScenarioFile:
    """A ready-to-run scenario for one of the bundled constellations."""
    if constellation not in CONSTELLATIONS:
        raise ValidationError(
            f"unknown constellation {constellation!r}; choose from {sorted(CONSTELLATIONS)}",
            field="constellation")
    shells = tuple(CONSTELLATIONS[constellation])
    if ground_sites is None:
        ground_sites = DEFAULT_SITES.get(constellation.split("-")[0], GENERIC_SITES)
    total = sum(s.total_satellites for s in shells) + len(ground_sites)
    capacity = max(1, -(-total // machines))
    config = EmulationConfig(parallel_num=parallel_num, epoch_step_s=epoch_step_s,
                             duration_s=duration_s, instance_capacity=capacity)
    return ScenarioFile(
        shells=shells,
        machines=tuple(MachineRecord(i, capacity) for i in range(machines)),
        ground_sites=tuple(ground_sites),
        config=config,
        name=constellation,
    )
