"""Emulation lifecycle: construction, epoch loop, application launches, teardown.

The leader side computes topology changes and publishes them under
``links/`` in the state store. One applier per machine model consumes its
own watch stream and applies the changes that concern its machine to the
data-plane model, in revision order.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

from satnet import scheduling
from satnet.dataplane import EBPF, LEGACY, LINK_MODES, DataPlane
from satnet.errors import ContractViolation, StaleWatchError, ValidationError
from satnet.geometry import GroundSiteSpec, SatelliteElement
from satnet.placement import MachineRecord, classify_links, weighted_round_robin, INTER_MACHINE
from satnet.statestore import ApplicationRecord, StateStore
from satnet.topology import (
    ConstellationTopology,
    LinkRecord,
    TopologySnapshot,
    delay_consistency_violations,
    gsl_elevation_violations,
    gsl_multiplicity_violations,
)

log = logging.getLogger(__name__)

EPOCH_TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EmulationConfig:
    is_leader: bool = True
    interface_name: str = "eth0"
    instance_capacity: int = 64
    parallel_num: int = field(default_factory=lambda: os.cpu_count() or 1)
    epoch_step_s: float = 10.0
    duration_s: float = 0.0
    link_mode: str = EBPF
    node_task_cost: int = 10
    link_task_cost: int = 1
    link_parallel: int = 1
    delay_epsilon_ms: float = 0.001
    one_per_shell: bool = True
    isl_failure_prob: float = 0.0
    fail_nodes: tuple = ()
    verify_delivery: bool = True

    def __post_init__(self):
        if isinstance(self.parallel_num, bool) or not isinstance(self.parallel_num, int) \
                or self.parallel_num < 1:
            raise ValidationError("parallel_num must be >= 1", field="parallel_num")
        if not self.epoch_step_s > 0:
            raise ValidationError("epoch_step_s must be > 0", field="epoch_step_s")
        if not self.duration_s >= 0:
            raise ValidationError("duration_s must be >= 0", field="duration_s")
        if self.link_mode not in LINK_MODES:
            raise ValidationError(f"link_mode must be one of {LINK_MODES}", field="link_mode")
        if not 0 <= self.isl_failure_prob <= 1:
            raise ValidationError("isl_failure_prob must be in [0, 1]", field="isl_failure_prob")
        if self.instance_capacity < 1:
            raise ValidationError("instance_capacity must be >= 1", field="instance_capacity")
        object.__setattr__(self, "fail_nodes", tuple(self.fail_nodes))

    @classmethod
    def from_dict(cls, d: dict) -> "EmulationConfig":
        d = dict(d)
        if "is_servant" in d:
            servant = d.pop("is_servant")
            if "is_leader" in d and d["is_leader"] == servant:
                raise ValidationError("is_servant and is_leader disagree", field="is_servant")
            d["is_leader"] = not servant
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fail_nodes"] = list(self.fail_nodes)
        return d


def epoch_times(step_s: float, duration_s: float) -> list[float]:
    """0, step, 2*step, ... up to and including ``duration_s``."""
    n = int(math.floor(duration_s / step_s + EPOCH_TIME_TOLERANCE))
    return [i * step_s for i in range(n + 1)]


def node_task_id(node_id: str) -> str:
    return f"node:{node_id}"


def link_task_id(link_id: str) -> str:
    return f"link:{link_id}"


def isl_failure_model(seed: int, prob: float):
    """Independent per-epoch ISL failures, reproducible from ``seed``."""
    if prob <= 0:
        return None

    def failed(link: LinkRecord, t: float) -> bool:
        return random.Random(f"{seed}:{link.link_id}:{t!r}").random() < prob
    return failed


# ---------------------------------------------------------------------------
# environment


@dataclass
class Environment:
    config: EmulationConfig
    machines: list
    topology: ConstellationTopology
    initial_snapshot: TopologySnapshot
    snapshot: TopologySnapshot
    placement: object
    dataplane: DataPlane
    store: StateStore
    apps: list
    seed: int = 0
    isl_ports: dict = field(default_factory=dict)   # (node_id, link_id) -> interface id
    gsl_ports: dict = field(default_factory=dict)   # (sat_id, site_id) -> interface id
    site_ports: dict = field(default_factory=dict)  # gsl link id -> ground interface id
    link_machine: dict = field(default_factory=dict)
    link_delay_ms: dict = field(default_factory=dict)
    created_nodes: set = field(default_factory=set)
    construction: Optional[scheduling.ScheduleTrace] = None

    @property
    def aborted(self) -> bool:
        return self.construction is not None and self.construction.aborted

    def node_machine(self, node_id: str) -> int:
        return self.placement.machine_of_instance[node_id]

    def machine_for_link(self, record: LinkRecord) -> int:
        m = self.link_machine.get(record.link_id)
        if m is None:
            m = self.node_machine(record.endpoint_a)
            self.link_machine[record.link_id] = m
        return m

    def inventory(self) -> dict:
        return {
            "nodes": sorted(self.created_nodes),
            "links": sorted(self.dataplane.links),
            "machines": [m.to_dict() for m in self.machines],
        }


def _machines_for(scenario, config) -> list[MachineRecord]:
    machines = list(scenario.machines) or [MachineRecord(0, config.instance_capacity)]
    return machines


def _ground_ids(snapshot):
    return sorted(nid for nid, n in snapshot.nodes.items()
                  if isinstance(n.geometry, GroundSiteSpec))


def _create_node(env: Environment, node_id: str) -> None:
    node = env.snapshot.nodes[node_id]
    m = env.node_machine(node_id)
    dp = env.dataplane
    for lid in node.link_ids:
        env.isl_ports[(node_id, lid)] = dp.add_interface(node_id, m).interface_id
    if isinstance(node.geometry, SatelliteElement):
        for site_id in _ground_ids(env.snapshot):
            env.gsl_ports[(node_id, site_id)] = dp.add_interface(node_id, m).interface_id
    elif isinstance(node.geometry, GroundSiteSpec):
        shells = [None] if not env.config.one_per_shell else \
            sorted({s.name for s in env.topology.shells_})
        for shell in shells:
            lid = f"gsl-{node_id}" if shell is None else f"gsl-{node_id}-{shell}"
            env.site_ports[lid] = dp.add_interface(node_id, m).interface_id
    env.created_nodes.add(node_id)
    env.store.put(f"nodes/{node_id}", {**node.to_dict(), "status": "created"})


def _link_ports(env: Environment, record: LinkRecord):
    if record.link_type == "gsl":
        site, sat = record.endpoint_a, record.endpoint_b
        return env.site_ports[record.link_id], env.gsl_ports[(sat, site)]
    return (env.isl_ports[(record.endpoint_a, record.link_id)],
            env.isl_ports[(record.endpoint_b, record.link_id)])


def _create_link(env: Environment, record: LinkRecord):
    pa, pb = _link_ports(env, record)
    dp = env.dataplane
    handle = dp.create_link(env.config.link_mode, dp.interfaces[pa], dp.interfaces[pb],
                            link_id=record.link_id)
    env.link_delay_ms[record.link_id] = record.delay_ms
    return handle


def construct_network(config: EmulationConfig, scenario, seed: int = 0,
                      commands: Sequence[scheduling.Task] = ()) -> tuple:
    """Place, schedule and build the network on the data-plane model.

    Returns ``(environment, report)``. When a node task fails the run
    aborts; the environment then holds only what was created and
    ``report["aborted"]`` is true.
    """
    topo = ConstellationTopology(
        one_per_shell=config.one_per_shell,
        delay_epsilon_ms=config.delay_epsilon_ms,
        isl_failure=isl_failure_model(seed, config.isl_failure_prob),
    ).fit(scenario.shells, scenario.ground_sites)
    snap = topo.initial_snapshot_
    profiles = getattr(scenario, "node_type_profiles", {}) or {}
    machines = _machines_for(scenario, config)
    placement = weighted_round_robin(machines, snap.nodes, snap.links.values())
    nodes = {}
    for nid, node in snap.nodes.items():
        ud = dict(node.user_defined)
        prof = profiles.get(node.node_type)
        if prof:
            ud.update({f"profile.{k}": v if isinstance(v, str) else str(v)
                       for k, v in sorted(prof.items())})
        nodes[nid] = replace(node, machine_index=placement.machine_of_instance[nid],
                             user_defined=ud)
    snap = TopologySnapshot(snap.t, nodes, snap.links)

    env = Environment(config, machines, topo, snap, snap, placement, DataPlane(machines),
                      StateStore(), list(getattr(scenario, "apps", ())), seed=seed)
    env.link_machine.update(placement.machine_of_link)
    for m in machines:
        env.store.put(f"machines/{m.machine_index}", {
            **m.to_dict(), "leader": m.machine_index == 0,
            "interface_name": config.interface_name})
    for app in env.apps:
        env.store.put(f"apps/{app.app_id}", app.to_dict())

    unknown = set(config.fail_nodes) - set(snap.nodes)
    if unknown:
        raise ValidationError(f"fail_nodes references unknown nodes {sorted(unknown)}",
                              field="fail_nodes")
    tasks = [scheduling.Task(node_task_id(n), scheduling.NODE, env.node_machine(n),
                             config.node_task_cost)
             for m in sorted(placement.instances_by_machine)
             for n in placement.instances_by_machine[m]]
    tasks += [scheduling.Task(link_task_id(lid), scheduling.LINK, env.link_machine[lid],
                              config.link_task_cost,
                              (node_task_id(r.endpoint_a), node_task_id(r.endpoint_b)))
              for lid, r in snap.links.items()]
    tasks += list(commands)
    trace = scheduling.simulate_schedule(
        tasks, config.parallel_num, scheduling.DEPENDENCY_AWARE,
        fail=[node_task_id(n) for n in config.fail_nodes],
        link_parallel=config.link_parallel)
    env.construction = trace

    for rec in trace.completion_order():
        kind, _, ident = rec.task_id.partition(":")
        if rec.kind == scheduling.NODE:
            _create_node(env, ident)
        elif rec.kind == scheduling.LINK:
            record = snap.links[ident]
            _create_link(env, record)
            env.store.put(f"links/{ident}", {"event": "create", "t": 0.0,
                                             "record": record.to_dict()})

    kinds = classify_links(placement, snap.links.values())
    report = {
        "aborted": trace.aborted,
        "makespan": trace.makespan,
        "peak_heavy": {str(k): v for k, v in sorted(trace.peak_heavy.items())},
        "nodes_created": len(env.created_nodes),
        "links_created": len(env.dataplane.links),
        "failed": trace.by_status(scheduling.FAILED),
        "blocked": trace.by_status(scheduling.BLOCKED),
        "not_started": trace.by_status(scheduling.NOT_STARTED),
        "placement": {
            "instances_per_machine": {str(m): len(v) for m, v in
                                      sorted(placement.instances_by_machine.items())},
            "links_per_machine": {str(m): len(v) for m, v in
                                  sorted(placement.links_by_machine.items())},
            "inter_machine_links": sum(1 for v in kinds.values() if v == INTER_MACHINE),
        },
        "timeline": trace.to_dict()["tasks"],
    }
    return env, report


# ---------------------------------------------------------------------------
# instruction delivery


class MachineApplier:
    """Consumes ``links/`` watch events for one machine, in revision order."""

    def __init__(self, env: Environment, machine: int, from_revision: int):
        self.env = env
        self.machine = machine
        self.applied: list[int] = []
        self.resyncs = 0
        self.handovers: list[dict] = []
        try:
            self.watcher = env.store.watch("links/", from_revision)
        except StaleWatchError as exc:
            log.warning("machine %d: %s; resyncing from a full snapshot", machine, exc)
            self.resync()

    def resync(self) -> None:
        rev, records = self.env.store.snapshot("links/")
        want = {}
        for key, value, _ in records:
            rec = LinkRecord.from_dict(value["record"])
            if rec.connected and self.env.machine_for_link(rec) == self.machine:
                want[rec.link_id] = rec
        dp = self.env.dataplane
        mine = [lid for lid in dp.links if self.env.link_machine.get(lid) == self.machine]
        for lid in sorted(mine):
            h = dp.links[lid]
            rec = want.get(lid)
            if rec is None or h.b.owner_node != rec.endpoint_b:
                dp.destroy_link(lid)
        for lid, rec in sorted(want.items()):
            if lid not in dp.links:
                _create_link(self.env, rec)
            self.env.link_delay_ms[lid] = rec.delay_ms
        self.resyncs += 1
        self.watcher = self.env.store.watch("links/", rev + 1)

    def pump(self) -> int:
        n = 0
        for ev in self.watcher.drain():
            lid = ev.key[len("links/"):]
            if ev.kind == "delete":
                if self.env.link_machine.get(lid) == self.machine:
                    self.env.dataplane.destroy_link(lid)
                    self.applied.append(ev.revision)
                    n += 1
                continue
            value = ev.decoded()
            rec = LinkRecord.from_dict(value["record"])
            if self.env.machine_for_link(rec) != self.machine:
                continue
            self._apply(value["event"], value["t"], rec)
            self.applied.append(ev.revision)
            n += 1
        return n

    def _apply(self, kind: str, t: float, rec: LinkRecord) -> None:
        env, dp = self.env, self.env.dataplane
        if kind == "create":
            _create_link(env, rec)
        elif kind == "destroy":
            dp.destroy_link(rec.link_id)
        elif kind == "handover":
            h = dp.links[rec.link_id]
            old_sat = h.b.owner_node
            port = dp.interfaces[env.gsl_ports[(rec.endpoint_b, rec.endpoint_a)]]
            res = dp.handover(rec.link_id, port)
            env.site_ports[rec.link_id] = res.kept_after
            env.link_delay_ms[rec.link_id] = rec.delay_ms
            self.handovers.append({
                "t": t, "link_id": rec.link_id, "from": old_sat, "to": rec.endpoint_b,
                "ground_interface_before": res.kept_before,
                "ground_interface_after": res.kept_after,
                "ops": {str(k): v for k, v in sorted(res.ops.items())},
            })
        elif kind == "update_delay":
            env.link_delay_ms[rec.link_id] = rec.delay_ms
        else:
            raise ContractViolation(f"unknown instruction {kind!r}")

    @property
    def ordered(self) -> bool:
        return all(a < b for a, b in zip(self.applied, self.applied[1:]))


def publish_events(store: StateStore, events) -> list[int]:
    revs = []
    for ev in events:
        key = f"links/{ev.link_id}"
        if ev.record is None:
            revs.append(store.delete(key))
        else:
            revs.append(store.put(key, {"event": ev.kind, "t": ev.t,
                                        "record": ev.record.to_dict()}))
    return revs


def dataplane_mismatches(env: Environment) -> list[str]:
    """Connected links in the snapshot versus links present in the data plane."""
    out = []
    want = {lid: r for lid, r in env.snapshot.links.items() if r.connected}
    have = env.dataplane.links
    for lid in sorted(want.keys() - have.keys()):
        out.append(f"{lid} connected in topology but absent from data plane")
    for lid in sorted(have.keys() - want.keys()):
        out.append(f"{lid} present in data plane but not connected in topology")
    for lid in sorted(want.keys() & have.keys()):
        r, h = want[lid], have[lid]
        if {h.a.owner_node, h.b.owner_node} != set(r.endpoints):
            out.append(f"{lid} endpoints differ between topology and data plane")
    return out


def delivery_failures(dp: DataPlane) -> list[str]:
    """Send one frame each way on every link; each must arrive exactly once."""
    out = []
    for lid, h in sorted(dp.links.items()):
        for src, dst in ((h.a, h.b), (h.b, h.a)):
            try:
                got = dp.send(src.interface_id, b"probe")
            except Exception as exc:  # report, keep checking the rest
                out.append(f"{lid}: {exc}")
                continue
            if got != [dst.interface_id]:
                out.append(f"{lid}: {src.interface_id} -> {got}, expected [{dst.interface_id}]")
    return out


# ---------------------------------------------------------------------------
# applications


class ApplicationLauncher:
    """Releases each application at the first epoch at or after its timestamp."""

    def __init__(self, apps: Sequence[ApplicationRecord], known_nodes=None):
        if known_nodes is not None:
            bad = [a.app_id for a in apps if a.node_id not in known_nodes]
            if bad:
                raise ValidationError(f"applications reference unknown nodes: {bad}",
                                      field="apps")
        ids = [a.app_id for a in apps]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate app_id", field="apps")
        self._pending = sorted(apps, key=lambda a: (a.launch_timestamp, a.app_id))
        self.launched: list[dict] = []

    def due(self, t: float) -> list[ApplicationRecord]:
        out = []
        while self._pending and self._pending[0].launch_timestamp <= t + EPOCH_TIME_TOLERANCE:
            app = self._pending.pop(0)
            out.append(app)
            self.launched.append({"t": t, "app_id": app.app_id, "node_id": app.node_id})
        return out

    def never_launched(self) -> list[str]:
        return [a.app_id for a in self._pending]


def launch_applications(apps: Sequence[ApplicationRecord], clock: Sequence[float],
                        known_nodes=None) -> dict:
    launcher = ApplicationLauncher(apps, known_nodes)
    for t in clock:
        launcher.due(t)
    return {"launched": launcher.launched, "never_launched": launcher.never_launched()}


# ---------------------------------------------------------------------------
# epochs


@dataclass
class RunResult:
    report: dict
    events: list
    initial_snapshot: TopologySnapshot
    final_snapshot: TopologySnapshot

    @property
    def ok(self) -> bool:
        return not self.report["violations"]


def snapshot_digest(snapshot: TopologySnapshot) -> str:
    return hashlib.sha256(snapshot.canonical().encode()).hexdigest()


def run_epochs(env: Environment) -> RunResult:
    """Step the constructed environment through every epoch of the run."""
    if env.aborted:
        raise ContractViolation("cannot run an aborted construction; deconstruct it first")
    cfg = env.config
    times = epoch_times(cfg.epoch_step_s, cfg.duration_s)
    start_rev = env.store.revision + 1
    appliers = [MachineApplier(env, m.machine_index, start_rev) for m in env.machines]
    launcher = ApplicationLauncher(env.apps, env.snapshot.nodes)
    all_events, epochs, violations = [], [], []
    initial = env.snapshot

    for t in times:
        snap, events = env.topology.step(env.snapshot, t)
        env.snapshot = snap
        revs = publish_events(env.store, events)
        for applier in appliers:
            applier.pump()
        launched = launcher.due(t)
        for app in launched:
            env.store.put(f"apps/{app.app_id}", {**app.to_dict(), "launched_at": t})
        all_events.extend(events)

        problems = (gsl_elevation_violations(snap, t) + delay_consistency_violations(snap)
                    + gsl_multiplicity_violations(snap) + snap.integrity_errors()
                    + dataplane_mismatches(env))
        violations.extend(f"t={t}: {p}" for p in problems)
        counts = dict.fromkeys(("create", "destroy", "handover", "update_delay"), 0)
        for ev in events:
            counts[ev.kind] += 1
        epochs.append({"t": t, **counts, "first_revision": revs[0] if revs else None,
                       "launched": [a.app_id for a in launched]})

    for applier in appliers:
        if not applier.ordered:
            violations.append(f"machine {applier.machine} applied events out of order")
        applier.watcher.close()
    if cfg.verify_delivery:
        violations.extend(delivery_failures(env.dataplane))

    handovers = sorted((h for a in appliers for h in a.handovers),
                       key=lambda h: (h["t"], h["link_id"]))
    report = {
        "seed": env.seed,
        "config": cfg.to_dict(),
        "epochs": epochs,
        "epoch_count": len(times),
        "event_totals": {k: sum(e[k] for e in epochs)
                         for k in ("create", "destroy", "handover", "update_delay")},
        "handover_log": handovers,
        "launch_log": {"launched": launcher.launched,
                       "never_launched": launcher.never_launched()},
        "counters": env.dataplane.counter_snapshot(),
        "appliers": {str(a.machine): {"applied": len(a.applied), "ordered": a.ordered,
                                      "resyncs": a.resyncs} for a in appliers},
        "store_revision": env.store.revision,
        "initial_snapshot_sha256": snapshot_digest(initial),
        "final_snapshot_sha256": snapshot_digest(env.snapshot),
        "violations": violations,
    }
    return RunResult(report, all_events, initial, env.snapshot)


# ---------------------------------------------------------------------------
# teardown


def deconstruct_network(env: Environment) -> dict:
    """Destroy every created link, then every created node, with bounded parallelism.

    Running it again on the same environment destroys nothing.
    """
    dp = env.dataplane
    links = sorted(dp.links)
    nodes = sorted(env.created_nodes)
    by_node: dict[str, list[str]] = {n: [] for n in nodes}
    for lid in links:
        h = dp.links[lid]
        for owner in {h.a.owner_node, h.b.owner_node}:
            by_node.setdefault(owner, []).append(link_task_id(lid))
    cfg = env.config
    tasks = [scheduling.Task(link_task_id(lid), scheduling.LINK,
                             env.link_machine.get(lid, dp.links[lid].a.machine),
                             cfg.link_task_cost) for lid in links]
    tasks += [scheduling.Task(node_task_id(n), scheduling.NODE, env.node_machine(n),
                              cfg.node_task_cost, tuple(sorted(by_node.get(n, ()))))
              for n in nodes]
    trace = scheduling.simulate_schedule(tasks, cfg.parallel_num, check=False,
                                         link_parallel=cfg.link_parallel)
    ifaces: dict[str, list[str]] = {}
    for iid, iface in dp.interfaces.items():
        ifaces.setdefault(iface.owner_node, []).append(iid)
    for rec in trace.completion_order():
        _, _, ident = rec.task_id.partition(":")
        if rec.kind == scheduling.LINK:
            dp.destroy_link(ident)
            env.store.delete(f"links/{ident}")
        else:
            for iid in ifaces.get(ident, ()):
                dp.remove_interface(iid)
            env.created_nodes.discard(ident)
            env.store.delete(f"nodes/{ident}")
    link_finish = max((trace.records[link_task_id(l)].finish for l in links), default=0)
    links_first = all(
        trace.records[node_task_id(n)].start >= max(
            (trace.records[d].finish for d in by_node.get(n, ())), default=0)
        for n in nodes)
    return {
        "links_destroyed": len(links),
        "nodes_destroyed": len(nodes),
        "makespan": trace.makespan,
        "last_link_finish": link_finish,
        "links_before_nodes": links_first,
        "peak_heavy": {str(k): v for k, v in sorted(trace.peak_heavy.items())},
        "timeline": trace.to_dict()["tasks"],
    }


def preflight_checklist(config: EmulationConfig) -> str:
    """Host settings a real platform backend needs; the model backend ignores them."""
    return "\n".join([
        f"[{'leader' if config.is_leader else 'follower'}] gateway NIC: {config.interface_name}",
        "- raise the ARP cache garbage-collection thresholds (net.ipv4.neigh.default.gc_thresh*)",
        "- allow frames to be redirected through bridge devices",
        "- leader only: start the key-value store the followers attach to",
    ])
