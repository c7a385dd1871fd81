"""Time-varying network graph: +grid ISLs, GSL assignment, delays and diffs.

Snapshots are treated as immutable values. Every change between epochs is
expressed as a list of :class:`LinkEvent`, and :func:`apply_events` is the
only way a new snapshot is derived from an old one, so an event log always
replays to the snapshot it was produced from.
"""
from __future__ import annotations

import hashlib
import ipaddress
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

import networkx as nx
import numpy as np
from sklearn.base import BaseEstimator

from satnet import geometry
from satnet._validation import check_is_fitted, check_shells, check_sites
from satnet.errors import ContractViolation, ValidationError
from satnet.geometry import GroundSiteSpec, SatelliteElement, ShellSpec
from satnet.serialization import canonical_json, to_jsonl

NODE_TYPES = ("satellite", "ground_station", "terminal_user", "router", "content_provider")
LINK_TYPES = ("gsl", "intra_orbit_isl", "inter_orbit_isl", "terrestrial")
EVENT_KINDS = ("destroy", "handover", "create", "update_delay")
_KIND_RANK = {k: i for i, k in enumerate(EVENT_KINDS)}

CONNECTED = "connected"
DISCONNECTED = "disconnected"

DEFAULT_DELAY_EPSILON_MS = 0.001

Geometry = Union[SatelliteElement, GroundSiteSpec, None]


# ---------------------------------------------------------------------------
# records


def sat_node_id(elem: SatelliteElement) -> str:
    return f"sat-{elem.shell_name}-{elem.orbit_index:03d}-{elem.slot_index:03d}"


def site_node_id(site: GroundSiteSpec) -> str:
    return f"gs-{site.name}"


def gsl_link_id(site_id: str, shell_name: Optional[str]) -> str:
    return f"gsl-{site_id}" if shell_name is None else f"gsl-{site_id}-{shell_name}"


def link_address(link_id: str) -> str:
    """Deterministic /127 point-to-point subnet derived from the link id."""
    digest = hashlib.sha256(link_id.encode()).digest()
    host = int.from_bytes(digest[:15], "big") & ~1
    net = ipaddress.IPv6Network(((0xFD << 120) | host, 127))
    return str(net)


def _geometry_to_dict(geom: Geometry):
    if geom is None:
        return None
    if isinstance(geom, SatelliteElement):
        return {"kind": "satellite", **geom.__dict__}
    return {"kind": "ground_site", **geom.__dict__}


def _geometry_from_dict(d) -> Geometry:
    if d is None:
        return None
    d = dict(d)
    kind = d.pop("kind")
    if kind == "satellite":
        return SatelliteElement(**d)
    return GroundSiteSpec(**d)


@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    node_type: str
    geometry: Geometry = None
    link_ids: tuple = ()
    machine_index: Optional[int] = None
    orbit_index: Optional[int] = None
    user_defined: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.node_type not in NODE_TYPES:
            raise ValidationError(f"unknown node_type {self.node_type!r}", field="node_type")
        if self.node_type == "satellite" and self.orbit_index is None:
            raise ValidationError("satellite nodes carry orbit_index", field="orbit_index")

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "node_type": self.node_type,
            "geometry": _geometry_to_dict(self.geometry),
            "link_ids": list(self.link_ids),
            "machine_index": self.machine_index,
            "orbit_index": self.orbit_index,
            "user_defined": dict(self.user_defined),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NodeRecord":
        return cls(
            node_id=d["node_id"],
            node_type=d["node_type"],
            geometry=_geometry_from_dict(d.get("geometry")),
            link_ids=tuple(d.get("link_ids", ())),
            machine_index=d.get("machine_index"),
            orbit_index=d.get("orbit_index"),
            user_defined=dict(d.get("user_defined", {})),
        )


@dataclass(frozen=True)
class LinkRecord:
    link_id: str
    endpoint_a: str
    endpoint_b: str
    link_type: str
    address: str = ""
    distance_km: float = 0.0
    delay_ms: float = 0.0
    bandwidth_mbps: Optional[float] = None
    state: str = CONNECTED
    user_defined: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.endpoint_a == self.endpoint_b:
            raise ValidationError(f"link {self.link_id} connects {self.endpoint_a} to itself",
                                  field="endpoint_b")
        if self.link_type not in LINK_TYPES:
            raise ValidationError(f"unknown link_type {self.link_type!r}", field="link_type")
        if self.state not in (CONNECTED, DISCONNECTED):
            raise ValidationError(f"unknown link state {self.state!r}", field="state")

    @property
    def endpoints(self) -> tuple:
        return self.endpoint_a, self.endpoint_b

    @property
    def connected(self) -> bool:
        return self.state == CONNECTED

    def with_distance(self, distance_km: float) -> "LinkRecord":
        return replace(self, distance_km=distance_km, delay_ms=geometry.delay_ms(distance_km))

    def to_dict(self) -> dict:
        return {
            "link_id": self.link_id,
            "endpoint_a": self.endpoint_a,
            "endpoint_b": self.endpoint_b,
            "link_type": self.link_type,
            "address": self.address,
            "distance_km": self.distance_km,
            "delay_ms": self.delay_ms,
            "bandwidth_mbps": self.bandwidth_mbps,
            "state": self.state,
            "user_defined": dict(self.user_defined),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinkRecord":
        fields = {k: d[k] for k in (
            "link_id", "endpoint_a", "endpoint_b", "link_type", "address", "distance_km",
            "delay_ms", "bandwidth_mbps", "state") if k in d}
        return cls(**fields, user_defined=dict(d.get("user_defined", {})))


@dataclass(frozen=True)
class LinkEvent:
    """One instruction. ``record`` is the link's state after the event,
    or None when a destroy removes the link from the table."""

    kind: str
    link_id: str
    t: float
    record: Optional[LinkRecord] = None

    def __post_init__(self):
        if self.kind not in _KIND_RANK:
            raise ValidationError(f"unknown event kind {self.kind!r}", field="kind")
        if self.kind == "handover" and (self.record is None or self.record.link_type != "gsl"):
            raise ValidationError("handover events must reference a GSL", field="record")
        if self.kind != "destroy" and self.record is None:
            raise ValidationError(f"{self.kind} event needs a record", field="record")

    @property
    def new_delay_ms(self) -> Optional[float]:
        return None if self.record is None else self.record.delay_ms

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "link_id": self.link_id,
            "t": self.t,
            "record": None if self.record is None else self.record.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinkEvent":
        rec = d.get("record")
        return cls(d["kind"], d["link_id"], d["t"],
                   None if rec is None else LinkRecord.from_dict(rec))


def sort_events(events: Iterable[LinkEvent]) -> list[LinkEvent]:
    """destroy < handover < create < update_delay, then by link id."""
    return sorted(events, key=lambda e: (_KIND_RANK[e.kind], e.link_id))


# ---------------------------------------------------------------------------
# snapshots


@dataclass(frozen=True)
class TopologySnapshot:
    t: float
    nodes: dict
    links: dict

    @classmethod
    def build(cls, t: float, nodes: Iterable[NodeRecord],
              links: Iterable[LinkRecord]) -> "TopologySnapshot":
        """Assemble a snapshot, recomputing every node's link_ids."""
        node_map = {n.node_id: n for n in nodes}
        link_map = {}
        by_node: dict[str, list] = {nid: [] for nid in node_map}
        for link in links:
            if link.link_id in link_map:
                raise ValidationError(f"duplicate link id {link.link_id}", field="link_id")
            for end in link.endpoints:
                if end not in node_map:
                    raise ValidationError(
                        f"link {link.link_id} references unknown node {end}", field="endpoint")
                by_node[end].append(link.link_id)
            link_map[link.link_id] = link
        node_map = {nid: replace(n, link_ids=tuple(sorted(by_node[nid])))
                    for nid, n in sorted(node_map.items())}
        return cls(float(t), node_map, dict(sorted(link_map.items())))

    def link_table(self) -> dict:
        return {lid: rec.to_dict() for lid, rec in sorted(self.links.items())}

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "nodes": {nid: n.to_dict() for nid, n in sorted(self.nodes.items())},
            "links": self.link_table(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TopologySnapshot":
        return cls(d["t"],
                   {nid: NodeRecord.from_dict(n) for nid, n in d["nodes"].items()},
                   {lid: LinkRecord.from_dict(r) for lid, r in d["links"].items()})

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def to_jsonl(self) -> str:
        rows = [{"record": "snapshot", "t": self.t}]
        rows += [{"record": "node", **n.to_dict()} for _, n in sorted(self.nodes.items())]
        rows += [{"record": "link", **r.to_dict()} for _, r in sorted(self.links.items())]
        return to_jsonl(rows)

    def integrity_errors(self) -> list[str]:
        errors = []
        for lid, link in self.links.items():
            for end in link.endpoints:
                node = self.nodes.get(end)
                if node is None:
                    errors.append(f"{lid}: endpoint {end} missing")
                elif lid not in node.link_ids:
                    errors.append(f"{lid}: not listed by endpoint {end}")
        for nid, node in self.nodes.items():
            for lid in node.link_ids:
                link = self.links.get(lid)
                if link is None or nid not in link.endpoints:
                    errors.append(f"{nid}: lists dangling link {lid}")
        return errors


def events_to_jsonl(events: Iterable[LinkEvent]) -> str:
    return to_jsonl(e.to_dict() for e in events)


def apply_events(snapshot: TopologySnapshot, events: Sequence[LinkEvent],
                 t: Optional[float] = None) -> TopologySnapshot:
    """Replay ``events`` onto ``snapshot`` and return the resulting snapshot."""
    nodes = dict(snapshot.nodes)
    links = dict(snapshot.links)
    touched: dict[str, set] = {}

    def node_links(nid):
        if nid not in touched:
            if nid not in nodes:
                raise ContractViolation(f"event references unknown node {nid}")
            touched[nid] = set(nodes[nid].link_ids)
        return touched[nid]

    for ev in events:
        old = links.get(ev.link_id)
        if old is not None:
            for end in old.endpoints:
                node_links(end).discard(ev.link_id)
        if ev.record is None:
            links.pop(ev.link_id, None)
            continue
        links[ev.link_id] = ev.record
        for end in ev.record.endpoints:
            node_links(end).add(ev.link_id)
    for nid, lids in touched.items():
        nodes[nid] = replace(nodes[nid], link_ids=tuple(sorted(lids)))
    return TopologySnapshot(snapshot.t if t is None else float(t), nodes,
                            dict(sorted(links.items())))


def diff_snapshots(prev: TopologySnapshot, next: TopologySnapshot) -> list[LinkEvent]:
    """Smallest event list turning prev's link table into next's."""
    if prev.nodes.keys() != next.nodes.keys():
        raise ContractViolation("snapshots have different node universes")
    events = []
    t = next.t
    for lid in prev.links.keys() | next.links.keys():
        a, b = prev.links.get(lid), next.links.get(lid)
        if a == b:
            continue
        if b is None:
            events.append(LinkEvent("destroy", lid, t, None))
        elif a is None:
            events.append(LinkEvent("create", lid, t, b))
        elif a.connected and not b.connected:
            events.append(LinkEvent("destroy", lid, t, b))
        elif not a.connected and b.connected:
            events.append(LinkEvent("create", lid, t, b))
        elif b.connected and b.link_type == "gsl" and a.endpoints != b.endpoints:
            events.append(LinkEvent("handover", lid, t, b))
        else:
            events.append(LinkEvent("update_delay", lid, t, b))
    return sort_events(events)


# ---------------------------------------------------------------------------
# construction


def build_isl_grid(shell: Sequence[SatelliteElement], star: bool,
                   t: float = 0.0) -> list[LinkRecord]:
    """+grid ISLs: intra-orbit rings plus same-slot links to the next orbit.

    Walker-Star shells (``star=True``) omit the seam between the last and
    the first orbit. Degenerate shells drop the link class they cannot form.
    """
    if not shell:
        raise ContractViolation("cannot wire an empty shell")
    grid = {(e.orbit_index, e.slot_index): e for e in shell}
    n_orb = max(e.orbit_index for e in shell) + 1
    n_slot = max(e.slot_index for e in shell) + 1
    pos = dict(zip(grid, geometry.propagate_many(list(grid.values()), t)))
    pairs: dict[frozenset, tuple] = {}

    def add(p, q, kind):
        key = frozenset((p, q))
        if p != q and key not in pairs and p in grid and q in grid:
            pairs[key] = (p, q, kind)

    for (o, k) in grid:
        if n_slot > 1:
            add((o, k), (o, (k + 1) % n_slot), "intra_orbit_isl")
        if n_orb > 1 and (o + 1 < n_orb or not star):
            add((o, k), ((o + 1) % n_orb, k), "inter_orbit_isl")

    links = []
    for p, q, kind in pairs.values():
        a, b = sat_node_id(grid[p]), sat_node_id(grid[q])
        if b < a:
            a, b = b, a
        lid = f"isl-{a}-{b}"
        dist = float(np.linalg.norm(pos[p] - pos[q]))
        links.append(LinkRecord(lid, a, b, kind, address=link_address(lid)).with_distance(dist))
    return sorted(links, key=lambda r: r.link_id)


def satellite_nodes(shell: Sequence[SatelliteElement]) -> list[NodeRecord]:
    return [NodeRecord(sat_node_id(e), "satellite", geometry=e, orbit_index=e.orbit_index)
            for e in shell]


def site_nodes(sites: Iterable[GroundSiteSpec]) -> list[NodeRecord]:
    return [NodeRecord(site_node_id(s), "ground_station", geometry=s) for s in sites]


def node_positions(snapshot: TopologySnapshot, t: float) -> dict[str, np.ndarray]:
    sats = [(nid, n.geometry) for nid, n in snapshot.nodes.items()
            if isinstance(n.geometry, SatelliteElement)]
    out = dict(zip((nid for nid, _ in sats),
                   geometry.propagate_many([g for _, g in sats], t)))
    for nid, n in snapshot.nodes.items():
        if isinstance(n.geometry, GroundSiteSpec):
            out[nid] = geometry.ground_site_position(n.geometry, t).as_array()
    return out


# ---------------------------------------------------------------------------
# GSL policy


@dataclass(frozen=True)
class Candidate:
    node_id: str
    range_km: float
    elevation_deg: float


class GslPolicy(Protocol):
    def choose(self, site_id: str, visible: Sequence[Candidate],
               current: Optional[str]) -> Optional[str]:
        """Pick a satellite from ``visible`` (already above the mask) or None."""


class NearestVisibleWithHysteresis:
    """Keep the current satellite while visible, else take the nearest one.

    Equal ranges are broken by the smaller node id.
    """

    def choose(self, site_id, visible, current):
        if not visible:
            return None
        if current is not None and any(c.node_id == current for c in visible):
            return current
        return min(visible, key=lambda c: (c.range_km, c.node_id)).node_id


def assign_gsls(snapshot: TopologySnapshot, t: float, policy: Optional[GslPolicy] = None,
                one_per_shell: bool = True) -> list[LinkEvent]:
    """Attach every ground site to a visible satellite; return only the changes."""
    policy = policy or NearestVisibleWithHysteresis()
    sites = [(nid, n.geometry) for nid, n in snapshot.nodes.items()
             if isinstance(n.geometry, GroundSiteSpec)]
    if not sites:
        return []
    sats = [(nid, n.geometry) for nid, n in snapshot.nodes.items()
            if isinstance(n.geometry, SatelliteElement)]
    sat_ids = np.array([nid for nid, _ in sats], dtype=object)
    sat_pos = geometry.propagate_many([g for _, g in sats], t)
    groups: dict[Optional[str], np.ndarray] = {}
    if one_per_shell:
        shell_of = np.array([g.shell_name for _, g in sats], dtype=object)
        for shell_name in sorted(set(shell_of)):
            groups[shell_name] = np.flatnonzero(shell_of == shell_name)
    else:
        groups[None] = np.arange(len(sats))

    events = []
    for site_id, site in sorted(sites):
        site_pos = geometry.ground_site_position(site, t).as_array()
        for shell_name, idx in groups.items():
            lid = gsl_link_id(site_id, shell_name)
            existing = snapshot.links.get(lid)
            current = existing.endpoint_b if existing is not None and existing.connected else None
            pos = sat_pos[idx]
            elev = geometry.elevations_deg(site_pos, pos) if len(idx) else np.zeros(0)
            ranges = np.linalg.norm(pos - site_pos, axis=1) if len(idx) else np.zeros(0)
            mask = elev >= site.min_elevation_deg
            visible = [Candidate(str(sat_ids[i]), float(r), float(e))
                       for i, r, e in zip(idx[mask], ranges[mask], elev[mask])]
            chosen = policy.choose(site_id, visible, current)
            if chosen is not None and not any(c.node_id == chosen for c in visible):
                raise ContractViolation(f"policy chose non-visible satellite {chosen}")
            if chosen is None:
                if current is not None:
                    events.append(LinkEvent("destroy", lid, t,
                                            replace(existing, state=DISCONNECTED)))
                continue
            if chosen == current:
                continue
            dist = next(c.range_km for c in visible if c.node_id == chosen)
            if existing is None:
                rec = LinkRecord(lid, site_id, chosen, "gsl", address=link_address(lid))
            else:
                rec = replace(existing, endpoint_b=chosen, state=CONNECTED)
            rec = rec.with_distance(dist)
            kind = "handover" if current is not None else "create"
            events.append(LinkEvent(kind, lid, t, rec))
    return sort_events(events)


def update_link_delays(snapshot: TopologySnapshot, t: float,
                       epsilon_ms: float = DEFAULT_DELAY_EPSILON_MS) -> list[LinkEvent]:
    """Recompute connected link delays; report only changes above epsilon."""
    pos = node_positions(snapshot, t)
    events = []
    for lid, link in snapshot.links.items():
        if not link.connected:
            continue
        pa, pb = pos.get(link.endpoint_a), pos.get(link.endpoint_b)
        if pa is None or pb is None:
            continue
        dist = float(np.linalg.norm(pa - pb))
        if abs(geometry.delay_ms(dist) - link.delay_ms) > epsilon_ms:
            events.append(LinkEvent("update_delay", lid, t, link.with_distance(dist)))
    return sort_events(events)


IslFailureModel = Callable[[LinkRecord, float], bool]


def apply_isl_failures(snapshot: TopologySnapshot, t: float,
                       failed: Optional[IslFailureModel]) -> list[LinkEvent]:
    """Disconnect ISLs the failure model marks failed; reconnect recovered ones."""
    if failed is None:
        return []
    events = []
    pos = None
    for lid, link in snapshot.links.items():
        if link.link_type not in ("intra_orbit_isl", "inter_orbit_isl"):
            continue
        down = bool(failed(link, t))
        if down and link.connected:
            events.append(LinkEvent("destroy", lid, t, replace(link, state=DISCONNECTED)))
        elif not down and not link.connected:
            if pos is None:
                pos = node_positions(snapshot, t)
            dist = float(np.linalg.norm(pos[link.endpoint_a] - pos[link.endpoint_b]))
            events.append(LinkEvent("create", lid, t,
                                    replace(link, state=CONNECTED).with_distance(dist)))
    return sort_events(events)


def gsl_elevation_violations(snapshot: TopologySnapshot, t: float) -> list[str]:
    """Connected GSLs whose satellite sits below the site's elevation mask."""
    out = []
    for lid, link in snapshot.links.items():
        if link.link_type != "gsl" or not link.connected:
            continue
        site = snapshot.nodes[link.endpoint_a].geometry
        sat = snapshot.nodes[link.endpoint_b].geometry
        elev, ok = geometry.elevation_and_visibility(
            geometry.ground_site_position(site, t),
            geometry.propagate_satellite(sat, t), site.min_elevation_deg)
        if not ok:
            out.append(f"{lid} at t={t}: elevation {elev:.3f} < {site.min_elevation_deg}")
    return out


def delay_consistency_violations(snapshot: TopologySnapshot, rel_tol: float = 1e-9) -> list[str]:
    out = []
    for lid, link in snapshot.links.items():
        if link.connected and not math.isclose(
                link.delay_ms, geometry.delay_ms(link.distance_km), rel_tol=rel_tol, abs_tol=0.0):
            out.append(f"{lid}: delay {link.delay_ms} != distance/c")
    return out


def gsl_multiplicity_violations(snapshot: TopologySnapshot) -> list[str]:
    seen: dict[tuple, str] = {}
    out = []
    for lid, link in snapshot.links.items():
        if link.link_type != "gsl" or not link.connected:
            continue
        key = (link.endpoint_a, snapshot.nodes[link.endpoint_b].geometry.shell_name)
        if key in seen:
            out.append(f"{link.endpoint_a} holds {seen[key]} and {lid} on one shell")
        seen[key] = lid
    return out


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class PathResult:
    reachable: bool
    links: tuple = ()
    nodes: tuple = ()
    delay_ms: float = math.inf


def shortest_delay_path(snapshot: TopologySnapshot, src: str, dst: str) -> PathResult:
    """Minimum total delay path over connected links."""
    for nid in (src, dst):
        if nid not in snapshot.nodes:
            raise ContractViolation(f"unknown node {nid}")
    if src == dst:
        return PathResult(True, (), (src,), 0.0)
    g = nx.Graph()
    g.add_nodes_from(snapshot.nodes)
    for lid, link in sorted(snapshot.links.items()):
        if not link.connected:
            continue
        a, b = link.endpoints
        if g.has_edge(a, b) and g[a][b]["weight"] <= link.delay_ms:
            continue
        g.add_edge(a, b, weight=link.delay_ms, link_id=lid)
    try:
        total, nodes = nx.single_source_dijkstra(g, src, dst, weight="weight")
    except nx.NetworkXNoPath:
        return PathResult(False)
    links = tuple(g[u][v]["link_id"] for u, v in zip(nodes, nodes[1:]))
    return PathResult(True, links, tuple(nodes), float(total))


# ---------------------------------------------------------------------------
# estimator-style driver

class ConstellationTopology(BaseEstimator):
    """Fit on shells and ground sites, then step the topology through time.

    ``transform(times)`` returns one snapshot per time; the GSL policy keeps
    state across those steps, so times must be non-decreasing.
    """

    def __init__(self, one_per_shell=True, delay_epsilon_ms=DEFAULT_DELAY_EPSILON_MS,
                 gsl_policy=None, isl_failure=None):
        self.one_per_shell = one_per_shell
        self.delay_epsilon_ms = delay_epsilon_ms
        self.gsl_policy = gsl_policy
        self.isl_failure = isl_failure

    def fit(self, shells, ground_sites=(), extra_nodes=(), extra_links=()):
        shells = check_shells(shells)
        sites = check_sites(ground_sites)
        nodes, links = [], []
        for spec in shells:
            elems = geometry.generate_shell(spec)
            nodes += satellite_nodes(elems)
            links += build_isl_grid(elems, star=spec.is_star)
        nodes += site_nodes(sites)
        nodes += list(extra_nodes)
        links += list(extra_links)
        self.shells_ = shells
        self.ground_sites_ = sites
        self.initial_snapshot_ = TopologySnapshot.build(0.0, nodes, links)
        return self

    def step(self, snapshot: TopologySnapshot, t: float):
        """Advance one epoch; returns (new snapshot, ordered events)."""
        check_is_fitted(self, "initial_snapshot_")
        if t < snapshot.t:
            raise ContractViolation(f"time went backwards: {t} < {snapshot.t}")
        events = []
        for stage in (
            lambda s: apply_isl_failures(s, t, self.isl_failure),
            lambda s: assign_gsls(s, t, self.gsl_policy, self.one_per_shell),
            lambda s: update_link_delays(s, t, self.delay_epsilon_ms),
        ):
            batch = stage(snapshot)
            snapshot = apply_events(snapshot, batch, t)
            events += batch
        return apply_events(snapshot, [], t), events

    def transform(self, times):
        check_is_fitted(self, "initial_snapshot_")
        snap = self.initial_snapshot_
        out = []
        for t in times:
            snap, _ = self.step(snap, float(t))
            out.append(snap)
        return out

    def snapshot_at(self, t: float, step_s: float) -> TopologySnapshot:
        """Snapshot at ``t`` after stepping the GSL policy from 0 every ``step_s``."""
        if step_s <= 0:
            raise ValidationError("step_s must be > 0", field="step_s")
        n = int(math.floor(t / step_s + 1e-9))
        times = [i * step_s for i in range(n + 1)]
        if times[-1] < t:
            times.append(t)
        return self.transform(times)[-1]
