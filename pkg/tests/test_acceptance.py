"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line; the lines are
also collected into the pytest terminal summary.

Run alone with ``python3 tests/test_acceptance.py``.
"""
import contextlib
import math
import random
import sys
import threading
import time

import numpy as np
import pytest

from _support import random_snapshot_pair
from satnet import geometry
from satnet.constants import SPEED_OF_LIGHT_KM_S
from satnet.dataplane import (
    EBPF, EGRESS, EGRESS_NIC, INGRESS, LEGACY, UP_LAYER_STACK, DataPlane, Frame,
    RedirectState, forward_frame,
)
from satnet.geometry import CONSTELLATIONS, generate_shell, propagate_satellite
from satnet.orchestrator import construct_network, deconstruct_network, run_epochs
from satnet.placement import MachineRecord, weighted_round_robin
from satnet.scenario import example_scenario
from satnet.scheduling import DEPENDENCY_AWARE, PHASE_SEPARATED, simulate_schedule, synthetic_workload
from satnet.statestore import StateStore
from satnet.topology import apply_events, diff_snapshots

RESULTS = {}


@contextlib.contextmanager
def criterion(n, title):
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        line = f"CRITERION {n} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0][:160]}"
        RESULTS[n] = line
        print(line)
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"CRITERION {n} PASS  {title} ({extra})"
    RESULTS[n] = line
    print(line)


# 1 ------------------------------------------------------------------------------

TABLE = {"iridium": 66, "oneweb": 720, "kuiper": 1156, "starlink-shell-1": 1584,
         "starlink-shell-2": 1584, "starlink-shell-3": 720, "starlink-shell-4": 348,
         "starlink-shell-5": 172}


def test_criterion_1_constellation_fidelity():
    with criterion(1, "constellation fidelity") as d:
        t0 = time.perf_counter()
        got = {name: sum(len(generate_shell(s)) for s in CONSTELLATIONS[name]) for name in TABLE}
        starlink = sum(len(generate_shell(s)) for s in CONSTELLATIONS["starlink"])
        elapsed = time.perf_counter() - t0
        d.update(rows=len(got), starlink=starlink, seconds=round(elapsed, 3))
        assert got == TABLE
        assert starlink == 4408
        assert elapsed < 1.0


# 2 ------------------------------------------------------------------------------

def test_criterion_2_geometry_invariants():
    with criterion(2, "geometry invariants") as d:
        rng = np.random.default_rng(2)
        t0 = time.perf_counter()
        worst = {"radius_rel": 0.0, "period_km": 0.0, "delay_rel": 0.0}
        for _ in range(1000):
            e = geometry.SatelliteElement("r", 0, 0, rng.uniform(0, 2 * math.pi),
                                          rng.uniform(0, 2 * math.pi), rng.uniform(6500, 8500),
                                          rng.uniform(0.01, math.pi))
            t = rng.uniform(0, 1e5)
            p = propagate_satellite(e, t)
            q = propagate_satellite(e, t + e.period_s)
            worst["radius_rel"] = max(worst["radius_rel"],
                                      abs(p.norm - e.semi_major_axis_km) / e.semi_major_axis_km)
            worst["period_km"] = max(worst["period_km"], float(np.linalg.norm(p.as_array() - q.as_array())))
            other = geometry.EcefPosition(*rng.uniform(-9000, 9000, 3), t)
            rng_km, delay = geometry.slant_range_and_delay(p, other)
            oracle = float(np.sqrt(((p.as_array() - other.as_array()) ** 2).sum())) / SPEED_OF_LIGHT_KM_S * 1e3
            worst["delay_rel"] = max(worst["delay_rel"], abs(delay - oracle) / oracle)
        elapsed = time.perf_counter() - t0
        d.update({k: f"{v:.2e}" for k, v in worst.items()}, seconds=round(elapsed, 3))
        assert worst["radius_rel"] <= 1e-6
        assert worst["period_km"] <= 1e-6
        assert worst["delay_rel"] <= 1e-9
        assert elapsed < 5.0


# 3 ------------------------------------------------------------------------------

def forwarder_oracle(direction, src, dst, map_dst, map_fwd):
    """Control flow of the point-to-point forwarder, written out case by case."""
    new_dst = map_dst[src] if src in map_dst else dst
    if src in map_fwd:
        return map_fwd[src], new_dst
    if direction == EGRESS:
        return EGRESS_NIC, new_dst
    return UP_LAYER_STACK, new_dst


def test_criterion_3_forwarder_equivalence():
    with criterion(3, "forwarder equivalence") as d:
        mismatches, cases = 0, 0
        for in_dst in (False, True):
            for in_fwd in (False, True):
                for direction in (EGRESS, INGRESS):
                    md = {"s": "rewritten"} if in_dst else {}
                    mf = {"s": "ifX"} if in_fwd else {}
                    f = Frame("s", "orig", direction)
                    got = (forward_frame(direction, f, RedirectState(md, mf)), f.dst_mac)
                    mismatches += got != forwarder_oracle(direction, "s", "orig", md, mf)
                    cases += 1
        rng = random.Random(3)
        pool = [f"02:00:00:00:00:{i:02x}" for i in range(16)]
        for _ in range(10_000):
            md = {m: rng.choice(pool) for m in rng.sample(pool, rng.randint(0, 8))}
            mf = {m: f"if{rng.randint(1, 9)}" for m in rng.sample(pool, rng.randint(0, 8))}
            src, dst, direction = rng.choice(pool), rng.choice(pool), rng.choice([EGRESS, INGRESS])
            f = Frame(src, dst, direction)
            got = (forward_frame(direction, f, RedirectState(md, mf)), f.dst_mac)
            mismatches += got != forwarder_oracle(direction, src, dst, md, mf)
        d.update(table_cases=cases, random_frames=10_000, mismatches=mismatches)
        assert cases == 8 and mismatches == 0


# 4 ------------------------------------------------------------------------------

def straight_line_trace(weights, n):
    """Weighted round robin by hand: counters per machine, wrapping cursor."""
    weight_left = list(weights)
    i = 0
    owner = []
    for _ in range(n):
        owner.append(i)
        weight_left[i] = weight_left[i] - 1
        if weight_left[i] == 0:
            weight_left[i] = weights[i]
            i = i + 1
            if i == len(weights):
                i = 0
    return owner, weight_left, i


def test_criterion_4_placement():
    with criterion(4, "placement") as d:
        rng = random.Random(4)
        worst_slack = math.inf
        for _ in range(200):
            weights = [rng.randint(1, 10) for _ in range(rng.randint(1, 8))]
            n = rng.randint(0, 500)
            ids = [f"i{j:04d}" for j in range(n)]
            res = weighted_round_robin([MachineRecord(k, w) for k, w in enumerate(weights)], ids)
            owner, left, cursor = straight_line_trace(weights, n)
            assert [res.machine_of_instance[x] for x in ids] == owner
            assert (list(res.weight_left_list), res.cursor) == (left, cursor)
            W = sum(weights)
            for k, w in enumerate(weights):
                dev = abs(len(res.instances_by_machine[k]) - n * w / W)
                assert dev <= w
                worst_slack = min(worst_slack, w - dev)
        d.update(cases=200, min_bound_slack=round(worst_slack, 3))


# 5 ------------------------------------------------------------------------------

def run_handovers(mode, count, seed):
    rng = random.Random(seed)
    dp = DataPlane([MachineRecord(i) for i in range(3)])
    ground = dp.add_interface("gs", 0)
    sats = [dp.add_interface(f"sat{k}", rng.randrange(3)) for k in range(12)]
    dp.create_link(mode, ground, sats[0], link_id="gsl")
    current = sats[0]
    results = []
    for _ in range(count):
        nxt = rng.choice([s for s in sats if s is not current])
        res = dp.handover("gsl", nxt)
        assert dp.send(res.kept_after) == [nxt.interface_id]
        results.append(res)
        current = nxt
    return results


def test_criterion_5_handover_efficiency():
    with criterion(5, "handover efficiency proxy") as d:
        ebpf = run_handovers(EBPF, 1000, 5)
        legacy = run_handovers(LEGACY, 1000, 5)
        ebpf_dev = sum(o["device_creates"] + o["device_deletes"] for r in ebpf for o in r.ops.values())
        ebpf_max_maps = max(o["map_updates"] for r in ebpf for o in r.ops.values())
        legacy_min_dev = min(sum(o["device_creates"] + o["device_deletes"] for o in r.ops.values())
                             for r in legacy)
        ebpf_kept = all(r.kept_before == r.kept_after for r in ebpf)
        legacy_kept = any(r.kept_before == r.kept_after for r in legacy)
        d.update(handovers=len(ebpf), ebpf_device_ops=ebpf_dev,
                 ebpf_max_map_updates_per_machine=ebpf_max_maps,
                 legacy_min_device_ops=legacy_min_dev)
        assert ebpf_dev == 0
        assert ebpf_max_maps <= 2
        assert legacy_min_dev >= 2
        assert ebpf_kept and not legacy_kept


# 6 ------------------------------------------------------------------------------

def test_criterion_6_scheduling():
    with criterion(6, "dependency-aware scheduling") as d:
        checked = strict = 0
        for n in range(3, 41):
            tasks = synthetic_workload(n)
            for p in range(1, n + 5):
                dep = simulate_schedule(tasks, p, DEPENDENCY_AWARE).makespan
                phase = simulate_schedule(tasks, p, PHASE_SEPARATED).makespan
                assert dep <= phase, (n, p, dep, phase)
                if p < n:
                    assert dep < phase, (n, p, dep, phase)
                    strict += 1
                checked += 1
        d.update(configurations=checked, strict_cases=strict)


# 7 ------------------------------------------------------------------------------

def test_criterion_7_statestore():
    with criterion(7, "statestore concurrency") as d:
        store = StateStore()
        prefixes = ["", "links/", "nodes/", "links/k1"]
        watchers = [store.watch(p, from_revision=1) for p in prefixes]
        received = [[] for _ in watchers]
        done = threading.Event()

        def consume(idx):
            w = watchers[idx]
            while True:
                ev = w.get(timeout=0.05)
                if ev is not None:
                    received[idx].append(ev)
                elif done.is_set():
                    received[idx].extend(w.drain())
                    return

        per_writer = 3000
        returned = [[] for _ in range(4)]

        def write(idx):
            rng = random.Random(idx)
            for _ in range(per_writer):
                key = f"{rng.choice(['links', 'nodes'])}/k{rng.randint(0, 15)}"
                if rng.random() < 0.2:
                    store.delete(key)
                    returned[idx].append(None)
                else:
                    returned[idx].append(store.put(key, {"w": idx, "v": rng.random()}))

        consumers = [threading.Thread(target=consume, args=(i,)) for i in range(len(watchers))]
        writers = [threading.Thread(target=write, args=(i,)) for i in range(4)]
        for t in consumers + writers:
            t.start()
        for t in writers:
            t.join()
        done.set()
        for t in consumers:
            t.join()

        log = store.history()
        violations = 0
        # revisions form one gap-free total order
        violations += [e.revision for e in log] != list(range(1, len(log) + 1))
        for idx, prefix in enumerate(prefixes):
            want = [e for e in log if e.key.startswith(prefix)]
            violations += received[idx] != want
            last = {}
            for ev in received[idx]:
                violations += ev.revision <= last.get(ev.key, 0)
                last[ev.key] = ev.revision
        for revs in returned:
            seen = [r for r in revs if r is not None]
            violations += any(a >= b for a, b in zip(seen, seen[1:]))
        # final state equals a replay of the log
        replay = {}
        for e in log:
            if e.kind == "put":
                replay[e.key] = e.decoded()
            else:
                replay.pop(e.key, None)
        live = {k: v for k, v, _ in store.get_prefix("")}
        violations += replay != live
        d.update(writers=4, watchers=len(watchers), ops=4 * per_writer, revisions=len(log),
                 violations=violations)
        assert 4 * per_writer >= 10_000
        assert violations == 0


# 8 ------------------------------------------------------------------------------

def elevation_oracle(site_xyz, sat_xyz):
    los = sat_xyz - site_xyz
    cos_zenith = np.dot(los, site_xyz) / (np.linalg.norm(los) * np.linalg.norm(site_xyz))
    return 90.0 - math.degrees(math.acos(max(-1.0, min(1.0, cos_zenith))))


def test_criterion_8_end_to_end_iridium():
    with criterion(8, "end-to-end Iridium") as d:
        sc = example_scenario("iridium", duration_s=3600, epoch_step_s=10)
        assert len(sc.ground_sites) == 2 and sc.shells[0].total_satellites == 66
        t0 = time.perf_counter()
        env, construction = construct_network(sc.config, sc)
        result = run_epochs(env)
        elapsed = time.perf_counter() - t0
        deconstruct_network(env)

        # walk the event log epoch by epoch and recheck every connected GSL
        snap = result.initial_snapshot
        by_t = {}
        for ev in result.events:
            by_t.setdefault(ev.t, []).append(ev)
        below_mask = 0
        epochs = sorted(e["t"] for e in result.report["epochs"])
        for t in epochs:
            snap = apply_events(snap, by_t.get(t, []), t)
            for link in snap.links.values():
                if link.link_type == "gsl" and link.connected:
                    site = snap.nodes[link.endpoint_a].geometry
                    sat = snap.nodes[link.endpoint_b].geometry
                    el = elevation_oracle(geometry.ground_site_position(site, t).as_array(),
                                          propagate_satellite(sat, t).as_array())
                    below_mask += el < site.min_elevation_deg - 1e-9
        handovers = result.report["event_totals"]["handover"]
        exact = snap.canonical() == result.final_snapshot.canonical()
        d.update(epochs=len(epochs), seconds=round(elapsed, 2), handovers=handovers,
                 below_mask=below_mask, replay_exact=exact)
        assert len(epochs) == 361
        assert elapsed < 10.0
        assert below_mask == 0 and result.report["violations"] == []
        assert handovers >= 1
        assert exact


# 9 ------------------------------------------------------------------------------

def test_criterion_9_diff_replay():
    with criterion(9, "diff/replay round trip") as d:
        identical = 0
        n_events = 0
        for seed in range(100):
            prev, nxt = random_snapshot_pair(1000 + seed)
            events = diff_snapshots(prev, nxt)
            n_events += len(events)
            identical += apply_events(prev, events, nxt.t).canonical() == nxt.canonical()
        d.update(pairs=100, identical=identical, events=n_events)
        assert identical == 100


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
