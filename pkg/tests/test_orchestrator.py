import json

import pytest

from satnet import orchestrator
from satnet.errors import ContractViolation, ValidationError
from satnet.geometry import ShellSpec
from satnet.orchestrator import (
    EmulationConfig,
    MachineApplier,
    construct_network,
    deconstruct_network,
    epoch_times,
    launch_applications,
    run_epochs,
)
from satnet.placement import MachineRecord
from satnet.scenario import ScenarioFile, example_scenario
from satnet.scheduling import COMMAND, Task
from satnet.statestore import ApplicationRecord


def iridium(machines=1, duration=3600.0, **cfg):
    sc = example_scenario("iridium", machines=machines, duration_s=duration)
    if cfg:
        sc = ScenarioFile(sc.shells, sc.machines, sc.ground_sites, sc.apps,
                          EmulationConfig(**{**sc.config.to_dict(), **cfg}), name=sc.name)
    return sc


def full_run(scenario, seed=0):
    env, construction = construct_network(scenario.config, scenario, seed=seed)
    result = run_epochs(env)
    return env, construction, result


@pytest.fixture(scope="module")
def iridium_run():
    sc = iridium()
    env, construction, result = full_run(sc)
    links, nodes = len(env.dataplane.links), len(env.created_nodes)
    teardown = deconstruct_network(env)
    return sc, env, construction, result, links, nodes, teardown


# -- configuration ------------------------------------------------------------

def test_config_defaults_and_servant_flag():
    import os
    assert EmulationConfig().parallel_num == (os.cpu_count() or 1)
    assert EmulationConfig.from_dict({"is_servant": True}).is_leader is False
    assert EmulationConfig.from_dict({"is_servant": False}).is_leader is True
    with pytest.raises(ValidationError):
        EmulationConfig.from_dict({"is_servant": True, "is_leader": True})


@pytest.mark.parametrize("kwargs,field", [
    ({"parallel_num": 0}, "parallel_num"),
    ({"epoch_step_s": 0}, "epoch_step_s"),
    ({"duration_s": -1}, "duration_s"),
    ({"link_mode": "veth"}, "link_mode"),
    ({"isl_failure_prob": 2}, "isl_failure_prob"),
])
def test_config_validation(kwargs, field):
    with pytest.raises(ValidationError) as err:
        EmulationConfig(**kwargs)
    assert err.value.field == field


def test_epoch_clock():
    assert epoch_times(10, 0) == [0.0]
    assert epoch_times(10, 60) == [0, 10, 20, 30, 40, 50, 60]
    assert len(epoch_times(10, 3600)) == 361
    assert epoch_times(0.1, 0.3)[-1] == pytest.approx(0.3)


# -- construction -------------------------------------------------------------

def test_construction_report(iridium_run):
    sc, env, construction, *_ = iridium_run
    assert not construction["aborted"]
    assert construction["nodes_created"] == 68
    assert construction["links_created"] == 121
    assert int(construction["peak_heavy"]["0"]) <= sc.config.parallel_num
    by_id = {t["task_id"]: t for t in construction["timeline"]}
    for lid, rec in env.initial_snapshot.links.items():
        t = by_id[f"link:{lid}"]
        for end in rec.endpoints:
            assert t["start"] >= by_id[f"node:{end}"]["finish"]


def test_placement_published_to_store():
    sc = iridium(machines=3, duration=0)
    env, report = construct_network(sc.config, sc)
    for nid, node in env.snapshot.nodes.items():
        stored = env.store.get(f"nodes/{nid}").value
        assert stored["machine_index"] == env.placement.machine_of_instance[nid]
    assert report["placement"]["inter_machine_links"] > 0
    assert sorted(int(k) for k in report["placement"]["instances_per_machine"]) == [0, 1, 2]


def test_node_type_profiles_are_metadata():
    sc = iridium(duration=0)
    sc = ScenarioFile(sc.shells, sc.machines, sc.ground_sites, (), sc.config,
                      {"satellite": {"image": "sat:1", "resource_limit": {"cpu": 0.5}}})
    env, _ = construct_network(sc.config, sc)
    ud = env.snapshot.nodes["sat-iridium-000-000"].user_defined
    assert ud["profile.image"] == "sat:1"


def test_failed_node_aborts_and_partial_teardown():
    sc = iridium(duration=0, fail_nodes=("sat-iridium-000-000",), parallel_num=2)
    env, report = construct_network(sc.config, sc)
    assert report["aborted"]
    assert report["failed"] == ["node:sat-iridium-000-000"]
    assert "link:isl-sat-iridium-000-000-sat-iridium-000-001" in report["blocked"]
    created_links, created_nodes = len(env.dataplane.links), len(env.created_nodes)
    assert 0 < created_nodes < 68
    with pytest.raises(ContractViolation):
        run_epochs(env)
    down = deconstruct_network(env)
    assert (down["links_destroyed"], down["nodes_destroyed"]) == (created_links, created_nodes)
    again = deconstruct_network(env)
    assert (again["links_destroyed"], again["nodes_destroyed"], again["timeline"]) == (0, 0, [])


def test_command_priority_during_construction():
    sc = iridium(duration=0, parallel_num=2)
    cmd = Task("cmd:gsl", COMMAND, 0, 1, issue_tick=15)
    env, report = construct_network(sc.config, sc, commands=[cmd])
    tl = report["timeline"]
    c = next(t for t in tl if t["task_id"] == "cmd:gsl")
    for t in tl:
        if t["machine"] == 0 and t["task_id"] != "cmd:gsl" and t["start"] is not None \
                and t["start"] >= c["start"]:
            assert t["seq"] > c["seq"]


# -- epochs -------------------------------------------------------------------

def test_static_ring_has_no_events():
    sc = ScenarioFile((ShellSpec("ring", 550, 1, 8, 53),), (MachineRecord(0, 8),),
                      config=EmulationConfig(duration_s=600, parallel_num=2))
    _, _, result = full_run(sc)
    assert result.ok
    assert all(e["create"] + e["destroy"] + e["handover"] + e["update_delay"] == 0
               for e in result.report["epochs"])


def test_duration_zero_runs_one_epoch():
    _, _, result = full_run(iridium(duration=0))
    assert result.report["epoch_count"] == 1
    assert [e["t"] for e in result.report["epochs"]] == [0.0]


def test_iridium_invariants(iridium_run):
    _, _, _, result, *_ = iridium_run
    rep = result.report
    assert rep["violations"] == []
    assert rep["event_totals"]["handover"] > 0
    assert all(a["ordered"] for a in rep["appliers"].values())
    for h in rep["handover_log"]:
        assert h["ground_interface_before"] == h["ground_interface_after"]
        assert all(o["device_creates"] == o["device_deletes"] == 0 for o in h["ops"].values())
        assert all(o["map_updates"] <= 2 for o in h["ops"].values())


def test_run_replays_to_final_snapshot(iridium_run):
    from satnet.topology import apply_events
    _, _, _, result, *_ = iridium_run
    replayed = apply_events(result.initial_snapshot, result.events, result.final_snapshot.t)
    assert replayed.canonical() == result.final_snapshot.canonical()


def test_deconstruction_inventory(iridium_run):
    *_, links, nodes, teardown = iridium_run
    assert teardown["links_destroyed"] == links
    assert teardown["nodes_destroyed"] == nodes == 68
    assert teardown["links_before_nodes"]
    assert all(v <= 4 for v in map(int, teardown["peak_heavy"].values()))


def test_run_is_deterministic():
    sc = iridium(machines=2, duration=300)
    reports = []
    for _ in range(2):
        _, _, result = full_run(sc, seed=3)
        reports.append(json.dumps(result.report, sort_keys=True))
    assert reports[0] == reports[1]


@pytest.mark.parametrize("mode", ["legacy", "ebpf"])
def test_multi_machine_modes(mode):
    _, _, result = full_run(iridium(machines=3, duration=900, link_mode=mode))
    rep = result.report
    assert rep["violations"] == []
    assert rep["event_totals"]["handover"] >= 1
    for h in rep["handover_log"]:
        same = h["ground_interface_before"] == h["ground_interface_after"]
        assert same == (mode == "ebpf")
    if mode == "legacy":
        assert rep["counters"]["total.encapsulations"] > 0
    else:
        assert rep["counters"]["total.encapsulations"] == 0
        assert rep["counters"]["total.mac_rewrites"] > 0


def test_isl_failures_are_replayed_to_data_plane():
    _, _, result = full_run(iridium(duration=300, isl_failure_prob=0.05), seed=11)
    assert result.ok
    isl_downs = [e for e in result.events if e.kind == "destroy" and e.link_id.startswith("isl-")]
    assert isl_downs


def test_stale_watch_triggers_resync():
    env, _ = construct_network(iridium(duration=0).config, iridium(duration=0))
    env.store.compact(env.store.revision)
    victim = sorted(env.dataplane.links)[0]
    env.dataplane.destroy_link(victim)
    applier = MachineApplier(env, 0, from_revision=1)
    assert applier.resyncs == 1
    assert victim in env.dataplane.links
    env.store.put("links/probe", {"event": "update_delay", "t": 0.0,
                                  "record": env.snapshot.links[victim].to_dict()})
    assert applier.pump() == 1


# -- applications -------------------------------------------------------------

def apps(*specs):
    return [ApplicationRecord(a, n, t) for a, n, t in specs]


def test_launch_at_first_epoch():
    log = launch_applications(apps(("a", "x", 0.0)), [0.0, 10.0])
    assert log["launched"] == [{"t": 0.0, "app_id": "a", "node_id": "x"}]


def test_same_timestamp_ordered_by_id():
    log = launch_applications(apps(("b", "x", 5.0), ("a", "y", 5.0), ("c", "x", 1.0)),
                              [0.0, 10.0])
    assert [(e["app_id"], e["t"]) for e in log["launched"]] == [("c", 10.0), ("a", 10.0),
                                                               ("b", 10.0)]


def test_launch_beyond_duration_reported():
    log = launch_applications(apps(("late", "x", 99.0)), [0.0, 10.0])
    assert log == {"launched": [], "never_launched": ["late"]}


def test_unknown_node_rejected():
    with pytest.raises(ValidationError):
        launch_applications(apps(("a", "ghost", 0.0)), [0.0], known_nodes={"x"})


def test_apps_launch_inside_run():
    sc = iridium(duration=60)
    sc = ScenarioFile(sc.shells, sc.machines, sc.ground_sites,
                      tuple(apps(("probe", "gs-svalbard", 25.0), ("late", "gs-svalbard", 1e6))),
                      sc.config)
    env, _, result = full_run(sc)
    launch = result.report["launch_log"]
    assert launch["launched"] == [{"t": 30.0, "app_id": "probe", "node_id": "gs-svalbard"}]
    assert launch["never_launched"] == ["late"]
    assert env.store.get("apps/probe").value["launched_at"] == 30.0


def test_preflight_checklist():
    text = orchestrator.preflight_checklist(EmulationConfig(interface_name="ens5", is_leader=False))
    assert "ens5" in text and "follower" in text
