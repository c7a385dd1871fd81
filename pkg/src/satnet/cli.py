"""Command line front end: ``satnet <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from satnet import orchestrator
from satnet.errors import SatnetError
from satnet.geometry import CONSTELLATIONS
from satnet.placement import MachineRecord
from satnet.scenario import example_scenario, parse_scenario
from satnet.serialization import canonical_json
from satnet.topology import ConstellationTopology, events_to_jsonl, shortest_delay_path

log = logging.getLogger("satnet")

BACKENDS = ("model",)


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_generate(args) -> int:
    names = sorted(CONSTELLATIONS) if args.constellation == "all" else [args.constellation]
    if len(names) > 1 and not args.out_dir:
        raise SatnetError("--constellation all needs --out-dir")
    for name in names:
        sc = example_scenario(name, machines=args.machines, duration_s=args.duration,
                              epoch_step_s=args.step, parallel_num=args.parallel_num)
        text = _dump(sc.to_dict())
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            _write(text, Path(args.out_dir) / f"{name}.json")
        else:
            _write(text, args.out)
    return 0


def _build(args):
    scenario = parse_scenario(args.scenario)
    return scenario, *orchestrator.construct_network(scenario.config, scenario, seed=args.seed)


def cmd_build(args) -> int:
    scenario, env, report = _build(args)
    if args.state:
        _write(_dump({"scenario": str(args.scenario), "seed": args.seed,
                      "inventory": env.inventory()}), args.state)
    _write(_dump({"construction": report}), args.out)
    return 1 if report["aborted"] else 0


def cmd_run(args) -> int:
    scenario, env, construction = _build(args)
    if construction["aborted"]:
        deconstruction = orchestrator.deconstruct_network(env)
        _write(_dump({"construction": construction, "deconstruction": deconstruction}), args.out)
        return 1
    result = orchestrator.run_epochs(env)
    deconstruction = orchestrator.deconstruct_network(env)
    report = {"scenario": scenario.name, "construction": construction, "run": result.report,
              "deconstruction": deconstruction}
    if args.events:
        Path(args.events).write_text(events_to_jsonl(result.events))
    _write(_dump(report), args.out)
    for v in result.report["violations"][:20]:
        log.error("invariant violation: %s", v)
    return 0 if result.ok else 1


def cmd_destroy(args) -> int:
    """Rebuild the inventory recorded by ``build --state`` and tear it down."""
    state = json.loads(Path(args.state).read_text())
    scenario = parse_scenario(state["scenario"])
    env, _ = orchestrator.construct_network(scenario.config, scenario, seed=state.get("seed", 0))
    want_nodes = set(state["inventory"]["nodes"])
    want_links = set(state["inventory"]["links"])
    if set(env.created_nodes) != want_nodes or set(env.dataplane.links) != want_links:
        raise SatnetError("scenario no longer reproduces the recorded inventory")
    _write(_dump({"deconstruction": orchestrator.deconstruct_network(env)}), args.out)
    return 0


def cmd_metrics(args) -> int:
    report = json.loads(Path(args.report).read_text())
    run = report.get("run", report)
    if "counters" not in run:
        raise SatnetError(f"{args.report} has no counter snapshot")
    metrics = dict(run["counters"])
    metrics.update({f"events.{k}": v for k, v in run.get("event_totals", {}).items()})
    metrics["epochs"] = run.get("epoch_count", 0)
    metrics["violations"] = len(run.get("violations", []))
    _write(canonical_json(dict(sorted(metrics.items()))), args.out)
    return 0


def cmd_path(args) -> int:
    scenario = parse_scenario(args.scenario)
    topo = ConstellationTopology(
        one_per_shell=scenario.config.one_per_shell,
        delay_epsilon_ms=scenario.config.delay_epsilon_ms,
        isl_failure=orchestrator.isl_failure_model(args.seed, scenario.config.isl_failure_prob),
    ).fit(scenario.shells, scenario.ground_sites)
    snap = topo.snapshot_at(args.t, scenario.config.epoch_step_s)
    res = shortest_delay_path(snap, args.src, args.dst)
    _write(_dump({"src": args.src, "dst": args.dst, "t": args.t, "reachable": res.reachable,
                  "delay_ms": res.delay_ms if res.reachable else None,
                  "nodes": list(res.nodes), "links": list(res.links)}), args.out)
    return 0 if res.reachable else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satnet", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="fixes every random choice")
    p.add_argument("--backend", choices=BACKENDS, default="model")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("generate", help="write an example scenario")
    g.add_argument("--constellation", default="iridium",
                   choices=sorted(CONSTELLATIONS) + ["all"])
    g.add_argument("--machines", type=int, default=1)
    g.add_argument("--duration", type=float, default=3600.0)
    g.add_argument("--step", type=float, default=10.0)
    g.add_argument("--parallel-num", type=int, default=4)
    g.add_argument("--out", default="-")
    g.add_argument("--out-dir")
    g.set_defaults(func=cmd_generate)

    b = sub.add_parser("build", help="construct the network and report the schedule")
    b.add_argument("scenario")
    b.add_argument("--out", default="-")
    b.add_argument("--state", help="write the created inventory for a later destroy")
    b.set_defaults(func=cmd_build)

    r = sub.add_parser("run", help="construct, run every epoch, deconstruct")
    r.add_argument("scenario")
    r.add_argument("--out", default="-")
    r.add_argument("--events", help="write the link event log as JSON lines")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("destroy", help="deconstruct an inventory written by build --state")
    d.add_argument("state")
    d.add_argument("--out", default="-")
    d.set_defaults(func=cmd_destroy)

    m = sub.add_parser("metrics", help="export the counter snapshot of a run report")
    m.add_argument("report")
    m.add_argument("--out", default="-")
    m.set_defaults(func=cmd_metrics)

    q = sub.add_parser("path", help="shortest-delay path at a timestamp")
    q.add_argument("scenario")
    q.add_argument("--src", required=True)
    q.add_argument("--dst", required=True)
    q.add_argument("--t", type=float, default=0.0)
    q.add_argument("--out", default="-")
    q.set_defaults(func=cmd_path)
    return p


def run_command(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SATNET_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SatnetError as exc:
        print(f"satnet: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
