"""Discrete-clock simulation of construction schedules.

Node tasks are heavy and run on a per-machine pool of ``parallel_num``
workers; link tasks are light and are drained from the waiting pool by a
separate per-machine link worker (``link_parallel``, one by default). A
link task depends on its two endpoint node tasks. Two release strategies
are modelled:

* ``dependency_aware``: a link enters the waiting pool's ready queue the
  tick both endpoints finish.
* ``phase_separated``: links are released only after every node task has
  finished.

Link-state commands injected at a tick go to the head of their machine's
queue: nothing else starts on that machine until they have started.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from satnet.errors import ValidationError

NODE = "node"
LINK = "link"
COMMAND = "command"

DEPENDENCY_AWARE = "dependency_aware"
PHASE_SEPARATED = "phase_separated"

DONE = "done"
FAILED = "failed"
BLOCKED = "blocked"
NOT_STARTED = "not_started"


@dataclass(frozen=True)
class Task:
    task_id: str
    kind: str
    machine: int = 0
    cost: int = 1
    deps: tuple = ()
    issue_tick: int = 0  # commands only


@dataclass
class TaskRecord:
    task_id: str
    kind: str
    machine: int
    status: str = NOT_STARTED
    start: Optional[int] = None
    finish: Optional[int] = None
    seq: Optional[int] = None  # global start order

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "kind": self.kind, "machine": self.machine,
                "status": self.status, "start": self.start, "finish": self.finish,
                "seq": self.seq}


@dataclass
class ScheduleTrace:
    strategy: str
    parallel_num: int
    records: dict = field(default_factory=dict)
    aborted: bool = False
    peak_heavy: dict = field(default_factory=dict)  # machine -> max concurrent node tasks

    @property
    def makespan(self) -> int:
        return max((r.finish for r in self.records.values() if r.finish is not None), default=0)

    def by_status(self, status: str) -> list[str]:
        return sorted(t for t, r in self.records.items() if r.status == status)

    def completion_order(self) -> list[TaskRecord]:
        done = [r for r in self.records.values() if r.status == DONE]
        return sorted(done, key=lambda r: (r.finish, r.seq))

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "parallel_num": self.parallel_num,
            "makespan": self.makespan,
            "aborted": self.aborted,
            "peak_heavy": {str(k): v for k, v in sorted(self.peak_heavy.items())},
            "tasks": [r.to_dict() for r in sorted(
                self.records.values(),
                key=lambda r: (r.start is None, r.start or 0, r.seq or 0, r.task_id))],
        }


def check_task_graph(tasks: Sequence[Task]) -> None:
    """Construction graphs: links depend on exactly two distinct node tasks,
    nodes and commands depend on nothing."""
    ids = {}
    for t in tasks:
        if t.task_id in ids:
            raise ValidationError(f"duplicate task id {t.task_id}", field="task_id")
        if t.cost < 1:
            raise ValidationError(f"task {t.task_id} cost must be >= 1", field="cost")
        ids[t.task_id] = t
    for t in tasks:
        if t.kind == LINK and (len(set(t.deps)) != 2 or any(
                ids.get(d) is None or ids[d].kind != NODE for d in t.deps)):
            raise ValidationError(f"link task {t.task_id} must depend on two node tasks",
                                  field="deps")
        if t.kind in (NODE, COMMAND) and t.deps:
            raise ValidationError(f"{t.kind} task {t.task_id} cannot have dependencies",
                                  field="deps")


def simulate_schedule(tasks: Sequence[Task], parallel_num: int,
                      strategy: str = DEPENDENCY_AWARE,
                      fail: Iterable[str] = (),
                      link_parallel: Optional[int] = None,
                      check: bool = True) -> ScheduleTrace:
    """Run the task graph on the simulated clock and return the full trace.

    A task in ``fail`` fails on completion; the run then aborts: running
    tasks finish, nothing new starts, and links depending on a failed node
    are reported as blocked.
    """
    if parallel_num < 1:
        raise ValidationError("parallel_num must be >= 1", field="parallel_num")
    if strategy not in (DEPENDENCY_AWARE, PHASE_SEPARATED):
        raise ValidationError(f"unknown strategy {strategy!r}", field="strategy")
    if check:
        check_task_graph(tasks)
    link_parallel = link_parallel or 1
    fail = set(fail)
    trace = ScheduleTrace(strategy, parallel_num)
    order = {t.task_id: i for i, t in enumerate(tasks)}
    by_id = {t.task_id: t for t in tasks}
    machines = sorted({t.machine for t in tasks})
    for t in tasks:
        trace.records[t.task_id] = TaskRecord(t.task_id, t.kind, t.machine)
    trace.peak_heavy = dict.fromkeys(machines, 0)

    dependents: dict[str, list[str]] = {}
    waiting = {}
    for t in tasks:
        if t.deps:
            waiting[t.task_id] = len(set(t.deps))
            for d in set(t.deps):
                dependents.setdefault(d, []).append(t.task_id)
    nodes_left = sum(1 for t in tasks if t.kind == NODE)
    held_links: list[str] = []  # phase-separated: links whose deps are done

    commands = sorted((t for t in tasks if t.kind == COMMAND),
                      key=lambda t: (t.issue_tick, order[t.task_id]))
    cmd_q = {m: deque() for m in machines}
    light_q = {m: deque() for m in machines}
    heavy_q = {m: deque(t.task_id for t in tasks
                        if t.kind == NODE and t.machine == m and not t.deps)
               for m in machines}
    light_initial = [t.task_id for t in tasks if t.kind == LINK and not t.deps]
    busy_heavy = dict.fromkeys(machines, 0)
    busy_light = dict.fromkeys(machines, 0)
    running: list[tuple] = []  # (finish, seq, task_id, pool)
    seq = 0
    now = 0
    ci = 0

    def start(task_id, pool):
        nonlocal seq
        t = by_id[task_id]
        rec = trace.records[task_id]
        rec.start, rec.finish, rec.seq = now, now + t.cost, seq
        seq += 1
        heapq.heappush(running, (rec.finish, rec.seq, task_id, pool))
        if pool == "heavy":
            busy_heavy[t.machine] += 1
            trace.peak_heavy[t.machine] = max(trace.peak_heavy[t.machine], busy_heavy[t.machine])
        else:
            busy_light[t.machine] += 1

    while True:
        newly_ready = []
        while running and running[0][0] == now:
            _, _, task_id, pool = heapq.heappop(running)
            t = by_id[task_id]
            (busy_heavy if pool == "heavy" else busy_light)[t.machine] -= 1
            rec = trace.records[task_id]
            if task_id in fail:
                rec.status = FAILED
                trace.aborted = True
                continue
            rec.status = DONE
            if t.kind == NODE:
                nodes_left -= 1
            for dep in dependents.get(task_id, ()):
                waiting[dep] -= 1
                if waiting[dep] == 0:
                    newly_ready.append(dep)
        if now == 0:
            newly_ready += light_initial
        newly_ready.sort(key=order.get)
        for tid in newly_ready:
            if by_id[tid].kind == NODE:
                heavy_q[by_id[tid].machine].append(tid)
        newly_ready = [tid for tid in newly_ready if by_id[tid].kind == LINK]
        if strategy == DEPENDENCY_AWARE:
            for lid in newly_ready:
                light_q[by_id[lid].machine].append(lid)
        else:
            held_links.extend(newly_ready)
            if nodes_left == 0 and not trace.aborted:
                for lid in sorted(held_links, key=order.get):
                    light_q[by_id[lid].machine].append(lid)
                held_links.clear()
        while ci < len(commands) and commands[ci].issue_tick <= now:
            cmd_q[commands[ci].machine].append(commands[ci].task_id)
            ci += 1

        for m in machines:
            # head-of-queue: pending commands take the next free worker of either pool
            while cmd_q[m]:
                if busy_light[m] < link_parallel:
                    start(cmd_q[m].popleft(), "light")
                elif busy_heavy[m] < parallel_num:
                    start(cmd_q[m].popleft(), "heavy")
                else:
                    break
            if cmd_q[m] or trace.aborted:
                continue
            while light_q[m] and busy_light[m] < link_parallel:
                start(light_q[m].popleft(), "light")
            while heavy_q[m] and busy_heavy[m] < parallel_num:
                start(heavy_q[m].popleft(), "heavy")

        upcoming = [running[0][0]] if running else []
        if ci < len(commands):
            upcoming.append(max(commands[ci].issue_tick, now + 1))
        if not upcoming:
            break
        now = min(upcoming)

    failed = {tid for tid, r in trace.records.items() if r.status == FAILED}
    for tid, rec in trace.records.items():
        if rec.status == NOT_STARTED and failed & set(by_id[tid].deps):
            rec.status = BLOCKED
    return trace


def synthetic_workload(n_nodes: int, node_cost: int = 10, link_cost: int = 1,
                       machine: int = 0) -> list[Task]:
    """``n_nodes`` heavy node tasks wired as a ring of ``n_nodes`` light links."""
    if n_nodes < 3:
        raise ValidationError("a ring workload needs at least 3 nodes", field="n_nodes")
    nodes = [Task(f"node{i:04d}", NODE, machine, node_cost) for i in range(n_nodes)]
    links = [Task(f"link{i:04d}", LINK, machine, link_cost,
                  (f"node{i:04d}", f"node{(i + 1) % n_nodes:04d}")) for i in range(n_nodes)]
    return nodes + links
