"""Weighted round-robin assignment of node instances and links to machines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from satnet._validation import check_is_fitted, check_positive_int
from satnet.errors import ContractViolation, ValidationError

INTRA_MACHINE = "intra_machine"
INTER_MACHINE = "inter_machine"


@dataclass(frozen=True)
class MachineRecord:
    machine_index: int
    weight: int = 1
    nic_ip: str = ""
    nic_mac: str = ""

    def __post_init__(self):
        check_positive_int(self.machine_index, "machine_index", minimum=0)
        check_positive_int(self.weight, "weight")

    def to_dict(self) -> dict:
        return {"machine_index": self.machine_index, "weight": self.weight,
                "nic_ip": self.nic_ip, "nic_mac": self.nic_mac}


@dataclass(frozen=True)
class PlacementResult:
    instances_by_machine: dict
    links_by_machine: dict
    weight_list: tuple
    weight_left_list: tuple
    cursor: int
    machine_of_instance: dict = field(repr=False, default_factory=dict)
    machine_of_link: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "instances_by_machine": {str(k): list(v) for k, v in self.instances_by_machine.items()},
            "links_by_machine": {str(k): list(v) for k, v in self.links_by_machine.items()},
            "weight_list": list(self.weight_list),
            "weight_left_list": list(self.weight_left_list),
            "cursor": self.cursor,
        }


def check_machines(machines: Sequence[MachineRecord]) -> list[MachineRecord]:
    machines = list(machines)
    if not machines:
        raise ValidationError("at least one machine is required", field="machines")
    idx = [m.machine_index for m in machines]
    if idx != list(range(len(machines))):
        raise ValidationError(f"machine indices must be dense from 0, got {idx}",
                              field="machines")
    return machines


def _endpoints(link):
    if isinstance(link, Mapping):
        return link["link_id"], (link["endpoint_a"], link["endpoint_b"])
    return link.link_id, (link.endpoint_a, link.endpoint_b)


def weighted_round_robin(machines: Sequence[MachineRecord], instances: Iterable[str],
                         links: Iterable = ()) -> PlacementResult:
    """Assign instances (sorted by id) to machines in weighted round-robin order.

    Each link goes to the machine that receives its first endpoint and is
    then removed from the unassigned set. The machine cursor wraps around.
    """
    machines = check_machines(machines)
    instances = sorted(set(instances))
    unassigned: dict[str, list[str]] = {}
    for link in links:
        lid, (a, b) = _endpoints(link)
        unassigned.setdefault(a, []).append(lid)
        unassigned.setdefault(b, []).append(lid)
    consumed: set[str] = set()

    weight_list = [m.weight for m in machines]
    weight_left = [m.weight for m in machines]
    i = 0
    by_machine = {m.machine_index: [] for m in machines}
    links_by_machine = {m.machine_index: [] for m in machines}
    machine_of_instance, machine_of_link = {}, {}

    for inst in instances:
        by_machine[i].append(inst)
        machine_of_instance[inst] = i
        for lid in sorted(unassigned.get(inst, ())):
            if lid not in consumed:
                consumed.add(lid)
                links_by_machine[i].append(lid)
                machine_of_link[lid] = i
        weight_left[i] -= 1
        if weight_left[i] <= 0:
            weight_left[i] = weight_list[i]
            i = (i + 1) % len(machines)

    dangling = set(lid for lids in unassigned.values() for lid in lids) - consumed
    if dangling:
        raise ContractViolation(f"links with no placed endpoint: {sorted(dangling)[:5]}")
    return PlacementResult(by_machine, links_by_machine, tuple(weight_list),
                           tuple(weight_left), i, machine_of_instance, machine_of_link)


def classify_links(placement: PlacementResult, links: Iterable) -> dict[str, str]:
    out = {}
    for link in links:
        lid, (a, b) = _endpoints(link)
        try:
            ma, mb = placement.machine_of_instance[a], placement.machine_of_instance[b]
        except KeyError as exc:
            raise ContractViolation(f"link {lid} has unplaced endpoint {exc.args[0]}") from None
        out[lid] = INTRA_MACHINE if ma == mb else INTER_MACHINE
    return out


class WeightedRoundRobinPlacer(BaseEstimator):
    """Estimator wrapper: ``fit`` places instances and links, ``predict``
    maps node ids to machine indices."""

    def __init__(self, machines=None):
        self.machines = machines

    def fit(self, instances, links=()):
        machines = self.machines
        if machines is None:
            machines = [MachineRecord(0)]
        self.placement_ = weighted_round_robin(machines, instances, list(links))
        self.n_machines_ = len(self.placement_.weight_list)
        return self

    def predict(self, instances):
        check_is_fitted(self, "placement_")
        try:
            return np.array([self.placement_.machine_of_instance[n] for n in instances], dtype=int)
        except KeyError as exc:
            raise ContractViolation(f"instance {exc.args[0]} was not placed") from None

    def fit_predict(self, instances, links=()):
        instances = list(instances)
        return self.fit(instances, links).predict(instances)

    def classify(self, links):
        check_is_fitted(self, "placement_")
        return classify_links(self.placement_, links)
