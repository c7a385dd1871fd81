"""Executable model of the two virtual link implementations.

Legacy links join two container interfaces through a bridge device; across
machines a VXLAN device per side tunnels frames inside datagrams. eBPF links
replace the bridge with redirect-map entries consulted by the point-to-point
forwarder, and cross machines by rewriting the destination MAC instead of
encapsulating. Nothing touches the kernel: every device or map operation is
counted so the two modes can be compared deterministically.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from satnet.errors import ConflictError, ContractViolation, DeliveryError, ValidationError
from satnet.placement import MachineRecord

INGRESS = "ingress"
EGRESS = "egress"
EGRESS_NIC = "EGRESS_NIC"
UP_LAYER_STACK = "UP_LAYER_STACK"

LEGACY = "legacy"
EBPF = "ebpf"
LINK_MODES = (LEGACY, EBPF)

# legacy link per machine side: one bridge plus its attachment ports
LEGACY_BRIDGE_DEVICES = 1


def format_mac(value: int) -> str:
    return ":".join(f"{(value >> s) & 0xFF:02x}" for s in range(40, -8, -8))


def machine_mac(index: int) -> str:
    return format_mac(0x02FF00000000 | index)


@dataclass(frozen=True)
class Encapsulation:
    vni: int
    outer_src: str
    outer_dst: str


@dataclass
class Frame:
    src_mac: str
    dst_mac: str
    direction: str = EGRESS
    payload_len: int = 0
    payload: bytes = b""
    encapsulation: Optional[Encapsulation] = None


@dataclass
class RedirectState:
    map_dst: dict = field(default_factory=dict)
    map_fwd: dict = field(default_factory=dict)
    intf_egress: str = EGRESS_NIC

    def entries(self) -> dict:
        """Per source MAC: (dst_mac or None, interface or None)."""
        keys = self.map_dst.keys() | self.map_fwd.keys()
        return {k: (self.map_dst.get(k), self.map_fwd.get(k)) for k in keys}


def forward_frame(direction: str, frame: Frame, state: RedirectState) -> str:
    """Point-to-point forwarder. May rewrite ``frame.dst_mac`` in place."""
    src = frame.src_mac
    if src in state.map_dst:
        frame.dst_mac = state.map_dst[src]
    if src in state.map_fwd:
        return state.map_fwd[src]
    if direction == EGRESS:
        return state.intf_egress
    return UP_LAYER_STACK


COUNTER_FIELDS = ("device_creates", "device_deletes", "map_updates", "map_deletes",
                  "encapsulations", "decapsulations", "mac_rewrites")


class OpCounters:
    """Monotone operation counters; increments are atomic."""

    def __init__(self):
        self._lock = threading.Lock()
        self._values = dict.fromkeys(COUNTER_FIELDS, 0)

    def bump(self, name: str, n: int = 1) -> None:
        if n < 0:
            raise ContractViolation("counters only increase")
        with self._lock:
            self._values[name] += n

    def __getattr__(self, name):
        if name in COUNTER_FIELDS:
            with self._lock:
                return self._values[name]
        raise AttributeError(name)

    def as_dict(self) -> dict:
        with self._lock:
            return dict(self._values)

    @property
    def device_ops(self) -> int:
        d = self.as_dict()
        return d["device_creates"] + d["device_deletes"]


@dataclass
class VirtualInterface:
    interface_id: str
    owner_node: str
    mac: str
    machine: int
    peer: Optional[str] = None
    link_id: Optional[str] = None


@dataclass
class LinkHandle:
    link_id: str
    mode: str
    a: VirtualInterface
    b: VirtualInterface
    bridges: dict = field(default_factory=dict)  # machine -> bridge id (legacy)
    vni: Optional[int] = None
    active: bool = True

    @property
    def inter_machine(self) -> bool:
        return self.a.machine != self.b.machine

    @property
    def machines(self) -> tuple:
        return tuple(sorted({self.a.machine, self.b.machine}))


@dataclass(frozen=True)
class HandoverResult:
    link_id: str
    kept_before: str
    kept_after: str
    old_endpoint: str
    new_endpoint: str
    ops: dict  # machine -> counter deltas


class MachineModel:
    def __init__(self, record: MachineRecord):
        self.index = record.machine_index
        self.nic_mac = record.nic_mac or machine_mac(record.machine_index)
        self.nic_ip = record.nic_ip or f"192.0.2.{record.machine_index + 1}"
        self.redirect = RedirectState()
        self.counters = OpCounters()
        self.bridges: dict[str, set] = {}
        self.vxlan: dict[int, str] = {}  # vni -> local bridge
        self.lock = threading.RLock()

    # redirect entries; a write covering both maps for one key is one update
    def write_entry(self, src_mac, dst_mac=None, fwd=None):
        with self.lock:
            for m, v in ((self.redirect.map_dst, dst_mac), (self.redirect.map_fwd, fwd)):
                if v is None:
                    m.pop(src_mac, None)
                else:
                    m[src_mac] = v
            self.counters.bump("map_updates")

    def clear_entry(self, src_mac):
        with self.lock:
            hit = src_mac in self.redirect.map_dst or src_mac in self.redirect.map_fwd
            self.redirect.map_dst.pop(src_mac, None)
            self.redirect.map_fwd.pop(src_mac, None)
            if hit:
                self.counters.bump("map_deletes")


class DataPlane:
    """All machine models of one emulation, plus the links between them."""

    def __init__(self, machines: Sequence[MachineRecord]):
        if not machines:
            raise ValidationError("at least one machine is required", field="machines")
        self.machines = {m.machine_index: MachineModel(m) for m in machines}
        self.interfaces: dict[str, VirtualInterface] = {}
        self.links: dict[str, LinkHandle] = {}
        self._by_mac: dict[str, str] = {}
        self._ids = itertools.count(1)
        self._vnis = itertools.count(1)
        self._bridge_ids = itertools.count(1)
        self._lock = threading.RLock()

    # -- inventory ---------------------------------------------------------

    def _machine(self, index) -> MachineModel:
        try:
            return self.machines[index]
        except KeyError:
            raise ContractViolation(f"unknown machine {index}") from None

    def add_interface(self, owner_node: str, machine: int) -> VirtualInterface:
        self._machine(machine)
        with self._lock:
            n = next(self._ids)
            iface = VirtualInterface(f"if{n}", owner_node, format_mac(0x020000000000 | n), machine)
            self.interfaces[iface.interface_id] = iface
            self._by_mac[iface.mac] = iface.interface_id
            return iface

    def remove_interface(self, interface_id: str) -> None:
        with self._lock:
            iface = self.interfaces.pop(interface_id, None)
            if iface is None:
                return
            if iface.link_id is not None and iface.link_id in self.links:
                self.destroy_link(iface.link_id)
            self._by_mac.pop(iface.mac, None)

    def counters(self, machine: Optional[int] = None) -> dict:
        if machine is not None:
            return self._machine(machine).counters.as_dict()
        total = dict.fromkeys(COUNTER_FIELDS, 0)
        for m in self.machines.values():
            for k, v in m.counters.as_dict().items():
                total[k] += v
        return total

    def counter_snapshot(self) -> dict:
        """Flat key -> integer map for the metrics file."""
        out = {f"total.{k}": v for k, v in self.counters().items()}
        for idx in sorted(self.machines):
            out.update({f"machine{idx}.{k}": v for k, v in self.counters(idx).items()})
        return out

    # -- links -------------------------------------------------------------

    def create_link(self, mode: str, a: VirtualInterface, b: VirtualInterface,
                    inter_machine: Optional[bool] = None,
                    link_id: Optional[str] = None) -> LinkHandle:
        if mode not in LINK_MODES:
            raise ValidationError(f"unknown link mode {mode!r}", field="mode")
        for iface in (a, b):
            if self.interfaces.get(iface.interface_id) is not iface:
                raise ContractViolation(f"interface {iface.interface_id} does not exist")
            if iface.link_id is not None:
                raise ConflictError(
                    f"interface {iface.interface_id} already connected by {iface.link_id}")
        if a is b:
            raise ContractViolation("a link needs two distinct interfaces")
        if inter_machine is not None and inter_machine != (a.machine != b.machine):
            raise ContractViolation(
                f"inter_machine={inter_machine} but endpoints are on machines "
                f"{a.machine} and {b.machine}")
        with self._lock:
            lid = link_id or f"link{next(self._ids)}"
            if lid in self.links:
                raise ConflictError(f"link {lid} already exists")
            handle = LinkHandle(lid, mode, a, b)
            self._install(handle)
            a.peer, b.peer = b.interface_id, a.interface_id
            a.link_id = b.link_id = lid
            self.links[lid] = handle
            return handle

    def _install(self, h: LinkHandle) -> None:
        if h.mode == LEGACY:
            self._install_legacy(h)
        else:
            for idx, entries in self._ebpf_entries(h).items():
                m = self.machines[idx]
                for src, (dst, fwd) in sorted(entries.items()):
                    m.write_entry(src, dst, fwd)

    def _install_legacy(self, h: LinkHandle) -> None:
        if h.inter_machine:
            h.vni = next(self._vnis)
        for iface in (h.a, h.b):
            m = self.machines[iface.machine]
            br = h.bridges.get(m.index)
            with m.lock:
                if br is None:
                    br = f"br{next(self._bridge_ids)}"
                    h.bridges[m.index] = br
                    m.bridges[br] = set()
                    m.counters.bump("device_creates", LEGACY_BRIDGE_DEVICES)
                    if h.inter_machine:
                        m.vxlan[h.vni] = br
                        m.counters.bump("device_creates")  # vxlan device
                m.bridges[br].add(iface.interface_id)
                m.counters.bump("device_creates")  # attachment port

    def _ebpf_entries(self, h: LinkHandle) -> dict:
        """Redirect entries each machine needs for link ``h``."""
        a, b = h.a, h.b
        if not h.inter_machine:
            return {a.machine: {a.mac: (None, b.interface_id), b.mac: (None, a.interface_id)}}
        ma, mb = self.machines[a.machine], self.machines[b.machine]
        return {
            a.machine: {a.mac: (mb.nic_mac, None), b.mac: (a.mac, a.interface_id)},
            b.machine: {b.mac: (ma.nic_mac, None), a.mac: (b.mac, b.interface_id)},
        }

    def _uninstall(self, h: LinkHandle) -> None:
        if h.mode == LEGACY:
            for idx, br in h.bridges.items():
                m = self.machines[idx]
                with m.lock:
                    ports = m.bridges.pop(br, set())
                    m.counters.bump("device_deletes", len(ports))
                    m.counters.bump("device_deletes", LEGACY_BRIDGE_DEVICES)
                    if h.vni is not None and m.vxlan.pop(h.vni, None) is not None:
                        m.counters.bump("device_deletes")
            h.bridges = {}
            h.vni = None
        else:
            for idx, entries in self._ebpf_entries(h).items():
                for src in sorted(entries):
                    self.machines[idx].clear_entry(src)

    def destroy_link(self, link_id: str) -> bool:
        """Tear a link down; False when it does not exist (idempotent)."""
        with self._lock:
            h = self.links.pop(link_id, None)
            if h is None:
                return False
            self._uninstall(h)
            for iface in (h.a, h.b):
                iface.peer = None
                iface.link_id = None
            h.active = False
            return True

    def handover(self, link_id: str, new_endpoint: VirtualInterface) -> HandoverResult:
        """Move endpoint ``b`` of a link to ``new_endpoint``; endpoint ``a`` stays.

        eBPF links retarget redirect entries and keep ``a``'s interface.
        Legacy links tear down the bridge, replace ``a``'s interface with a
        fresh one and build a new bridge.
        """
        if new_endpoint.machine not in self.machines:
            raise ContractViolation(
                f"new endpoint {new_endpoint.interface_id} on unknown machine "
                f"{new_endpoint.machine}")
        with self._lock:
            h = self.links.get(link_id)
            if h is None or not h.active:
                raise ContractViolation(f"link {link_id} is not connected")
            if self.interfaces.get(new_endpoint.interface_id) is not new_endpoint:
                raise ContractViolation(f"interface {new_endpoint.interface_id} does not exist")
            if new_endpoint.link_id is not None:
                raise ConflictError(f"interface {new_endpoint.interface_id} already connected")
            before = {i: m.counters.as_dict() for i, m in self.machines.items()}
            kept_before, old = h.a, h.b
            if h.mode == EBPF:
                self._handover_ebpf(h, new_endpoint)
            else:
                self._handover_legacy(h, new_endpoint)
            old.peer = old.link_id = None
            h.b = new_endpoint
            h.a.peer, new_endpoint.peer = new_endpoint.interface_id, h.a.interface_id
            h.a.link_id = new_endpoint.link_id = link_id
            ops = {}
            for i, m in self.machines.items():
                after = m.counters.as_dict()
                delta = {k: after[k] - before[i][k] for k in COUNTER_FIELDS}
                if any(delta.values()):
                    ops[i] = delta
            return HandoverResult(link_id, kept_before.interface_id, h.a.interface_id,
                                  old.interface_id, new_endpoint.interface_id, ops)

    def _handover_ebpf(self, h: LinkHandle, new_b: VirtualInterface) -> None:
        old = self._ebpf_entries(h)
        new = self._ebpf_entries(replace(h, b=new_b))
        for idx in sorted(old.keys() | new.keys()):
            m = self.machines[idx]
            old_e, new_e = old.get(idx, {}), new.get(idx, {})
            for src in sorted(old_e.keys() - new_e.keys()):
                m.clear_entry(src)
            for src, (dst, fwd) in sorted(new_e.items()):
                m.write_entry(src, dst, fwd)

    def _handover_legacy(self, h: LinkHandle, new_b: VirtualInterface) -> None:
        self._uninstall(h)
        old_a = h.a
        m = self.machines[old_a.machine]
        m.counters.bump("device_deletes")
        m.counters.bump("device_creates")
        fresh = self.add_interface(old_a.owner_node, old_a.machine)
        self.interfaces.pop(old_a.interface_id, None)
        self._by_mac.pop(old_a.mac, None)
        old_a.peer = old_a.link_id = None
        h.a = fresh
        h.b = new_b
        self._install_legacy(h)

    # -- frames ------------------------------------------------------------

    def send(self, interface_id: str, payload: bytes = b"") -> list[str]:
        """Inject a frame at an interface; returns interfaces it reached."""
        src = self.interfaces.get(interface_id)
        if src is None:
            raise ContractViolation(f"unknown interface {interface_id}")
        if src.peer is None:
            raise DeliveryError(f"interface {interface_id} is not connected", machine=src.machine)
        peer = self.interfaces[src.peer]
        frame = Frame(src.mac, peer.mac, EGRESS, len(payload), payload)
        h = self.links[src.link_id]
        if h.mode == LEGACY:
            return self._send_legacy(h, src, frame)
        return self._send_ebpf(src, frame)

    def _send_legacy(self, h: LinkHandle, src: VirtualInterface, frame: Frame) -> list[str]:
        m = self.machines[src.machine]
        br = h.bridges[m.index]
        delivered = [p for p in sorted(m.bridges[br]) if p != src.interface_id]
        if h.inter_machine:
            other = h.b if src is h.a else h.a
            inner = self.transit_inter_machine(LEGACY, frame, src.machine, other.machine)
            rbr = self.machines[other.machine].vxlan[h.vni]
            delivered += [p for p in sorted(self.machines[other.machine].bridges[rbr])
                          if self._by_mac.get(inner.dst_mac) == p]
        return delivered

    def _send_ebpf(self, src: VirtualInterface, frame: Frame) -> list[str]:
        m = self.machines[src.machine]
        target = self._forward(m, EGRESS, frame)
        if target == m.redirect.intf_egress:
            dst_machine = self._machine_by_nic(frame.dst_mac, src.machine)
            frame.direction = INGRESS
            target = self._forward(self.machines[dst_machine], INGRESS, frame)
            m = self.machines[dst_machine]
        if target not in self.interfaces or self.interfaces[target].machine != m.index:
            raise DeliveryError(f"frame from {src.interface_id} stopped at {target}",
                                machine=m.index)
        return [target]

    def _forward(self, m: MachineModel, direction: str, frame: Frame) -> str:
        if frame.src_mac in m.redirect.map_dst:
            m.counters.bump("mac_rewrites")
        return forward_frame(direction, frame, m.redirect)

    def _machine_by_nic(self, mac: str, origin: int) -> int:
        for idx, m in self.machines.items():
            if m.nic_mac == mac:
                return idx
        raise DeliveryError(f"no machine owns NIC {mac}", machine=origin)

    def transit_inter_machine(self, mode: str, frame: Frame, src_machine: int,
                              dst_machine: int) -> Frame:
        """Carry a frame between two machines and return what arrives.

        ``legacy``/``vxlan``: encapsulate with the link's VNI, decapsulate on
        the far side. ``ebpf``: rewrite per the source machine's redirect map
        at egress, restore per the destination's at ingress.
        """
        src_m, dst_m = self._machine(src_machine), self._machine(dst_machine)
        if mode in (LEGACY, "vxlan"):
            iface = self.interfaces.get(self._by_mac.get(frame.src_mac, ""))
            h = self.links.get(iface.link_id) if iface and iface.link_id else None
            if h is None or h.vni is None or h.vni not in src_m.vxlan:
                raise DeliveryError(f"no tunnel state for {frame.src_mac} on machine "
                                    f"{src_machine}", machine=src_machine)
            wrapped = replace(frame, encapsulation=Encapsulation(h.vni, src_m.nic_ip,
                                                                 dst_m.nic_ip))
            src_m.counters.bump("encapsulations")
            if wrapped.encapsulation.vni not in dst_m.vxlan:
                raise DeliveryError(f"machine {dst_machine} has no VXLAN device for VNI "
                                    f"{h.vni}", machine=dst_machine)
            dst_m.counters.bump("decapsulations")
            return replace(wrapped, encapsulation=None)
        if mode != EBPF:
            raise ValidationError(f"unknown transit mode {mode!r}", field="mode")
        out = replace(frame, direction=EGRESS)
        if self._forward(src_m, EGRESS, out) != src_m.redirect.intf_egress:
            raise DeliveryError(f"frame from {frame.src_mac} is not routed off machine "
                                f"{src_machine}", machine=src_machine)
        if out.dst_mac != dst_m.nic_mac:
            raise DeliveryError(f"machine {src_machine} sends {frame.src_mac} to {out.dst_mac}, "
                                f"not machine {dst_machine}", machine=dst_machine)
        out.direction = INGRESS
        target = self._forward(dst_m, INGRESS, out)
        if target == UP_LAYER_STACK or frame.src_mac not in dst_m.redirect.map_dst:
            raise DeliveryError(f"machine {dst_machine} has no redirect state for "
                                f"{frame.src_mac}", machine=dst_machine)
        return out
