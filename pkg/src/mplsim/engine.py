"""Deterministic discrete-event engine.

The clock is an integer microsecond counter and events are totally ordered
by (time_us, seq), so identical scenarios replay identically — no
floating-point tie-breaking anywhere.  Continuous delays (node processing,
serialization) are rounded half-up once at scheduling time.

A packet's life cycle: a generator injects it at a host; the host's uplink
transmitter serializes it (store-and-forward); it arrives at a node, which
may unwrap/wrap a tunnel, then decides via the IP or label path; relays are
charged the node's processing delay and handed to the out-interface queue,
where policing and strict-priority scheduling apply.  Counter identity
`injected = delivered + dropped + in_flight` holds after every event.
"""

import enum
import heapq
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .forwarding import (
    Action,
    DropReason,
    NodeState,
    addr_in_prefix,
    forward_ip,
    forward_mpls,
)
from .packet import PacketRecord, wire_size_bits
from .qos import (
    LinkState,
    PoliceResult,
    TrafficClass,
    classify,
    dequeue_next,
    enqueue,
    police,
    serialization_us,
)
from .tunnel import TunnelConfig, decapsulate, encapsulate


class SimulationError(RuntimeError):
    """A model bug: scheduling into the past, impossible state, etc."""


def round_us(delay: float) -> int:
    """Half-up rounding of a nonnegative delay to whole microseconds."""
    return int(delay + 0.5)


class EventKind(enum.IntEnum):
    PACKET_ARRIVE_AT_NODE = 1
    TRANSMIT_COMPLETE = 2
    GENERATOR_FIRE = 3
    SIM_END = 4
    # node processing is charged between arrival and queueing, so handing a
    # packet to its output queue is its own event kind
    ENQUEUE_AT_LINK = 5


class Event(NamedTuple):
    time_us: int
    seq: int
    kind: EventKind
    payload: object  # kind-specific; never consulted for ordering


class NodeMode(enum.Enum):
    IP_ROUTING = "ip"
    MPLS_SWITCHING = "mpls"


@dataclass
class SimNode:
    state: NodeState
    mode: NodeMode
    is_host: bool = False
    host_addr: int | None = None
    # tunnel endpoint role: wrap packets heading for `wrap_dsts`, unwrap
    # arrivals for `unwrap_dsts` (prefixes on this endpoint's own side)
    tunnel_cfg: TunnelConfig | None = None
    wrap_dsts: list = field(default_factory=list)
    unwrap_dsts: list = field(default_factory=list)


@dataclass
class LinkEdge:
    """One direction of a link: the transmitter state plus where it lands."""

    qstate: LinkState
    peer_node: str
    peer_if: int


@dataclass
class SimReport:
    injected: int
    delivered: int
    drops: dict  # DropReason -> count
    end_clock_us: int
    work_checks: int

    @property
    def in_flight(self) -> int:
        return self.injected - self.delivered - sum(self.drops.values())


class SimState:
    def __init__(self, seed: int = 0):
        self.clock_us = 0
        self.seed = seed
        self.nodes: dict = {}            # node id -> SimNode
        self.links: dict = {}            # (node id, out interface) -> LinkEdge
        self.metrics = None              # optional collector hooks
        self.flow_of: dict = {}          # packet id -> flow bookkeeping
        self.flows: list = []            # flow registry, in install order
        self.injected = 0
        self.delivered = 0
        self.drops: dict = {}            # DropReason -> count
        self.work_checks = 0
        self._heap: list = []
        self._seq = 0
        self._pid = 0

    def next_packet_id(self) -> int:
        self._pid += 1
        return self._pid

    def schedule(self, time_us: int, kind: EventKind, payload=None):
        if time_us < self.clock_us:
            raise SimulationError(
                f"event {kind.name} scheduled at {time_us}µs, "
                f"clock already at {self.clock_us}µs")
        heapq.heappush(self._heap, Event(time_us, self._seq, kind, payload))
        self._seq += 1

    def inject(self, packet: PacketRecord, at_node: str):
        """Hand a freshly created packet to a host's uplink queue."""
        self.injected += 1
        self.schedule(self.clock_us, EventKind.ENQUEUE_AT_LINK,
                      (at_node, 0, packet))

    def audit_in_flight(self) -> int:
        """Count packets actually sitting in queues or scheduled events."""
        count = 0
        for edge in self.links.values():
            count += edge.qstate.backlog()
        for ev in self._heap:
            if ev.kind in (EventKind.PACKET_ARRIVE_AT_NODE,
                           EventKind.ENQUEUE_AT_LINK):
                count += 1
        return count

    # -- internals ---------------------------------------------------------

    def _drop(self, packet, reason: DropReason, node_id: str):
        self.drops[reason] = self.drops.get(reason, 0) + 1
        if self.metrics is not None:
            self.metrics.on_dropped(packet, reason, node_id, self.clock_us)

    def _deliver(self, packet, node_id: str):
        self.delivered += 1
        if self.metrics is not None:
            self.metrics.on_delivered(packet, node_id, self.clock_us)

    def _check_work_conservation(self, edge: LinkEdge):
        self.work_checks += 1
        if not edge.qstate.busy and edge.qstate.backlog():
            raise SimulationError("transmitter idle with a non-empty queue")

    def _start_transmit(self, node_id: str, out_if: int, edge: LinkEdge):
        item = dequeue_next(edge.qstate, self.clock_us)
        if item is None:
            return
        packet, wait_us = item
        if self.metrics is not None:
            self.metrics.on_queue_wait(classify(packet), wait_us, packet)
        ser = serialization_us(edge.qstate.config, wire_size_bits(packet))
        done_at = self.clock_us + round_us(ser)
        self.schedule(done_at, EventKind.TRANSMIT_COMPLETE, (node_id, out_if))
        self.schedule(done_at + edge.qstate.config.link_delay_us,
                      EventKind.PACKET_ARRIVE_AT_NODE,
                      (edge.peer_node, packet, edge.peer_if))

    def _handle_enqueue(self, node_id: str, out_if: int, packet):
        edge = self.links[(node_id, out_if)]
        traffic_class = classify(packet)
        if edge.qstate.qos_enabled and traffic_class is TrafficClass.EF:
            if police(edge.qstate.bucket, packet, self.clock_us) is PoliceResult.EXCEED:
                edge.qstate.policed_drops += 1
                self._drop(packet, DropReason.POLICED, node_id)
                return
        reason = enqueue(edge.qstate, packet, traffic_class, self.clock_us)
        if reason is not None:
            self._drop(packet, reason, node_id)
        elif not edge.qstate.busy:
            self._start_transmit(node_id, out_if, edge)
        self._check_work_conservation(edge)

    def _handle_transmit_complete(self, node_id: str, out_if: int):
        edge = self.links[(node_id, out_if)]
        edge.qstate.busy = False
        if edge.qstate.backlog():
            self._start_transmit(node_id, out_if, edge)
        self._check_work_conservation(edge)

    def _arrive_at_host(self, node: SimNode, node_id: str, packet):
        self._deliver(packet, node_id)
        meta = self.flow_of.get(packet.packet_id)
        if meta is not None and meta.echo and packet.dst_addr == meta.dst_addr:
            # the original receiver answers: same id and birth time, so the
            # round trip is measured when the echo lands back home
            reply = replace(packet, src_addr=packet.dst_addr,
                            dst_addr=packet.src_addr, ip_ttl=64,
                            label_stack=[])
            self.injected += 1
            self.schedule(self.clock_us, EventKind.ENQUEUE_AT_LINK,
                          (node_id, 0, reply))

    def _handle_arrival(self, node_id: str, packet, in_if: int):
        node = self.nodes[node_id]
        if node.is_host:
            self._arrive_at_host(node, node_id, packet)
            return
        delay = 0.0
        cfg = node.tunnel_cfg
        if cfg is not None and cfg.enabled and packet.tunnel_wrapped \
                and _matches(packet.dst_addr, node.unwrap_dsts):
            packet, d = decapsulate(packet, cfg)
            delay += d
        elif cfg is not None and cfg.enabled and not packet.tunnel_wrapped \
                and _matches(packet.dst_addr, node.wrap_dsts):
            packet, d = encapsulate(packet, cfg, self.clock_us)
            delay += d
        if node.mode is NodeMode.IP_ROUTING:
            decision = forward_ip(node.state, packet)
        else:
            decision = forward_mpls(node.state, packet, in_if)
        delay += decision.node_delay_us
        packet = decision.packet
        if decision.action is Action.DROP:
            self._drop(packet, decision.drop_reason, node_id)
            return
        if decision.action is Action.DELIVER:
            self._deliver(packet, node_id)
            return
        self.schedule(self.clock_us + round_us(delay), EventKind.ENQUEUE_AT_LINK,
                      (node_id, decision.out_interface, packet))


def _matches(addr: int, prefixes) -> bool:
    return any(addr_in_prefix(addr, p, l) for p, l in prefixes)


def run(state: SimState, end_time_us: int) -> SimReport:
    """Process events in (time, seq) order until the end marker."""
    state.schedule(end_time_us, EventKind.SIM_END)
    heap = state._heap
    while heap:
        ev = heapq.heappop(heap)
        state.clock_us = ev.time_us
        if ev.kind is EventKind.SIM_END:
            break
        if ev.kind is EventKind.GENERATOR_FIRE:
            ev.payload(state, ev.time_us)
        elif ev.kind is EventKind.ENQUEUE_AT_LINK:
            state._handle_enqueue(*ev.payload)
        elif ev.kind is EventKind.PACKET_ARRIVE_AT_NODE:
            state._handle_arrival(*ev.payload)
        elif ev.kind is EventKind.TRANSMIT_COMPLETE:
            state._handle_transmit_complete(*ev.payload)
    return SimReport(injected=state.injected, delivered=state.delivered,
                     drops=dict(state.drops), end_clock_us=state.clock_us,
                     work_checks=state.work_checks)
