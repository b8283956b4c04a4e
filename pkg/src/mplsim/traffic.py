"""Traffic generators and measurement.

Two kinds of flows cover everything the experiments need: fixed-gap ping
bursts whose echoes measure round trips, and constant-bit-rate UDP-like
streams whose deliveries measure throughput.  CBR departure times use
cumulative rounding (the i-th packet leaves at round(i × payload/rate)), so
the offered load tracks the requested rate with no drift.

The MetricsCollector hooks into the engine and buckets delivered wire bits
per traffic class and per destination subnet in fixed intervals, collects
per-hop and per-packet queue waits, and counts drops.  `summarize` turns the
raw samples into per-flow and per-class statistic tables; empty sample sets
become explicit None markers, never NaN.
"""

import enum
from dataclasses import dataclass, field
from statistics import fmean

from .engine import EventKind, SimState, round_us
from .forwarding import DropReason
from .packet import PacketRecord, TrafficClass, make_packet, wire_size_bits
from .qos import classify

MIN_PAYLOAD_BITS = 8
DEFAULT_PING_GAP_US = 10_000


class FlowKind(enum.Enum):
    PING_BURST = "ping_burst"
    CBR_UDP = "cbr_udp"


@dataclass
class FlowSpec:
    kind: FlowKind
    src: str
    dst: str
    packet_payload_bits: int
    count: int = 0                 # ping bursts
    rate_bps: int = 0              # CBR
    duration_us: int = 0           # CBR
    tos: int = 0
    start_time_us: int = 0
    gap_us: int = DEFAULT_PING_GAP_US
    echo: bool | None = None       # None: pings echo, CBR does not
    dst_addr_override: int | None = None  # send somewhere other than dst's address

    def __post_init__(self):
        if self.packet_payload_bits < MIN_PAYLOAD_BITS:
            raise ValueError(f"payload {self.packet_payload_bits} bits below "
                             f"the {MIN_PAYLOAD_BITS}-bit minimum")
        if self.kind is FlowKind.PING_BURST:
            if self.count <= 0:
                raise ValueError("ping burst needs count > 0")
            if self.gap_us <= 0:
                raise ValueError("ping gap must be positive")
        else:
            if self.rate_bps <= 0:
                raise ValueError("CBR flow needs rate_bps > 0")
            if self.duration_us < 0:
                raise ValueError("CBR duration must be nonnegative")
        if self.echo is None:
            self.echo = self.kind is FlowKind.PING_BURST


@dataclass
class FlowRuntime:
    """Live per-flow bookkeeping; the engine reads echo/src/dst for replies."""

    flow_id: int
    spec: FlowSpec
    src_addr: int
    dst_addr: int
    echo: bool
    sent: int = 0
    delivered: int = 0        # CBR packets that reached dst
    delivered_bits: int = 0   # wire bits of those packets
    drops: int = 0
    rtts: list = field(default_factory=list)


def install_flow(sim: SimState, spec: FlowSpec) -> FlowRuntime:
    """Schedule a flow's departures and register its bookkeeping."""
    src_addr = sim.nodes[spec.src].host_addr
    if src_addr is None:
        raise ValueError(f"flow source {spec.src} is not a host")
    if spec.dst_addr_override is not None:
        dst_addr = spec.dst_addr_override
    else:
        dst_addr = sim.nodes[spec.dst].host_addr
        if dst_addr is None:
            raise ValueError(f"flow destination {spec.dst} is not a host")
    flow = FlowRuntime(flow_id=len(sim.flows), spec=spec,
                       src_addr=src_addr, dst_addr=dst_addr, echo=spec.echo)
    sim.flows.append(flow)

    def fire(sim_: SimState, now_us: int):
        pkt = make_packet(sim_.next_packet_id(), flow.src_addr, flow.dst_addr,
                          tos=spec.tos, payload_bits=spec.packet_payload_bits,
                          created_at=now_us)
        sim_.flow_of[pkt.packet_id] = flow
        flow.sent += 1
        sim_.inject(pkt, spec.src)

    if spec.kind is FlowKind.PING_BURST:
        for i in range(spec.count):
            sim.schedule(spec.start_time_us + i * spec.gap_us,
                         EventKind.GENERATOR_FIRE, fire)
    else:
        interval_us = spec.packet_payload_bits * 1e6 / spec.rate_bps
        i = 0
        while True:
            offset = round_us(i * interval_us)
            if offset >= spec.duration_us:
                break
            sim.schedule(spec.start_time_us + offset,
                         EventKind.GENERATOR_FIRE, fire)
            i += 1
    return flow


# ---------------------------------------------------------------------------
# collection
# ---------------------------------------------------------------------------

class MetricsCollector:
    """Engine hooks that bucket deliveries and waits for later summarizing."""

    def __init__(self, interval_us: int = 1_000_000):
        self.interval_us = interval_us
        self.class_bits = {}     # (TrafficClass, interval idx) -> wire bits
        self.subnet_bits = {}    # (dst /24 prefix, interval idx) -> wire bits
        self.delivered_wire_bits = 0
        self.drop_counts = {}    # DropReason -> count
        self.queue_waits = {}    # TrafficClass -> [per-dequeue wait µs]
        self.packet_waits = {}   # TrafficClass -> {packet id: cumulative wait}
        self._sim = None

    def attach(self, sim: SimState) -> "MetricsCollector":
        self._sim = sim
        sim.metrics = self
        return self

    def on_delivered(self, packet: PacketRecord, node_id: str, now_us: int):
        wire = wire_size_bits(packet)
        idx = now_us // self.interval_us
        cls = classify(packet)
        self.class_bits[(cls, idx)] = self.class_bits.get((cls, idx), 0) + wire
        subnet = packet.dst_addr & 0xFFFFFF00
        self.subnet_bits[(subnet, idx)] = \
            self.subnet_bits.get((subnet, idx), 0) + wire
        self.delivered_wire_bits += wire
        flow = self._sim.flow_of.get(packet.packet_id) if self._sim else None
        if flow is None:
            return
        if flow.echo:
            if packet.dst_addr == flow.src_addr:  # the echo came home
                flow.rtts.append(now_us - packet.created_at)
        elif packet.dst_addr == flow.dst_addr:
            flow.delivered += 1
            flow.delivered_bits += wire

    def on_dropped(self, packet, reason: DropReason, node_id: str, now_us: int):
        self.drop_counts[reason] = self.drop_counts.get(reason, 0) + 1
        flow = self._sim.flow_of.get(packet.packet_id) if self._sim else None
        if flow is not None:
            flow.drops += 1

    def on_queue_wait(self, traffic_class: TrafficClass, wait_us: int, packet):
        self.queue_waits.setdefault(traffic_class, []).append(wait_us)
        per_packet = self.packet_waits.setdefault(traffic_class, {})
        pid = packet.packet_id
        per_packet[pid] = per_packet.get(pid, 0) + wait_us

    def class_rate_bps(self, traffic_class: TrafficClass,
                       start_interval: int, end_interval: int) -> float:
        """Mean delivered rate for a class over [start, end) intervals."""
        total = sum(bits for (cls, idx), bits in self.class_bits.items()
                    if cls is traffic_class and start_interval <= idx < end_interval)
        seconds = (end_interval - start_interval) * self.interval_us / 1e6
        return total / seconds if seconds > 0 else 0.0


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def mean(samples):
    return fmean(samples)


def percentile(samples, q):
    """Nearest-rank percentile on the full sample set."""
    if not samples:
        raise ValueError("percentile of empty sample set")
    ordered = sorted(samples)
    rank = max(1, -(-len(ordered) * q // 100))  # ceil(n·q/100), at least 1
    return ordered[rank - 1]


def jitter_us(rtts):
    """Mean absolute difference of consecutive samples; 0 for singletons."""
    if len(rtts) < 2:
        return 0
    return fmean(abs(b - a) for a, b in zip(rtts, rtts[1:]))


def _stat_block(samples):
    if not samples:
        return None
    return {"mean_us": mean(samples),
            "p50_us": percentile(samples, 50),
            "p95_us": percentile(samples, 95),
            "p99_us": percentile(samples, 99),
            "jitter_us": jitter_us(samples)}


def summarize(collector: MetricsCollector) -> dict:
    """Per-flow and per-class stats tables; pure function of the samples."""
    flows_out = []
    for flow in (collector._sim.flows if collector._sim else []):
        if flow.spec.kind is FlowKind.PING_BURST:
            returned = len(flow.rtts)
            loss = (flow.sent - returned) / flow.sent if flow.sent else None
            delivered = returned
        else:
            loss = flow.drops / flow.sent if flow.sent else None
            delivered = flow.delivered
        flows_out.append({
            "flow_id": flow.flow_id,
            "kind": flow.spec.kind.value,
            "src": flow.spec.src,
            "dst": flow.spec.dst,
            "sent": flow.sent,
            "delivered": delivered,
            "loss": loss,
            "delivered_bits": flow.delivered_bits,
            "rtt": _stat_block(flow.rtts),
        })
    classes = {}
    for cls in (TrafficClass.EF, TrafficClass.BE):
        bits = sum(v for (c, _), v in collector.class_bits.items() if c is cls)
        classes[cls.name] = {
            "delivered_bits": bits,
            "queue_wait": _stat_block(collector.queue_waits.get(cls, [])),
        }
    drops = {reason.value: count
             for reason, count in sorted(collector.drop_counts.items(),
                                         key=lambda kv: kv[0].value)}
    return {"flows": flows_out, "classes": classes, "drops": drops}
