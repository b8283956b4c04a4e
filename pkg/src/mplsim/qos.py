"""DiffServ machinery: classification, EF policing, strict-priority queues.

Each link direction owns a LinkState: two drop-tail FIFOs (EF and BE), a
token bucket policing the EF reservation, and a transmitter flag.  The
scheduler is strict priority — EF is always served first — and the policer
in front of the EF queue is what keeps that from starving best-effort
traffic.  EF packets exceeding the reservation are dropped outright rather
than remarked, so the reservation behaves as a hard rate guarantee.

With `qos_enabled` off the same LinkState degrades to a single FIFO with no
policing, which is the baseline the QoS variants are measured against.
"""

import enum
from collections import deque
from dataclasses import dataclass, field

from .forwarding import DropReason
from .packet import (
    EF_CLASS_BITS,
    EF_DSCP,
    PacketRecord,
    TrafficClass,
    wire_size_bits,
)

# largest packet the experiments put on a wire: 1500-byte payload plus the
# network header and one label entry
MAX_PACKET_WIRE_BITS = 12_000 + 160 + 32


@dataclass
class PhbConfig:
    """Per-link reservation parameters.  Rates in bps, delays in µs."""

    ef_rate_bps: int = 220_000
    ef_priority: int = 1
    be_rate_bps: int = 1_780_000
    link_rate_bps: int = 2_000_000
    link_delay_us: int = 50_000
    ef_bucket_burst_bits: int = 2 * MAX_PACKET_WIRE_BITS
    be_queue_cap_packets: int = 100
    ef_queue_cap_packets: int = 50

    def __post_init__(self):
        positive = (self.ef_rate_bps, self.be_rate_bps, self.link_rate_bps,
                    self.link_delay_us, self.ef_bucket_burst_bits,
                    self.be_queue_cap_packets, self.ef_queue_cap_packets)
        if any(v <= 0 for v in positive):
            raise ValueError("all rates, delays, and caps must be positive")
        if self.ef_rate_bps + self.be_rate_bps > self.link_rate_bps:
            raise ValueError(
                f"reservations {self.ef_rate_bps}+{self.be_rate_bps} bps "
                f"oversubscribe the {self.link_rate_bps} bps link")


def classify(packet: PacketRecord) -> TrafficClass:
    """EF or BE.  Label class bits outrank the tos byte when present."""
    if packet.label_stack:
        top = packet.label_stack[0]
        return TrafficClass.EF if top.class_bits == EF_CLASS_BITS else TrafficClass.BE
    return TrafficClass.EF if packet.tos >> 2 == EF_DSCP else TrafficClass.BE


# ---------------------------------------------------------------------------
# policing
# ---------------------------------------------------------------------------

class PoliceResult(enum.Enum):
    CONFORM = "conform"
    EXCEED = "exceed"


@dataclass
class TokenBucket:
    rate_bps: int
    burst_bits: int
    tokens_bits: float
    last_update_us: int


def police(bucket: TokenBucket, packet: PacketRecord, now_us: int) -> PoliceResult:
    """Refill, then charge the packet's wire size if it fits."""
    if now_us < bucket.last_update_us:
        raise ValueError("police() saw time run backwards")
    refill = bucket.rate_bps * (now_us - bucket.last_update_us) / 1e6
    bucket.tokens_bits = min(bucket.burst_bits, bucket.tokens_bits + refill)
    bucket.last_update_us = now_us
    wire = wire_size_bits(packet)
    if bucket.tokens_bits >= wire:
        bucket.tokens_bits -= wire
        return PoliceResult.CONFORM
    return PoliceResult.EXCEED


# ---------------------------------------------------------------------------
# queues
# ---------------------------------------------------------------------------

@dataclass
class ClassQueue:
    traffic_class: TrafficClass
    cap_packets: int
    fifo: deque = field(default_factory=deque)  # (packet, enqueued_at_us)
    drops: int = 0


@dataclass
class LinkState:
    """One direction of one link: queues, policer, transmitter flag."""

    config: PhbConfig
    qos_enabled: bool = True
    busy: bool = False
    policed_drops: int = 0

    def __post_init__(self):
        self.ef = ClassQueue(TrafficClass.EF, self.config.ef_queue_cap_packets)
        self.be = ClassQueue(TrafficClass.BE, self.config.be_queue_cap_packets)
        self.bucket = TokenBucket(
            rate_bps=self.config.ef_rate_bps,
            burst_bits=self.config.ef_bucket_burst_bits,
            tokens_bits=float(self.config.ef_bucket_burst_bits),
            last_update_us=0)

    def backlog(self) -> int:
        return len(self.ef.fifo) + len(self.be.fifo)


def enqueue(link: LinkState, packet: PacketRecord, traffic_class: TrafficClass,
            now_us: int) -> DropReason | None:
    """Drop-tail admit to the class queue.  None means queued.

    EF policing is the caller's job and happens before this point; with QoS
    disabled every packet lands in one FIFO regardless of class.
    """
    queue = link.be
    if link.qos_enabled and traffic_class is TrafficClass.EF:
        queue = link.ef
    if len(queue.fifo) >= queue.cap_packets:
        queue.drops += 1
        return DropReason.QUEUE_FULL
    queue.fifo.append((packet, now_us))
    return None


def dequeue_next(link: LinkState, now_us: int):
    """Pick the next packet under strict priority; None when idle.

    Returns (packet, queue_wait_us) and marks the transmitter busy; the
    caller clears `busy` when the transmission completes.
    """
    if link.busy:
        raise RuntimeError("dequeue on a busy transmitter")
    for queue in (link.ef, link.be):
        if queue.fifo:
            packet, enqueued_at = queue.fifo.popleft()
            link.busy = True
            return packet, now_us - enqueued_at
    return None


def serialization_us(config: PhbConfig, wire_bits: int) -> float:
    return wire_bits * 1e6 / config.link_rate_bps
