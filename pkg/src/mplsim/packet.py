"""Simulated packet, the 32-bit label shim, and label-stack operations.

A label shim entry carries a 20-bit label, 3 class bits, the bottom-of-stack
flag S and an 8-bit TTL.  Packets hold an ordered stack of these entries
(top first); exactly the deepest entry has S set.  All operations here are
pure: they return new records and never mutate their arguments.
"""

import enum
from dataclasses import dataclass, field, replace

IP_HEADER_BITS = 160  # 20-byte header, no options
LABEL_BITS = 32       # one shim entry on the wire

EF_TOS = 0xB8         # DSCP 46 in the top six bits of the TOS byte
EF_DSCP = 46
EF_CLASS_BITS = 5     # shim class field value that marks EF


class FieldRangeError(ValueError):
    """A header field was set outside its bit-width."""


class EmptyStackError(RuntimeError):
    """Label operation on a packet with no label stack (misconfigured LSP)."""


class TtlExpiredError(RuntimeError):
    """A label TTL reached zero; the caller must drop the packet."""


class TrafficClass(enum.Enum):
    EF = "EF"
    BE = "BE"


def class_of_tos(tos: int) -> TrafficClass:
    """EF iff the DSCP portion of the TOS byte is the EF codepoint."""
    return TrafficClass.EF if (tos >> 2) == EF_DSCP else TrafficClass.BE


@dataclass(frozen=True)
class LabelStackEntry:
    label: int
    class_bits: int
    bottom_of_stack: bool
    ttl: int


@dataclass
class PacketRecord:
    packet_id: int
    src_addr: int
    dst_addr: int
    tos: int
    ip_ttl: int
    payload_bits: int
    label_stack: list  # of LabelStackEntry, top first
    traffic_class: TrafficClass
    created_at: int            # simulated microseconds
    tunnel_wrapped: bool = False
    inner_payload_bits: int = 0  # original payload while wrapped


def make_packet(packet_id: int, src_addr: int, dst_addr: int, payload_bits: int,
                tos: int = 0, ip_ttl: int = 64, created_at: int = 0) -> PacketRecord:
    """Build a packet, validating field ranges.

    payload_bits must be at least one byte; traffic_class is derived from tos.
    """
    if payload_bits < 8:
        raise FieldRangeError(f"payload_bits {payload_bits} below minimum of 8")
    if not 0 <= tos < 256:
        raise FieldRangeError(f"tos {tos} outside [0, 256)")
    if not 0 <= ip_ttl < 256:
        raise FieldRangeError(f"ip_ttl {ip_ttl} outside [0, 256)")
    return PacketRecord(
        packet_id=packet_id,
        src_addr=src_addr,
        dst_addr=dst_addr,
        tos=tos,
        ip_ttl=ip_ttl,
        payload_bits=payload_bits,
        label_stack=[],
        traffic_class=class_of_tos(tos),
        created_at=created_at,
    )


def wire_size_bits(packet: PacketRecord) -> int:
    """Total bits on the wire: payload + IP header + one shim per stack entry.

    While a packet is tunnel_wrapped its payload_bits already include the
    encapsulation overhead, so no extra term appears here.
    """
    return packet.payload_bits + IP_HEADER_BITS + LABEL_BITS * len(packet.label_stack)


def _check_shim_fields(label: int, class_bits: int, ttl: int) -> None:
    if not 0 <= label < 2**20:
        raise FieldRangeError(f"label {label} outside [0, 2^20)")
    if not 0 <= class_bits < 8:
        raise FieldRangeError(f"class_bits {class_bits} outside [0, 8)")
    if not 1 <= ttl < 256:
        raise FieldRangeError(f"ttl {ttl} outside [1, 256)")


def push_label(packet: PacketRecord, label: int, class_bits: int, ttl: int) -> PacketRecord:
    """Place a new entry on top of the stack.

    The new entry is the bottom of stack iff the stack was empty before.
    """
    _check_shim_fields(label, class_bits, ttl)
    entry = LabelStackEntry(label, class_bits, not packet.label_stack, ttl)
    return replace(packet, label_stack=[entry] + packet.label_stack)


def pop_label(packet: PacketRecord) -> tuple[PacketRecord, LabelStackEntry]:
    """Remove and return the top entry; the rest of the stack is unchanged."""
    if not packet.label_stack:
        raise EmptyStackError(f"pop on packet {packet.packet_id} with empty stack")
    top = packet.label_stack[0]
    return replace(packet, label_stack=packet.label_stack[1:]), top


def swap_label(packet: PacketRecord, new_label: int) -> PacketRecord:
    """Replace the top label, decrementing its TTL by one.

    class_bits and the S flag are preserved.  Raises TtlExpiredError when the
    decrement reaches zero — the caller must drop the packet.
    """
    if not packet.label_stack:
        raise EmptyStackError(f"swap on packet {packet.packet_id} with empty stack")
    if not 0 <= new_label < 2**20:
        raise FieldRangeError(f"label {new_label} outside [0, 2^20)")
    top = packet.label_stack[0]
    if top.ttl - 1 <= 0:
        raise TtlExpiredError(f"label ttl expired on packet {packet.packet_id}")
    entry = LabelStackEntry(new_label, top.class_bits, top.bottom_of_stack, top.ttl - 1)
    return replace(packet, label_stack=[entry] + packet.label_stack[1:])
