"""The two rival forwarding structures and their per-hop decision logic.

IP routing uses a binary trie keyed on address bits; its lookup cost grows
with the trie path walked.  Label switching uses a flat incoming-label map
whose lookup cost is constant regardless of table size.  Both return a
ForwardDecision carrying the (possibly rewritten) packet and the modeled
node processing delay in microseconds.
"""

import enum
from dataclasses import dataclass, field, replace

from .packet import (
    EF_CLASS_BITS,
    PacketRecord,
    TrafficClass,
    TtlExpiredError,
    pop_label,
    push_label,
    swap_label,
    wire_size_bits,
)


# ---------------------------------------------------------------------------
# addresses
# ---------------------------------------------------------------------------

def parse_addr(text: str) -> int:
    """Dotted quad -> 32-bit integer."""
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad address {text!r}")
    addr = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet < 256:
            raise ValueError(f"bad address {text!r}")
        addr = (addr << 8) | octet
    return addr


def parse_prefix(text: str) -> tuple[int, int]:
    """'a.b.c.d/len' -> (prefix int, prefix length)."""
    addr_text, _, len_text = text.partition("/")
    plen = int(len_text)
    if not 0 <= plen <= 32:
        raise ValueError(f"bad prefix length in {text!r}")
    return parse_addr(addr_text), plen


def format_addr(addr: int) -> str:
    return ".".join(str((addr >> shift) & 0xFF) for shift in (24, 16, 8, 0))


def format_prefix(prefix: int, plen: int) -> str:
    return f"{format_addr(prefix)}/{plen}"


def addr_in_prefix(addr: int, prefix: int, plen: int) -> bool:
    if plen == 0:
        return True
    mask = ((1 << plen) - 1) << (32 - plen)
    return (addr & mask) == prefix


# ---------------------------------------------------------------------------
# cost model
# ---------------------------------------------------------------------------

@dataclass
class LookupCostModel:
    """Per-hop processing cost constants, all in microseconds.

    The absolute values are free parameters of the model: scenarios calibrate
    them so the headline latency ratios come out at desk scale (see the
    `calibrate` subcommand).  The structure is what matters — IP pays per trie
    node visited and per kilobit processed; label switching pays a flat
    lookup, a per-kilobit rate of its own, and an extra edge charge where
    labels are pushed or popped.
    """

    ip_cost_per_trie_node_us: float = 0.5
    mpls_lookup_us: float = 1.0
    edge_label_op_us: float = 12.0
    per_hop_fixed_us: float = 5.0
    # per-size terms; zero by default so the flat-cost model is the baseline
    ip_cost_per_kbit_us: float = 0.0
    mpls_cost_per_kbit_us: float = 0.0


# ---------------------------------------------------------------------------
# IP side: route entries in a binary trie
# ---------------------------------------------------------------------------

@dataclass
class RouteEntry:
    prefix: int
    prefix_len: int
    next_hop_node: str | None
    out_interface: int | None


class Fib:
    """Binary trie over address bits, most significant bit first."""

    class _Node:
        __slots__ = ("children", "entry")

        def __init__(self):
            self.children = [None, None]
            self.entry = None

    def __init__(self, cost_model: LookupCostModel | None = None):
        self.root = self._Node()
        self.entry_count = 0
        self.cost_model = cost_model or LookupCostModel()


def fib_insert(fib: Fib, entry: RouteEntry) -> Fib:
    """Insert a route; a duplicate (prefix, len) replaces the old entry."""
    if not 0 <= entry.prefix_len <= 32:
        raise ValueError(f"prefix length {entry.prefix_len} outside [0, 32]")
    if entry.prefix_len < 32 and entry.prefix & ((1 << (32 - entry.prefix_len)) - 1):
        raise ValueError(
            f"prefix {format_addr(entry.prefix)}/{entry.prefix_len} has host bits set")
    node = fib.root
    for i in range(entry.prefix_len):
        bit = (entry.prefix >> (31 - i)) & 1
        if node.children[bit] is None:
            node.children[bit] = Fib._Node()
        node = node.children[bit]
    if node.entry is None:
        fib.entry_count += 1
    node.entry = entry
    return fib


def fib_lookup(fib: Fib, addr: int) -> tuple[RouteEntry | None, float]:
    """Longest prefix match.

    Returns (entry, cost_us) where cost is the per-node charge times the
    number of trie nodes visited on the search path (the root counts).
    None stands for no route.
    """
    node = fib.root
    visited = 1
    best = node.entry
    for i in range(32):
        node = node.children[(addr >> (31 - i)) & 1]
        if node is None:
            break
        visited += 1
        if node.entry is not None:
            best = node.entry
    return best, fib.cost_model.ip_cost_per_trie_node_us * visited


# ---------------------------------------------------------------------------
# MPLS side: flat incoming-label map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IlmKey:
    in_interface: int
    label: int


class LabelOp(enum.Enum):
    SWAP = "swap"
    POP = "pop"
    PUSH_ADDITIONAL = "push_additional"


@dataclass
class NhlfeEntry:
    op: LabelOp
    new_label: int | None
    next_hop_node: str | None
    out_interface: int | None

    def __post_init__(self):
        if self.op in (LabelOp.SWAP, LabelOp.PUSH_ADDITIONAL):
            if self.new_label is None or not 0 <= self.new_label < 2**20:
                raise ValueError(f"{self.op.value} needs a label below 2^20")


@dataclass(frozen=True)
class FecBinding:
    """Ingress-side binding: the first label of the path toward a prefix.

    label None marks a degenerate one-hop path where this node is both
    ingress and egress — the packet is relayed without ever being labeled.
    """

    label: int | None
    next_hop_node: str
    out_interface: int


class Lib:
    """Incoming label map: (in_interface, label) -> forwarding entry."""

    def __init__(self, cost_model: LookupCostModel | None = None):
        self.entries: dict[IlmKey, NhlfeEntry] = {}
        self.cost_model = cost_model or LookupCostModel()

    @property
    def entry_count(self) -> int:
        return len(self.entries)


def lib_install(lib: Lib, key: IlmKey, entry: NhlfeEntry) -> Lib:
    if not 0 <= key.label < 2**20:
        raise ValueError(f"label {key.label} outside [0, 2^20)")
    lib.entries[key] = entry
    return lib


def ilm_lookup(lib: Lib, key: IlmKey) -> tuple[NhlfeEntry | None, float]:
    """Flat-index lookup: cost is constant in the table size."""
    if not 0 <= key.label < 2**20:
        raise ValueError(f"label {key.label} outside [0, 2^20)")
    return lib.entries.get(key), lib.cost_model.mpls_lookup_us


# ---------------------------------------------------------------------------
# per-node decision
# ---------------------------------------------------------------------------

class Action(enum.Enum):
    DELIVER = "deliver"
    RELAY = "relay"
    DROP = "drop"


class DropReason(enum.Enum):
    TTL_EXPIRED = "ttl_expired"
    NO_ROUTE = "no_route"
    NO_BINDING = "no_binding"
    POLICED = "policed"
    QUEUE_FULL = "queue_full"


@dataclass
class ForwardDecision:
    action: Action
    packet: PacketRecord
    node_delay_us: float
    next_hop: str | None = None
    out_interface: int | None = None
    drop_reason: DropReason | None = None


@dataclass
class NodeState:
    """Everything one router needs to decide what to do with a packet."""

    node_id: str
    cost_model: LookupCostModel = field(default_factory=LookupCostModel)
    fib: Fib = None
    lib: Lib = None
    fec_bindings: dict = field(default_factory=dict)   # (prefix, len) -> FecBinding
    local_prefixes: list = field(default_factory=list)  # [(prefix, len)]

    def __post_init__(self):
        if self.fib is None:
            self.fib = Fib(self.cost_model)
        if self.lib is None:
            self.lib = Lib(self.cost_model)

    def is_local(self, addr: int) -> bool:
        return any(addr_in_prefix(addr, p, l) for p, l in self.local_prefixes)


def _kbit(cost_per_kbit: float, wire_bits: int) -> float:
    return cost_per_kbit * wire_bits / 1000.0


def forward_ip(node: NodeState, packet: PacketRecord) -> ForwardDecision:
    """Classic routing: longest-prefix lookup, TTL decrement, relay."""
    model = node.cost_model
    wire = wire_size_bits(packet)
    if node.is_local(packet.dst_addr):
        return ForwardDecision(Action.DELIVER, packet, 0.0)
    entry, fib_cost = fib_lookup(node.fib, packet.dst_addr)
    delay = fib_cost + model.per_hop_fixed_us + _kbit(model.ip_cost_per_kbit_us, wire)
    if packet.ip_ttl - 1 <= 0:
        return ForwardDecision(Action.DROP, packet, delay,
                               drop_reason=DropReason.TTL_EXPIRED)
    if entry is None or entry.next_hop_node is None:
        return ForwardDecision(Action.DROP, packet, delay,
                               drop_reason=DropReason.NO_ROUTE)
    relayed = replace(packet, ip_ttl=packet.ip_ttl - 1)
    return ForwardDecision(Action.RELAY, relayed, delay,
                           next_hop=entry.next_hop_node,
                           out_interface=entry.out_interface)


def _match_fec(node: NodeState, addr: int) -> FecBinding | None:
    best = None
    best_len = -1
    for (prefix, plen), binding in node.fec_bindings.items():
        if plen > best_len and addr_in_prefix(addr, prefix, plen):
            best, best_len = binding, plen
    return best


def forward_mpls(node: NodeState, packet: PacketRecord,
                 in_interface: int | None = None) -> ForwardDecision:
    """Label switching.

    Unlabeled packets are pushed per the node's FEC binding (ingress edge);
    labeled packets are swapped or popped per the incoming-label map.  A pop
    entry that names its next hop relays directly; one that does not falls
    back to a routing lookup, paying its cost on top.
    """
    model = node.cost_model
    wire = wire_size_bits(packet)

    if not packet.label_stack:
        if node.is_local(packet.dst_addr):
            return ForwardDecision(Action.DELIVER, packet, 0.0)
        binding = _match_fec(node, packet.dst_addr)
        base = model.mpls_lookup_us + model.per_hop_fixed_us \
            + _kbit(model.mpls_cost_per_kbit_us, wire)
        if binding is None:
            return ForwardDecision(Action.DROP, packet, base,
                                   drop_reason=DropReason.NO_ROUTE)
        if binding.label is None:
            # degenerate one-hop path: never labeled, no edge operation
            return ForwardDecision(Action.RELAY, packet, base,
                                   next_hop=binding.next_hop_node,
                                   out_interface=binding.out_interface)
        pushed = push_label(packet, binding.label,
                            EF_CLASS_BITS if packet.traffic_class is TrafficClass.EF else 0,
                            packet.ip_ttl)
        return ForwardDecision(Action.RELAY, pushed,
                               base + model.edge_label_op_us,
                               next_hop=binding.next_hop_node,
                               out_interface=binding.out_interface)

    key = IlmKey(in_interface if in_interface is not None else -1,
                 packet.label_stack[0].label)
    entry, lookup_cost = ilm_lookup(node.lib, key)
    delay = lookup_cost + model.per_hop_fixed_us \
        + _kbit(model.mpls_cost_per_kbit_us, wire)
    if entry is None:
        return ForwardDecision(Action.DROP, packet, delay,
                               drop_reason=DropReason.NO_BINDING)

    if entry.op is LabelOp.SWAP:
        try:
            swapped = swap_label(packet, entry.new_label)
        except TtlExpiredError:
            return ForwardDecision(Action.DROP, packet, delay,
                                   drop_reason=DropReason.TTL_EXPIRED)
        return ForwardDecision(Action.RELAY, swapped, delay,
                               next_hop=entry.next_hop_node,
                               out_interface=entry.out_interface)

    if entry.op is LabelOp.PUSH_ADDITIONAL:
        top = packet.label_stack[0]
        pushed = push_label(packet, entry.new_label, top.class_bits, top.ttl)
        return ForwardDecision(Action.RELAY, pushed,
                               delay + model.edge_label_op_us,
                               next_hop=entry.next_hop_node,
                               out_interface=entry.out_interface)

    # POP at the egress edge
    popped, _ = pop_label(packet)
    delay += model.edge_label_op_us
    if entry.next_hop_node is not None:
        if not popped.label_stack and node.is_local(popped.dst_addr):
            return ForwardDecision(Action.DELIVER, popped, delay)
        return ForwardDecision(Action.RELAY, popped, delay,
                               next_hop=entry.next_hop_node,
                               out_interface=entry.out_interface)
    if popped.label_stack:
        return ForwardDecision(Action.DROP, popped, delay,
                               drop_reason=DropReason.NO_BINDING)
    ip_decision = forward_ip(node, popped)
    ip_decision.node_delay_us += delay
    return ip_decision
