"""Topology, shortest-path route computation, and label distribution.

Routes are minimum-hop with ties broken toward the lowest next-hop node id,
so both forwarding planes are fed from one deterministic source of truth.
Label distribution walks each destination's route tree from the egress
gateway upward: every router allocates one local label per destination
prefix (sequentially from 16, below that is reserved) and installs an
incoming-label entry on each upstream-facing interface.  The egress entry
pops and names the attached host directly; all others swap to the
downstream router's label.  Explicitly pinned paths allocate fresh labels
on top and override the ingress binding, which is how traffic engineering
detours are expressed.
"""

import enum
from collections import deque
from dataclasses import dataclass, field

from .forwarding import (
    FecBinding,
    Fib,
    IlmKey,
    LabelOp,
    Lib,
    NhlfeEntry,
    RouteEntry,
    fib_insert,
    fib_lookup,
    lib_install,
    parse_prefix,
)

FIRST_LABEL = 16  # labels 0..15 are reserved


class NodeRole(enum.Enum):
    HOST = "host"
    EDGE = "edge_router"
    CORE = "core_router"


@dataclass(frozen=True)
class TopoNode:
    id: str
    role: NodeRole


@dataclass
class TopoLink:
    a: str
    b: str
    config: object = None  # opaque link parameters; the engine interprets them


@dataclass
class Topology:
    """Nodes, links, and which /24 hangs off which host.

    Interface ids are implied by link declaration order: a node's k-th
    mentioned link is its interface k.
    """

    nodes: list
    links: list
    host_prefixes: dict  # host node id -> (prefix, prefix_len)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        self._ifaces = {i: [] for i in known}
        self._if_by_peer = {}
        for link in self.links:
            if link.a == link.b:
                raise ValueError(f"self-loop at {link.a}")
            for me, peer in ((link.a, link.b), (link.b, link.a)):
                if me not in known or peer not in known:
                    raise ValueError(f"link {link.a}-{link.b} names unknown node")
                if (me, peer) in self._if_by_peer:
                    raise ValueError(f"parallel link {link.a}-{link.b}")
                self._if_by_peer[(me, peer)] = len(self._ifaces[me])
                self._ifaces[me].append((peer, link))
        for host in self.host_prefixes:
            if host not in known:
                raise ValueError(f"prefix assigned to unknown node {host}")

    def neighbors(self, node_id: str) -> list:
        return [peer for peer, _ in self._ifaces[node_id]]

    def interface_id(self, node_id: str, peer: str) -> int:
        try:
            return self._if_by_peer[(node_id, peer)]
        except KeyError:
            raise ValueError(f"no link between {node_id} and {peer}") from None

    def link_between(self, a: str, b: str) -> TopoLink:
        return self._ifaces[a][self.interface_id(a, b)][1]

    def routers(self) -> list:
        return [n.id for n in self.nodes if n.role is not NodeRole.HOST]


def build_chain(gateways: int, link_config: object = None) -> Topology:
    """Host A - B1..Bn - host C, the workhorse layout of the experiments."""
    if gateways < 1:
        raise ValueError("need at least one gateway")
    names = [f"B{i}" for i in range(1, gateways + 1)]
    nodes = [TopoNode("A", NodeRole.HOST)]
    for i, name in enumerate(names):
        edge = i == 0 or i == gateways - 1
        nodes.append(TopoNode(name, NodeRole.EDGE if edge else NodeRole.CORE))
    nodes.append(TopoNode("C", NodeRole.HOST))
    hops = ["A"] + names + ["C"]
    links = [TopoLink(hops[i], hops[i + 1], link_config) for i in range(len(hops) - 1)]
    return Topology(nodes=nodes, links=links,
                    host_prefixes={"A": parse_prefix("192.168.0.0/24"),
                                   "C": parse_prefix("192.168.1.0/24")})


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

def _bfs_dist(topo: Topology, source: str) -> dict:
    dist = {source: 0}
    frontier = deque([source])
    while frontier:
        node = frontier.popleft()
        for peer in topo.neighbors(node):
            if peer not in dist:
                dist[peer] = dist[node] + 1
                frontier.append(peer)
    return dist


def compute_routes(topo: Topology, cost_model=None) -> dict:
    """Minimum-hop next hops toward every host prefix, as per-node tries.

    Equal-cost ties go to the lowest next-hop node id (string order), so
    repeated runs produce identical tables.
    """
    fibs = {n.id: Fib(cost_model) for n in topo.nodes}
    for host, (prefix, plen) in sorted(topo.host_prefixes.items()):
        dist = _bfs_dist(topo, host)
        for node in fibs:
            if node == host or node not in dist:
                continue
            nearer = [p for p in topo.neighbors(node) if dist.get(p) == dist[node] - 1]
            next_hop = min(nearer)
            fib_insert(fibs[node], RouteEntry(prefix, plen, next_hop,
                                              topo.interface_id(node, next_hop)))
    return fibs


# ---------------------------------------------------------------------------
# label distribution
# ---------------------------------------------------------------------------

@dataclass
class LspRecord:
    fec: tuple            # (prefix, prefix_len)
    path: list            # router ids, ingress .. egress
    labels: list          # incoming label at each path node
    pinned: bool = False


@dataclass
class LabelPlan:
    """Everything label distribution produced, plus allocator state."""

    libs: dict = field(default_factory=dict)          # node -> Lib
    fec_bindings: dict = field(default_factory=dict)  # node -> {fec: FecBinding}
    lsps: list = field(default_factory=list)
    next_label: dict = field(default_factory=dict)    # node -> next free label
    pins: list = field(default_factory=list)          # [(fec, path tuple)]


def _egress_of(topo: Topology, fec: tuple) -> tuple:
    """(host node, its gateway router) for a host prefix."""
    for host, owned in topo.host_prefixes.items():
        if owned == fec:
            nbrs = topo.neighbors(host)
            if len(nbrs) != 1:
                raise ValueError(f"host {host} must have exactly one uplink")
            return host, nbrs[0]
    raise ValueError(f"no host owns prefix {fec}")


def _alloc(plan: LabelPlan, node: str) -> int:
    label = plan.next_label.setdefault(node, FIRST_LABEL)
    plan.next_label[node] = label + 1
    return label


def _install(lib: Lib, key: IlmKey, entry: NhlfeEntry):
    if key in lib.entries:
        raise RuntimeError(f"incoming label collision on {key}")
    lib_install(lib, key, entry)


def _attached_hosts(topo: Topology, router: str) -> list:
    return [p for p in topo.neighbors(router) if p in topo.host_prefixes]


def distribute_labels(topo: Topology, fecs: list, fibs: dict,
                      pins: list = None) -> LabelPlan:
    """Allocate labels and install swap/pop entries along every route tree.

    `fecs` order drives allocation order, so two runs over the same inputs
    produce identical plans.  `pins` replays previously pinned paths on top
    of the fresh plan (pinned bindings take priority at their ingress).
    """
    model = next(iter(fibs.values())).cost_model if fibs else None
    plan = LabelPlan(libs={r: Lib(model) for r in topo.routers()})
    for fec in fecs:
        host, gateway = _egress_of(topo, fec)
        down = {}
        for router in topo.routers():
            if router == gateway:
                down[router] = host
                continue
            entry, _ = fib_lookup(fibs[router], fec[0])
            if entry is not None:
                down[router] = entry.next_hop_node
        upstream = {r: sorted(p for p in down if down[p] == r) for r in down}

        # egress first, then breadth-first up the tree
        order = [gateway]
        frontier = deque(order)
        while frontier:
            node = frontier.popleft()
            for up in upstream.get(node, ()):
                order.append(up)
                frontier.append(up)

        local = {router: _alloc(plan, router) for router in order}
        for router in order:
            if router == gateway:
                nhlfe = (LabelOp.POP, None, host, topo.interface_id(router, host))
            else:
                nxt = down[router]
                nhlfe = (LabelOp.SWAP, local[nxt], nxt,
                         topo.interface_id(router, nxt))
            in_peers = list(upstream.get(router, ())) + [
                h for h in _attached_hosts(topo, router) if h != host]
            for peer in sorted(in_peers):
                _install(plan.libs[router],
                         IlmKey(topo.interface_id(router, peer), local[router]),
                         NhlfeEntry(*nhlfe))
            if router == gateway:
                binding = FecBinding(None, host, topo.interface_id(router, host))
            else:
                nxt = down[router]
                binding = FecBinding(local[nxt], nxt, topo.interface_id(router, nxt))
            plan.fec_bindings.setdefault(router, {})[fec] = binding

        for ingress in sorted(r for r in order if not upstream.get(r)):
            path = [ingress]
            while path[-1] != gateway:
                path.append(down[path[-1]])
            plan.lsps.append(LspRecord(fec, path, [local[r] for r in path]))

    for fec, path in (pins or []):
        _apply_pin(plan, topo, fec, list(path))
        plan.pins.append((fec, tuple(path)))
    return plan


def _apply_pin(plan: LabelPlan, topo: Topology, fec: tuple, path: list) -> LspRecord:
    host, gateway = _egress_of(topo, fec)
    routers = set(topo.routers())
    if not path:
        raise ValueError("empty pinned path")
    if len(set(path)) != len(path):
        raise ValueError("pinned path revisits a node")
    for node in path:
        if node not in routers:
            raise ValueError(f"pinned path may only cross routers, got {node!r}")
    for a, b in zip(path, path[1:]):
        topo.interface_id(a, b)  # raises when not adjacent
    if path[-1] != gateway:
        raise ValueError(f"pinned path must end at the egress gateway {gateway}")

    # validated; only now touch the plan
    local = {router: _alloc(plan, router) for router in path}
    for i, router in enumerate(path):
        if router == gateway:
            nhlfe = (LabelOp.POP, None, host, topo.interface_id(router, host))
        else:
            nxt = path[i + 1]
            nhlfe = (LabelOp.SWAP, local[nxt], nxt, topo.interface_id(router, nxt))
        if i == 0:
            in_peers = [h for h in _attached_hosts(topo, router) if h != host]
        else:
            in_peers = [path[i - 1]]
        for peer in sorted(in_peers):
            _install(plan.libs[router],
                     IlmKey(topo.interface_id(router, peer), local[router]),
                     NhlfeEntry(*nhlfe))
    if len(path) == 1:
        binding = FecBinding(None, host, topo.interface_id(path[0], host))
    else:
        binding = FecBinding(local[path[1]], path[1],
                             topo.interface_id(path[0], path[1]))
    plan.fec_bindings.setdefault(path[0], {})[fec] = binding
    record = LspRecord(fec, list(path), [local[r] for r in path], pinned=True)
    plan.lsps.append(record)
    return record


def pin_lsp(plan: LabelPlan, topo: Topology, fec: tuple, path: list) -> LspRecord:
    """Steer a prefix down an explicit router path, overriding the ingress.

    The path must be loop-free, follow existing links between routers, and
    end at the prefix's egress gateway.  Validation happens before any state
    changes, so a rejected pin leaves the plan untouched.
    """
    record = _apply_pin(plan, topo, fec, path)
    plan.pins.append((fec, tuple(path)))
    return record
