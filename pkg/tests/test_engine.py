"""Event-engine tests, anchored by a hand-computed closed-form RTT oracle."""

from types import SimpleNamespace

import pytest

from mplsim.engine import EventKind, NodeMode, SimState, SimulationError, round_us, run
from mplsim.forwarding import DropReason
from mplsim.packet import EF_TOS, make_packet
from mplsim.tunnel import TunnelConfig
import simwalk
from simwalk import DEFAULT_LAN as LAN, DEFAULT_MODEL as MODEL

build_chain_sim = simwalk.chain_sim


class Recorder:
    """Minimal metrics hook capturing deliveries and drops."""

    def __init__(self, sim):
        self.sim = sim
        self.rtts = []
        self.delivered = []
        self.dropped = []

    def on_delivered(self, packet, node_id, now_us):
        meta = self.sim.flow_of.get(packet.packet_id)
        if meta is not None and meta.echo and packet.dst_addr == meta.src_addr:
            self.rtts.append(now_us - packet.created_at)
        self.delivered.append(packet)

    def on_dropped(self, packet, reason, node_id, now_us):
        self.dropped.append((packet.packet_id, reason, node_id))

    def on_queue_wait(self, traffic_class, wait_us, packet):
        pass


def send_pings(sim, topo, count, payload, gap_us=10_000, tos=EF_TOS,
               ttl=64, start_us=0, src="A", dst="C"):
    src_addr = topo.host_prefixes[src][0] | 10
    dst_addr = topo.host_prefixes[dst][0] | 10
    flow = SimpleNamespace(echo=True, src_addr=src_addr, dst_addr=dst_addr)

    def fire(sim_, now_us):
        pkt = make_packet(sim_.next_packet_id(), src_addr, dst_addr, tos=tos,
                          ip_ttl=ttl, payload_bits=payload, created_at=now_us)
        sim_.flow_of[pkt.packet_id] = flow
        sim_.inject(pkt, src)

    for i in range(count):
        sim.schedule(start_us + i * gap_us, EventKind.GENERATOR_FIRE, fire)
    return flow


def run_pings(g, mode, payload, count=1, **kw):
    sim, topo = build_chain_sim(g, mode, **kw)
    rec = Recorder(sim)
    sim.metrics = rec
    send_pings(sim, topo, count, payload)
    report = run(sim, end_time_us=120_000_000)
    return sim, report, rec


# ---------------------------------------------------------------------------
# closed-form oracle, computed from first principles
# ---------------------------------------------------------------------------

def closed_form_rtt(mode, g, payload):
    ct = MODEL["ip_cost_per_trie_node_us"]
    cm = MODEL["mpls_lookup_us"]
    e = MODEL["edge_label_op_us"]
    f = MODEL["per_hop_fixed_us"]
    ki = MODEL["ip_cost_per_kbit_us"]
    km = MODEL["mpls_cost_per_kbit_us"]
    rate, prop = LAN["link_rate_bps"], LAN["link_delay_us"]
    ip_wire = payload + 160          # network header
    lbl_wire = ip_wire + 32          # plus one label entry

    def ser(w):
        return round_us(w * 1e6 / rate)

    if mode is NodeMode.IP_ROUTING:
        # both host prefixes are /24s: every lookup walks root + 24 bits
        links = (g + 1) * (ser(ip_wire) + prop)
        nodes = g * round_us(ct * 25 + f + ki * ip_wire / 1000)
    elif g == 1:
        # one gateway is ingress and egress at once: never labeled
        links = 2 * (ser(ip_wire) + prop)
        nodes = round_us(cm + f + km * ip_wire / 1000)
    else:
        links = 2 * (ser(ip_wire) + prop) + (g - 1) * (ser(lbl_wire) + prop)
        nodes = (round_us(cm + e + f + km * ip_wire / 1000)      # ingress
                 + (g - 2) * round_us(cm + f + km * lbl_wire / 1000)
                 + round_us(cm + e + f + km * lbl_wire / 1000))  # egress
    return 2 * (links + nodes)


@pytest.mark.parametrize("mode", [NodeMode.IP_ROUTING, NodeMode.MPLS_SWITCHING])
@pytest.mark.parametrize("g", [1, 2, 9])
@pytest.mark.parametrize("payload", [512, 4096, 12000])
def test_single_ping_matches_closed_form(mode, g, payload):
    _, report, rec = run_pings(g, mode, payload)
    assert report.delivered == 2  # request and its echo
    assert rec.rtts == [closed_form_rtt(mode, g, payload)]


# ---------------------------------------------------------------------------
# scheduling semantics
# ---------------------------------------------------------------------------

def test_same_time_events_run_in_schedule_order():
    sim = SimState()
    order = []
    sim.schedule(100, EventKind.GENERATOR_FIRE, lambda s, t: order.append("a"))
    sim.schedule(100, EventKind.GENERATOR_FIRE, lambda s, t: order.append("b"))
    sim.schedule(50, EventKind.GENERATOR_FIRE, lambda s, t: order.append("first"))
    run(sim, end_time_us=1000)
    assert order == ["first", "a", "b"]


def test_scheduling_in_the_past_is_fatal():
    sim = SimState()
    sim.schedule(100, EventKind.GENERATOR_FIRE,
                 lambda s, t: s.schedule(99, EventKind.GENERATOR_FIRE, lambda *_: None))
    with pytest.raises(SimulationError):
        run(sim, end_time_us=1000)


def test_empty_run_reaches_end_time():
    sim = SimState()
    report = run(sim, end_time_us=5_000_000)
    assert report.end_clock_us == 5_000_000
    assert report.injected == report.delivered == 0
    assert not report.drops


# ---------------------------------------------------------------------------
# lifecycle accounting
# ---------------------------------------------------------------------------

def test_idle_chain_rtts_are_all_identical():
    _, report, rec = run_pings(5, NodeMode.MPLS_SWITCHING, 4096, count=20)
    assert len(rec.rtts) == 20
    assert len(set(rec.rtts)) == 1


def test_packet_conservation_identity():
    sim, report, rec = run_pings(4, NodeMode.IP_ROUTING, 4096, count=50)
    assert report.injected == 100  # 50 requests + 50 echoes
    assert report.delivered == 100
    assert report.injected == report.delivered + sum(report.drops.values()) \
        + report.in_flight
    assert report.in_flight == 0
    assert sim.audit_in_flight() == 0


def test_ttl_expiry_is_counted():
    sim, topo = build_chain_sim(9, NodeMode.IP_ROUTING)
    rec = Recorder(sim)
    sim.metrics = rec
    send_pings(sim, topo, 1, 512, ttl=3)
    report = run(sim, end_time_us=60_000_000)
    assert report.drops == {DropReason.TTL_EXPIRED: 1}
    assert report.delivered == 0
    assert rec.rtts == []
    assert report.in_flight == 0


def test_unroutable_destination_drops_no_route():
    sim, topo = build_chain_sim(3, NodeMode.IP_ROUTING)
    rec = Recorder(sim)
    sim.metrics = rec

    def fire(sim_, now_us):
        pkt = make_packet(sim_.next_packet_id(), 0xC0A8000A, 0x08080808,
                          payload_bits=512, created_at=now_us)
        sim_.flow_of[pkt.packet_id] = SimpleNamespace(
            echo=True, src_addr=0xC0A8000A, dst_addr=0x08080808)
        sim_.inject(pkt, "A")

    sim.schedule(0, EventKind.GENERATOR_FIRE, fire)
    report = run(sim, end_time_us=10_000_000)
    assert report.drops == {DropReason.NO_ROUTE: 1}


def test_identical_runs_are_bit_identical():
    results = []
    for _ in range(2):
        sim, report, rec = run_pings(6, NodeMode.MPLS_SWITCHING, 1024, count=30)
        results.append((report.injected, report.delivered,
                        sorted(report.drops.items(), key=str), rec.rtts))
    assert results[0] == results[1]


def test_disabling_qos_never_slows_a_packet():
    _, _, rec_on = run_pings(5, NodeMode.MPLS_SWITCHING, 4096, qos_enabled=True)
    _, _, rec_off = run_pings(5, NodeMode.MPLS_SWITCHING, 4096, qos_enabled=False)
    assert rec_off.rtts[0] <= rec_on.rtts[0]


def test_work_conservation_checks_ran():
    _, report, _ = run_pings(3, NodeMode.IP_ROUTING, 4096, count=5)
    assert report.work_checks > 0


# ---------------------------------------------------------------------------
# tunnel endpoints
# ---------------------------------------------------------------------------

def test_tunnel_wraps_between_gateways_and_restores():
    cfg = TunnelConfig(enabled=True)
    sim, report, rec = run_pings(4, NodeMode.MPLS_SWITCHING, 12000, count=3,
                                 tunnel_cfg=cfg)
    _, _, rec_bare = run_pings(4, NodeMode.MPLS_SWITCHING, 12000, count=3)
    assert len(rec.rtts) == 3
    # everything that reached a host was unwrapped and restored
    for pkt in rec.delivered:
        assert not pkt.tunnel_wrapped
        assert pkt.payload_bits == 12000
    # at the default 0.7 ratio the shrunken wire beats the crypto delay
    assert rec.rtts[0] < rec_bare.rtts[0]
    # without compression the overhead and crypto can only slow things down
    no_comp = TunnelConfig(compression_ratio=1.0, enabled=True)
    _, _, rec_nc = run_pings(4, NodeMode.MPLS_SWITCHING, 12000, count=3,
                             tunnel_cfg=no_comp)
    assert rec_nc.rtts[0] > rec_bare.rtts[0]
