"""Tests for traffic generators and metric collection/summarization."""

import pytest

from mplsim.engine import NodeMode, run
from mplsim.forwarding import DropReason
from mplsim.packet import EF_TOS, TrafficClass
from mplsim.traffic import (
    FlowKind,
    FlowSpec,
    MetricsCollector,
    install_flow,
    jitter_us,
    mean,
    percentile,
    summarize,
)
from simwalk import chain_sim


def _ping_spec(count, payload=4096, tos=EF_TOS, start=0, gap=10_000):
    return FlowSpec(kind=FlowKind.PING_BURST, src="A", dst="C", count=count,
                    packet_payload_bits=payload, tos=tos, start_time_us=start,
                    gap_us=gap)


def _cbr_spec(rate, duration, payload=12_000, tos=0, start=0, dst="C"):
    return FlowSpec(kind=FlowKind.CBR_UDP, src="A", dst=dst, rate_bps=rate,
                    duration_us=duration, packet_payload_bits=payload, tos=tos,
                    start_time_us=start)


def _simulate(specs, g=2, mode=NodeMode.MPLS_SWITCHING, end_us=30_000_000, **kw):
    sim, topo = chain_sim(g, mode, **kw)
    collector = MetricsCollector()
    collector.attach(sim)
    flows = [install_flow(sim, spec) for spec in specs]
    report = run(sim, end_time_us=end_us)
    return flows, collector, report


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_flow_spec_validation():
    with pytest.raises(ValueError):
        _ping_spec(count=0)
    with pytest.raises(ValueError):
        _cbr_spec(rate=0, duration=1_000_000)
    with pytest.raises(ValueError):
        FlowSpec(kind=FlowKind.CBR_UDP, src="A", dst="C", rate_bps=100,
                 duration_us=1, packet_payload_bits=4)  # payload below minimum


# ---------------------------------------------------------------------------
# ping bursts
# ---------------------------------------------------------------------------

def test_thousand_ping_burst_full_return():
    flows, collector, report = _simulate([_ping_spec(1000)])
    flow = flows[0]
    assert flow.sent == 1000
    assert len(flow.rtts) == 1000
    summary = summarize(collector)
    row = summary["flows"][0]
    assert row["loss"] == 0.0
    assert row["rtt"]["jitter_us"] == 0  # idle chain: every sample identical


def test_unreturned_pings_count_as_lost():
    # cut the run off after ~2 round trips of a 5-ping burst
    flows, collector, _ = _simulate([_ping_spec(5)], end_us=25_000)
    flow = flows[0]
    assert flow.sent > len(flow.rtts)
    row = summarize(collector)["flows"][0]
    assert row["loss"] == pytest.approx((flow.sent - len(flow.rtts)) / flow.sent)


def test_unroutable_ping_flow_loses_everything():
    spec = FlowSpec(kind=FlowKind.PING_BURST, src="A", dst="C", count=10,
                    packet_payload_bits=512, dst_addr_override=0x08080808)
    flows, collector, report = _simulate([spec])
    assert report.drops[DropReason.NO_ROUTE] == 10
    row = summarize(collector)["flows"][0]
    assert row["loss"] == 1.0
    assert row["rtt"] is None  # no samples — marked, not NaN


# ---------------------------------------------------------------------------
# constant-bit-rate flows
# ---------------------------------------------------------------------------

def test_cbr_packet_count_arithmetic():
    # 220 kbps of 1000-bit payloads for 10 seconds
    sim, topo = chain_sim(2, NodeMode.IP_ROUTING)
    flow = install_flow(sim, _cbr_spec(220_000, 10_000_000, payload=1000))
    run(sim, end_time_us=15_000_000)
    assert abs(flow.sent - 2200) <= 1


def test_cbr_offered_rate_error_below_tenth_percent():
    sim, topo = chain_sim(2, NodeMode.IP_ROUTING)
    flow = install_flow(sim, _cbr_spec(333_000, 10_000_000, payload=7001))
    run(sim, end_time_us=15_000_000)
    offered = flow.sent * 7001 / 10.0
    assert abs(offered - 333_000) / 333_000 < 0.001


def test_zero_duration_cbr_sends_nothing():
    sim, topo = chain_sim(2, NodeMode.IP_ROUTING)
    flow = install_flow(sim, _cbr_spec(220_000, 0))
    run(sim, end_time_us=1_000_000)
    assert flow.sent == 0


def test_overload_into_slow_link_delivers_line_rate():
    """10 Mbps offered into a 2 Mbps wire: ~2 Mbps through, ~80% lost."""
    specs = [_cbr_spec(10_000_000, 10_000_000)]
    flows, collector, report = _simulate(
        specs, g=1, mode=NodeMode.IP_ROUTING, end_us=10_000_000,
        phb_overrides=dict(link_rate_bps=2_000_000, link_delay_us=100,
                           ef_rate_bps=220_000, be_rate_bps=1_780_000))
    flow = flows[0]
    # steady-state intervals: delivered wire bits per second ≈ link rate
    steady = [collector.class_bits[(TrafficClass.BE, i)] for i in range(3, 9)]
    for bits in steady:
        assert bits == pytest.approx(2_000_000, rel=0.02)
    row = summarize(collector)["flows"][0]
    assert row["loss"] == pytest.approx(0.8, abs=0.03)


# ---------------------------------------------------------------------------
# accounting and summaries
# ---------------------------------------------------------------------------

def test_per_class_bits_sum_to_total_delivered():
    specs = [_ping_spec(50, tos=EF_TOS), _cbr_spec(400_000, 5_000_000, payload=2000)]
    flows, collector, report = _simulate(specs, g=3, end_us=20_000_000)
    by_class = sum(collector.class_bits.values())
    assert by_class == collector.delivered_wire_bits
    by_subnet = sum(collector.subnet_bits.values())
    assert by_subnet == collector.delivered_wire_bits


def test_summary_statistics_basics():
    assert mean([10, 20, 30]) == 20
    assert percentile([30, 10, 20], 50) == 20
    assert percentile(list(range(1, 101)), 95) == 95
    assert percentile([5], 99) == 5
    assert jitter_us([100, 100, 100]) == 0
    assert jitter_us([100, 140, 120]) == 30  # mean of |40|, |-20|
    assert jitter_us([42]) == 0


def test_summarize_is_deterministic():
    flows, collector, _ = _simulate([_ping_spec(20)])
    assert summarize(collector) == summarize(collector)


def test_queue_waits_recorded_per_class():
    # saturating BE behind a slow wire forces nonzero queue waits
    specs = [_cbr_spec(4_000_000, 2_000_000)]
    flows, collector, _ = _simulate(
        specs, g=1, mode=NodeMode.IP_ROUTING, end_us=4_000_000,
        phb_overrides=dict(link_rate_bps=2_000_000, link_delay_us=100,
                           ef_rate_bps=220_000, be_rate_bps=1_780_000))
    waits = collector.queue_waits[TrafficClass.BE]
    assert waits and max(waits) > 0
