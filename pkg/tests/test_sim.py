from dataclasses import replace

import numpy as np
import pytest

from caparrot.channel import Friis, Nakagami, RadioConfig, reception_probability
from caparrot.mobility import Vec3
from caparrot.sim.bound import route_availability_bound
from caparrot.sim.engine import deliver_broadcast, geo_next_hop, run, run_baseline_geo
from caparrot.sim.scenario import (BUILTIN, Flow, Mobility, Scenario, ScenarioError, apply_overrides, dumps,
                                   load, loads, parse_override)


def static(positions, source=0, destination=None, duration=60.0, **kw):
    n = len(positions)
    dest = n - 1 if destination is None else destination
    return Scenario(nodes=n, duration_s=duration,
                    mobility=Mobility(positions_m=tuple(Vec3(*p) for p in positions)),
                    traffic=(Flow(source=source, destination=dest),), **kw)


def fixed(sc):
    return replace(sc, adaptation=replace(sc.adaptation, enabled=False))


# -- static topologies -----------------------------------------------------------

def test_static_pair_in_range_delivers():
    rec = run(fixed(static([(100, 100, 100), (200, 100, 100)])), seed=1)
    assert rec.pdr >= 0.99
    assert rec.mean_hops == 1.0
    assert rec.route_availability == 1.0


def test_static_pair_out_of_range_delivers_nothing():
    sc = static([(0, 0, 0), (500, 500, 250)])  # ~750 m apart
    rec = run(fixed(sc), seed=1)
    assert rec.pdr == 0.0 and rec.delivered == 0
    assert route_availability_bound(sc, 1) == 0.0


def test_static_pair_bound_is_one():
    assert route_availability_bound(static([(100, 100, 100), (200, 100, 100)]), 3) == 1.0


U_SHAPE = [(100, 250, 100), (100, 40, 100), (320, 60, 100), (400, 250, 100)]


def test_geo_local_minimum_is_dropped():
    # the source's only neighbor is farther from the destination than the source
    own, dest = Vec3(*U_SHAPE[0]), Vec3(*U_SHAPE[3])
    assert geo_next_hop(own, {1: Vec3(*U_SHAPE[1])}, 3, dest) is None
    rec = run_baseline_geo(static(U_SHAPE), seed=2)
    assert rec.pdr == 0.0
    assert rec.drops == {"local_minimum": rec.sent}


def test_q_routing_detours_around_the_gap():
    sc = static(U_SHAPE)
    assert route_availability_bound(sc, 2) == 1.0
    rec = run(fixed(sc), seed=2)
    assert rec.pdr > 0.95
    assert rec.mean_hops == pytest.approx(3.0)


def test_geo_direct_neighbor_is_one_hop():
    assert geo_next_hop(Vec3(0, 0, 0), {4: Vec3(400, 0, 0), 7: Vec3(10, 0, 0)}, 7,
                        Vec3(10, 0, 0)) == 7
    rec = run_baseline_geo(static([(100, 100, 100), (200, 100, 100)], duration=20.0), seed=1)
    assert rec.mean_hops == 1.0 and rec.pdr > 0.99


# -- broadcast ----------------------------------------------------------------------

def test_broadcast_receivers():
    pos = np.array([[0, 0, 100], [100, 0, 100], [400, 0, 100]], dtype=float)
    assert deliver_broadcast(0, pos, Friis(2.75), RadioConfig()) == {1}
    assert deliver_broadcast(0, pos[:1], Friis(2.75), RadioConfig()) == set()


def test_broadcast_fading_matches_gamma_tail():
    model, cfg = Nakagami(2.75, 2.0), RadioConfig()
    pos = np.array([[0, 0, 100], [210, 0, 100]], dtype=float)
    rng = np.random.default_rng(11)
    hits = sum(1 in deliver_broadcast(0, pos, model, cfg, rng) for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(reception_probability(model, cfg, 210.0), abs=0.02)


# -- mobile runs ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_records():
    sc = replace(load("table1_defaults"), duration_s=60.0)
    return sc, {v: run(replace(sc, variant=v), seed=4)
                for v in ("ca-parrot", "parrot-fixed", "geo-baseline")}


def test_records_are_well_formed(default_records):
    sc, recs = default_records
    for rec in recs.values():
        assert 0.0 <= rec.pdr <= 1.0
        assert rec.sent == rec.delivered + rec.dropped + rec.in_flight
        assert rec.sent > 0
        if rec.delivered:
            assert 0 < rec.latency_p50_s <= rec.latency_p95_s <= rec.latency_p99_s
            assert rec.mean_hops >= 1.0


def test_bound_dominates_every_variant(default_records):
    sc, recs = default_records
    bound = route_availability_bound(sc, 4)
    for rec in recs.values():
        assert rec.pdr <= bound + 1e-9
        assert rec.route_availability == pytest.approx(bound)


def test_adaptive_run_classifies_its_environment():
    sc = replace(load("urban"), duration_s=30.0)
    rec = run(sc, seed=5)
    labels = {entry[2] for entry in rec.classification_trace}
    assert labels and labels <= {"rural", "suburban", "urban"}
    assert rec.classification_trace[-1][2] == "urban"


def test_same_seed_same_record():
    sc = replace(load("suburban"), duration_s=20.0)
    assert run(sc, 9).to_row() == run(sc, 9).to_row()
    assert run(sc, 9).to_row() != run(sc, 10).to_row()


def test_waypoint_seed_pins_mobility():
    sc = replace(load("rural"), duration_s=30.0,
                 mobility=Mobility(waypoint_seed=123))
    assert route_availability_bound(sc, 1) == route_availability_bound(sc, 2)


def test_packet_trace_accounts_for_every_packet():
    trace = []
    rec = run(fixed(replace(load("rural"), duration_s=20.0)), seed=3, packet_trace=trace)
    assert len(trace) == rec.delivered + rec.dropped
    assert sum(1 for t in trace if t[3] == "delivered") == rec.delivered


# -- scenario files ---------------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN)
def test_shipped_scenarios_round_trip(name):
    sc = load(name)
    assert loads(dumps(sc)) == sc


def test_table1_defaults():
    sc = load("table1_defaults")
    assert (sc.nodes, sc.duration_s, sc.playground_m) == (10, 900.0, Vec3(500, 500, 250))
    assert sc.radio.tx_power_dbm == 20.0 and sc.radio.sensitivity_dbm == -85.0
    assert sc.mobility.speed == pytest.approx(50 / 3.6)
    assert sc.timers.chirp_interval == 0.5
    assert sc.traffic[0].bitrate_bps == 2e6
    assert load("urban").channel == Nakagami(2.75, 2.0)


def test_scenario_errors_carry_location():
    with pytest.raises(ScenarioError) as err:
        loads("nodes: 10\nradio:\n  tx_power: 20\n")
    assert err.value.line == 3
    assert "radio.tx_power" in str(err.value)
    with pytest.raises(ScenarioError) as err:
        loads("nodes: [1,\n")
    assert err.value.line is not None


@pytest.mark.parametrize("text", [
    "nodes: 1\n",
    "variant: aodv\n",
    "duration_s: 0\n",
    "traffic:\n- source: 0\n  destination: 0\n",
    "channel: desert\n",
    "nodes: 3\nmobility:\n  positions_m: [[0, 0, 0]]\n",
])
def test_invalid_scenarios(text):
    with pytest.raises(ScenarioError):
        loads(text)


def test_overrides():
    sc = apply_overrides(load("rural"), dict([parse_override("params.r_b=50"),
                                              parse_override("channel=urban")]))
    assert sc.params.r_b == 50.0
    assert isinstance(sc.channel, Nakagami)
    with pytest.raises(ScenarioError, match="valid keys"):
        apply_overrides(sc, {"params.beta": 1})
    with pytest.raises(ScenarioError):
        parse_override("params.r_b")


def test_custom_channel_mapping():
    sc = loads("channel:\n  model: nakagami\n  exponent: 3.0\n  m: 1.0\n")
    assert sc.channel == Nakagami(3.0, 1.0)
    assert loads(dumps(sc)) == sc
