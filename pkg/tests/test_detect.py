import json
import math

import pytest

from helpers import fig1, grid_network
from rendezvous.config import Params
from rendezvous.detect import (
    detect_dc_tgard,
    detect_prism,
    detect_tgard,
    dump_geojson,
    npe,
    prism_candidates,
    run_detector,
    score,
)
from rendezvous.gaps import GapPair, TrajectoryGap, pair_gaps
from rendezvous.geometry import EllipseIntersection, Point
from rendezvous.network import HistoricTraces
from rendezvous.synth import ScenarioConfig, generate


def ids(nodes):
    return [r.node for r in nodes]


def test_fig1_counts():
    net, traces, pair, p = fig1()
    assert prism_candidates(net, pair) == [10, 11, 12, 17, 18, 19]
    assert ids(detect_prism(net, pair, None, p.to_s)) == [10, 11, 12, 17, 18, 19]
    tg, rep = detect_tgard(net, traces, pair, params=p)
    dc, _ = detect_dc_tgard(net, traces, pair, params=p)
    assert ids(tg) == ids(dc) == [11, 18]
    assert rep.counters.slices_processed == p.slices + 1
    n11 = tg[0]
    assert (n11.alpha_i.ea, n11.alpha_i.ld, n11.alpha_j.ea, n11.alpha_j.ld) == (3, 6, 4, 5)
    assert n11.overlap == (4, 5) and n11.overlap_s >= p.to_s


def test_prism_overlap_uses_gap_ranges():
    a = TrajectoryGap(0, "a", Point(0, 0), Point(0, 0), 120.0, 360.0, 1.0)
    b = TrajectoryGap(1, "b", Point(0, 0), Point(0, 0), 240.0, 480.0, 1.0)
    net = grid_network(2, 1)
    pair = GapPair(a, b, (240.0, 360.0), EllipseIntersection(a.ellipse, b.ellipse))
    got = detect_prism(net, pair, None, 120.0)
    assert [r.node for r in got] == [0, 1]
    assert all(r.overlap == (240.0, 360.0) for r in got)
    assert detect_prism(net, pair, None, 121.0) == []


def test_disjoint_ellipses_give_nothing():
    net = grid_network(10, 1)
    a = TrajectoryGap(0, "a", Point(0, 0), Point(1, 0), 0.0, 2.0, 1.0)
    b = TrajectoryGap(1, "b", Point(8, 0), Point(9, 0), 0.0, 2.0, 1.0)
    pair = GapPair(a, b, (0.0, 2.0), EllipseIntersection(a.ellipse, b.ellipse))
    assert detect_prism(net, pair, None, 0.0) == []


def test_empty_region_zero_slices():
    net = grid_network(3, 3)
    a = TrajectoryGap(0, "a", Point(0.5, 0.5), Point(0.5, 0.5), 0.0, 0.1, 1.0)
    b = TrajectoryGap(1, "b", Point(0.52, 0.5), Point(0.52, 0.5), 0.0, 0.1, 1.0)
    pair = GapPair(a, b, (0.0, 0.1), EllipseIntersection(a.ellipse, b.ellipse))
    nodes, rep = detect_dc_tgard(net, HistoricTraces.empty(), pair, K=4)
    assert nodes == [] and rep.counters.slices_processed == 0


def test_lenses_never_meet():
    # ellipses overlap but the objects are never simultaneously near each other
    net = grid_network(9, 1)
    a = TrajectoryGap(0, "a", Point(0, 0), Point(0, 0), 0.0, 8.0, 1.0)
    b = TrajectoryGap(1, "b", Point(8, 0), Point(8, 0), 0.0, 8.0, 1.0)
    pair = GapPair(a, b, (0.0, 8.0), EllipseIntersection(a.ellipse, b.ellipse))
    p = Params(ms=1, to_s=0.5, default_speed=1, anchor_snap_m=0.1)
    nodes, rep = detect_tgard(net, HistoricTraces.empty(), pair, K=8, params=p)
    assert nodes == [] and rep.counters.slices_processed == 9
    assert ids(detect_prism(net, pair, None, 0.5)) == [4]


def test_tau_infinite_two_runs():
    net, traces, pair, p = fig1()
    _, rep = detect_tgard(net, traces, pair, tau=math.inf, params=p)
    assert rep.counters.sp_runs <= 2


def symmetric_pair(K):
    net = grid_network(9, 9, pitch=100.0)
    a = TrajectoryGap(0, "a", Point(0, 400), Point(800, 400), 0.0, 1000.0, 1.2)
    b = TrajectoryGap(1, "b", Point(800, 400), Point(0, 400), 0.0, 1000.0, 1.2)
    pair = GapPair(a, b, (0.0, 1000.0), EllipseIntersection(a.ellipse, b.ellipse))
    return net, pair, Params(ms=1.2, to_s=50.0, default_speed=1.0, slices=K)


@pytest.mark.parametrize("K", [4, 10, 16])
def test_dc_counter_bound_symmetric(K):
    net, pair, p = symmetric_pair(K)
    tg, rt = detect_tgard(net, HistoricTraces.empty(), pair, params=p)
    dc, rd = detect_dc_tgard(net, HistoricTraces.empty(), pair, params=p)
    assert ids(tg) == ids(dc) and tg
    assert rt.counters.slices_processed == K + 1
    assert rd.counters.slices_processed <= math.ceil((K + 1) / 2)


def small_scenario(seed, **kw):
    cfg = ScenarioConfig(seed=seed, objects=8, nodes=100, extent_m=6000.0, congestion=0.4, horizon_s=4 * 3600.0, **kw)
    sc = generate(cfg)
    from rendezvous.gaps import extract_gaps

    p = sc.params()
    pairs = pair_gaps(extract_gaps(sc.trajectories, p.theta_s, p.ms))
    return sc, pairs, p


@pytest.mark.parametrize("seed", range(12))
def test_equivalence_and_inclusion(seed):
    sc, pairs, p = small_scenario(seed, network="random-planar" if seed % 2 else "grid")
    for pair in pairs:
        tg, rt = detect_tgard(sc.net, sc.traces, pair, params=p)
        dc, rd = detect_dc_tgard(sc.net, sc.traces, pair, params=p)
        assert ids(tg) == ids(dc)
        assert rd.counters.slices_processed <= rt.counters.slices_processed
        assert set(ids(tg)) <= set(prism_candidates(sc.net, pair))


def test_to_monotonicity():
    sc, pairs, p = small_scenario(3)
    prev = None
    for to in (300, 600, 900, 1200, 2400):
        got = run_detector("dc-tgard", sc.net, sc.traces, pairs, p.with_(to_s=to)).node_set()
        if prev is not None:
            assert got <= prev
        prev = got


def test_ms_monotonicity_of_prism_candidates():
    sc, pairs, p = small_scenario(5)
    for pair in pairs:
        prev = set(prism_candidates(sc.net, pair))
        for f in (1.2, 1.5, 2.0):
            gaps = [TrajectoryGap(g.gap_id, g.object_id, g.start_anchor, g.end_anchor, g.t_s, g.t_e, g.ms * f) for g in pair.gaps]
            bigger = GapPair(gaps[0], gaps[1], pair.overlap_range, EllipseIntersection(gaps[0].ellipse, gaps[1].ellipse))
            cur = set(prism_candidates(sc.net, bigger))
            assert prev <= cur
            prev = cur


def test_determinism():
    sc, pairs, p = small_scenario(1)
    a = run_detector("dc-tgard", sc.net, sc.traces, pairs, p)
    b = run_detector("dc-tgard", sc.net, sc.traces, pairs, p)
    assert dump_geojson(sc.net, a) == dump_geojson(sc.net, b)
    assert a.to_dict(with_time=False) == b.to_dict(with_time=False)


def test_geojson_shape():
    net, traces, pair, p = fig1()
    rep = run_detector("tgard", net, traces, [pair], p)
    doc = json.loads(dump_geojson(net, rep))
    f = doc["features"][0]
    assert f["geometry"] == {"type": "Point", "coordinates": [4.0, 1.0]}
    assert f["properties"]["node_id"] == 11 and f["properties"]["overlap_s"] == 1.0
    assert set(f["properties"]) == {"pair_id", "node_id", "alpha_i", "alpha_j", "overlap_s", "slices"}


def test_npe_examples():
    assert npe(5000, 1000) == 5.0
    assert npe(77, 77) == 1.0
    assert npe(10, 0) == math.inf
    with pytest.raises(ValueError):
        npe(5, 6)
    net, traces, pair, p = fig1()
    prism = npe(net.n_nodes, len(detect_prism(net, pair, None, p.to_s)))
    tg = npe(net.n_nodes, len(detect_tgard(net, traces, pair, params=p)[0]))
    assert tg == pytest.approx(3 * prism)


def test_score_examples():
    t = {("p", i) for i in range(6)}
    assert score(t, t) == (1.0, 1.0, 1.0)
    assert score(set(), t)[1] == 0.0
    pred = {("p", 0), ("p", 1), ("p", 2), ("p", 99)}
    prec, rec, _ = score(pred, t)
    assert (prec, rec) == (0.75, 0.5)
    assert score(set(), set()) == (1.0, 1.0, 1.0)
    assert score(pred, t, universe={("p", i) for i in range(100)})[2] == pytest.approx((3 + 93) / 100)
