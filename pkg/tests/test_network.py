import io
import math

import numpy as np
import pytest

from rendezvous.network import (
    ContractError,
    HistoricTraces,
    IngestionError,
    SpatialNetwork,
    edge_weight_at,
    load_network,
    load_traces,
    weight_drift,
    write_network,
)
from rendezvous.geometry import Point


def line_net(length=300.0):
    return SpatialNetwork([1, 2], [(0, 0), (length, 0)], [0], [1], [length])


def traces_on_edge(speeds, t=(10.0,)):
    rows = []
    for k, s in enumerate(speeds):
        rows.append((f"p{k}", t[k % len(t)], 150.0, 3.0, s))
    return HistoricTraces.from_records(rows)


def test_edge_weight_mean_speed():
    net = line_net()
    assert edge_weight_at(net, traces_on_edge([10.0]), (1, 2), (0, 20)) == pytest.approx(30.0)
    assert edge_weight_at(net, traces_on_edge([8.0, 12.0]), (1, 2), (0, 20)) == pytest.approx(30.0)


def test_edge_weight_fallback_and_window():
    net = line_net()
    assert edge_weight_at(net, HistoricTraces.empty(), (1, 2), (0, 20), default_speed=15) == pytest.approx(20.0)
    # record outside the window is ignored
    assert edge_weight_at(net, traces_on_edge([10.0]), (1, 2), (11, 20), default_speed=15) == pytest.approx(20.0)
    # record farther than the snap radius is ignored
    far = HistoricTraces.from_records([("p", 10.0, 150.0, 40.0, 5.0)])
    assert edge_weight_at(net, far, (1, 2), (0, 20), default_speed=15) == pytest.approx(20.0)


def test_edge_weight_requires_ordered_window():
    with pytest.raises(ContractError):
        edge_weight_at(line_net(), HistoricTraces.empty(), 0, (5, 5))


def test_doubling_speeds_halves_weight():
    rng = np.random.default_rng(0)
    net = line_net()
    speeds = rng.uniform(1, 20, 30)
    a = edge_weight_at(net, traces_on_edge(speeds), 0, (0, 20))
    b = edge_weight_at(net, traces_on_edge(2 * speeds), 0, (0, 20))
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_weight_drift_examples():
    assert weight_drift({"e1": 30, "e2": 60}, {"e1": 30, "e2": 90}) == pytest.approx(0.5)
    assert weight_drift({"e1": 30}, {"e1": 30}) == 0.0
    assert weight_drift({"e1": 10}, {"e1": 5}) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        weight_drift({"e1": 1}, {"e2": 1})
    with pytest.raises(ContractError):
        weight_drift(np.ones(2), np.ones(3))


def test_weight_drift_scale_covariant():
    rng = np.random.default_rng(1)
    w = rng.uniform(1, 100, 50)
    assert weight_drift(w, w * 1.37) == pytest.approx(0.37)


def test_load_network_round_trip(tmp_path):
    nodes = "node_id,x,y\n1,0.1,0.2\n2,100.30000000000001,-5.5\n3,7e-3,1e5\n"
    edges = "from_id,to_id,length_m\n1,2,100.7\n2,3,0.3\n"
    net = load_network(io.StringIO(nodes), io.StringIO(edges))
    write_network(net, tmp_path / "n.csv", tmp_path / "e.csv")
    again = load_network(tmp_path / "n.csv", tmp_path / "e.csv")
    assert np.array_equal(net.xy, again.xy)
    assert np.array_equal(net.edge_length, again.edge_length)
    assert net.xy[1, 0] == 100.30000000000001


def test_load_network_errors():
    with pytest.raises(IngestionError, match=r"edges.csv:3: unknown node 9"):
        src = io.StringIO("from_id,to_id,length_m\n1,2,5\n1,9,5\n")
        src.name = "edges.csv"
        load_network(io.StringIO("node_id,x,y\n1,0,0\n2,1,0\n"), src)
    with pytest.raises(IngestionError, match="non-positive"):
        load_network(io.StringIO("node_id,x,y\n1,0,0\n2,1,0\n"), io.StringIO("from_id,to_id,length_m\n1,2,0\n"))
    with pytest.raises(IngestionError, match="duplicate"):
        load_network(io.StringIO("node_id,x,y\n1,0,0\n1,1,0\n"), io.StringIO("from_id,to_id,length_m\n"))
    with pytest.raises(IngestionError, match="missing column"):
        load_network(io.StringIO("node_id,x\n1,0\n"), io.StringIO("from_id,to_id,length_m\n"))


def test_self_loop_dropped_and_empty_edges():
    net = load_network(io.StringIO("node_id,x,y\n1,0,0\n2,1,0\n"), io.StringIO("from_id,to_id,length_m\n1,1,4\n"))
    assert net.n_nodes == 2 and net.n_arcs == 0


def test_oneway_edges_make_single_arc():
    net = load_network(
        io.StringIO("node_id,x,y\n1,0,0\n2,1,0\n3,2,0\n"),
        io.StringIO("from_id,to_id,length_m,oneway\n1,2,1,1\n2,3,1,0\n"),
    )
    assert net.n_arcs == 3 and net.directed
    with pytest.raises(KeyError):
        net.arc_index(2, 1)


def test_geodetic_projection():
    nodes = "node_id,lon,lat\n1,116.30,39.90\n2,116.31,39.90\n"
    net = load_network(io.StringIO(nodes), io.StringIO("from_id,to_id,length_m\n1,2,855\n"), geodetic=True)
    d = Point(*net.xy[0]).dist(Point(*net.xy[1]))
    assert d == pytest.approx(0.01 * math.pi / 180 * 6371008.8 * math.cos(math.radians(39.9)), rel=1e-3)
    lon, lat = net.projection.inverse(net.xy[:, 0], net.xy[:, 1])
    assert np.allclose(lon, [116.30, 116.31]) and np.allclose(lat, 39.90)


def test_load_traces_order_check():
    with pytest.raises(IngestionError, match=":3:"):
        load_traces(io.StringIO("object_id,t_unix_s,x,y,speed_mps\na,5,0,0,1\na,4,0,0,1\n"))


def test_nearest_node_radius():
    net = line_net()
    assert net.nearest_node(Point(1, 1), 5) == 0
    assert net.nearest_node(Point(150, 0), 5) is None
