"""Per-pair, per-time-slice sub-networks with slice-local edge weights."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from rendezvous.config import ConfigError, Params
from rendezvous.gaps import GapPair
from rendezvous.network import HistoricTraces, SpatialNetwork, TraceIndex, arc_weights


class Support:
    """Routing graph for a pair: local CSR adjacency over a node subset.

    ``nodes`` holds dense network indices (ascending); arcs are network arcs
    with both endpoints inside. Topology is fixed per pair, so every slice
    sample shares one ``Support`` and differs only in its weight array.
    """

    def __init__(self, net: SpatialNetwork, nodes: np.ndarray):
        self.net = net
        self.nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        self.local = {int(n): i for i, n in enumerate(self.nodes)}
        inside = np.zeros(net.n_nodes, dtype=bool)
        inside[self.nodes] = True
        self.arcs = np.nonzero(inside[net.arc_src] & inside[net.arc_dst])[0]
        pos = np.full(net.n_nodes, -1, dtype=np.int64)
        pos[self.nodes] = np.arange(len(self.nodes))
        self.src = pos[net.arc_src[self.arcs]]
        self.dst = pos[net.arc_dst[self.arcs]]
        n = len(self.nodes)
        self.fwd = _csr(self.src, self.dst, n)
        self.rev = _csr(self.dst, self.src, n)

    def __len__(self) -> int:
        return len(self.nodes)


def _csr(src: np.ndarray, dst: np.ndarray, n: int):
    """(ptr, neighbor, arc position) lists, neighbors ascending within a row."""
    order = np.lexsort((dst, src))
    ptr = np.searchsorted(src[order], np.arange(n + 1)).tolist()
    return ptr, dst[order].tolist(), order.tolist()


@dataclass(frozen=True, eq=False)
class SubNetworkSample:
    pair: GapPair | None
    slice_index: int
    slice_time: float
    window: tuple[float, float]
    region_nodes: np.ndarray
    support: Support
    weights: np.ndarray

    @cached_property
    def node_ids(self) -> tuple[int, ...]:
        ids = self.support.net.node_ids
        return tuple(int(ids[i]) for i in self.region_nodes)

    @cached_property
    def region_arc_mask(self) -> np.ndarray:
        net = self.support.net
        inside = np.zeros(net.n_nodes, dtype=bool)
        inside[self.region_nodes] = True
        a = self.support.arcs
        return inside[net.arc_src[a]] & inside[net.arc_dst[a]]

    @property
    def edge_weights(self) -> dict[int, float]:
        """Arc index -> travel seconds, restricted to arcs inside the pair region."""
        m = self.region_arc_mask
        return dict(zip(self.support.arcs[m].tolist(), self.weights[m].tolist()))

    @property
    def weight_map(self) -> dict[int, float]:
        """Arc index -> travel seconds over the whole routing support."""
        return dict(zip(self.support.arcs.tolist(), self.weights.tolist()))


def slice_times(t_s: float, t_e: float, k: int) -> np.ndarray:
    return t_s + np.arange(k + 1) * (t_e - t_s) / k


def pair_support(net: SpatialNetwork, pair: GapPair, params: Params) -> tuple[np.ndarray, Support]:
    """Region nodes (inside both ellipses) and the routing support around them.

    The support is every node inside either ellipse plus nodes near the
    anchors, so that start/end anchors are reachable even when they fall
    outside the other gap's ellipse.
    """
    region = net.nodes_in(pair.region)
    if len(region) == 0:
        return region, Support(net, region)
    parts = [region]
    for g in pair.gaps:
        parts.append(net.nodes_in(g.ellipse))
        for anchor in (g.start_anchor, g.end_anchor):
            n = net.nearest_node(anchor, params.anchor_snap_m)
            if n is not None:
                parts.append(np.array([n]))
    return region, Support(net, np.concatenate(parts))


def build_samples(
    net: SpatialNetwork,
    traces: HistoricTraces | TraceIndex,
    pair: GapPair,
    K: int,
    params: Params = Params(),
) -> list[SubNetworkSample]:
    """``K + 1`` uniform slices over the pair's overlap range.

    Slice ``k`` uses the forward window ``[t_k, t_{k+1}]``; the last slice
    reuses the final window.
    """
    if K < 2:
        raise ConfigError(f"slice count K must be >= 2, got {K}")
    region, support = pair_support(net, pair, params)
    if len(region) == 0:
        return []
    index = traces if isinstance(traces, TraceIndex) else traces.index_for(net, params.trace_snap_m)
    times = slice_times(*pair.overlap_range, K)
    out = []
    for k in range(K + 1):
        window = (float(times[k]), float(times[k + 1])) if k < K else (float(times[K - 1]), float(times[K]))
        w = arc_weights(net, index, support.arcs, window, params.default_speed)
        out.append(SubNetworkSample(pair, k, float(times[k]), window, region, support, w))
    return out


def window_sample(
    net: SpatialNetwork,
    traces: HistoricTraces | TraceIndex,
    pair: GapPair,
    params: Params = Params(),
) -> SubNetworkSample | None:
    """One sample whose weights average the pair's whole overlap range."""
    region, support = pair_support(net, pair, params)
    if len(region) == 0:
        return None
    index = traces if isinstance(traces, TraceIndex) else traces.index_for(net, params.trace_snap_m)
    lo, hi = pair.overlap_range
    w = arc_weights(net, index, support.arcs, (lo, hi), params.default_speed)
    return SubNetworkSample(pair, 0, lo, (lo, hi), region, support, w)


def static_sample(
    net: SpatialNetwork,
    weights=None,
    slice_index: int = 0,
    slice_time: float = 0.0,
    base: SubNetworkSample | None = None,
) -> SubNetworkSample:
    """Whole-network sample with fixed weights.

    ``weights`` maps ``(from_id, to_id)`` to seconds (an undirected edge sets
    both arcs unless the reverse is given separately), or is an array over
    arcs; ``None`` uses arc lengths. Passing ``base`` reuses its support and
    pair, so the result is the next slice of the same sequence.
    """
    support = base.support if base is not None else Support(net, np.arange(net.n_nodes))
    if weights is None:
        w = net.arc_length[support.arcs].astype(float)
    elif isinstance(weights, dict):
        w = net.arc_length[support.arcs].astype(float)
        given = {}
        for (a, b), v in weights.items():
            given[(net.index[a], net.index[b])] = float(v)
        for i, arc in enumerate(support.arcs):
            s, d = int(net.arc_src[arc]), int(net.arc_dst[arc])
            if (s, d) in given:
                w[i] = given[(s, d)]
            elif (d, s) in given:
                w[i] = given[(d, s)]
    else:
        w = np.asarray(weights, dtype=float)[support.arcs]
    nodes = np.arange(net.n_nodes)
    pair = base.pair if base is not None else None
    return SubNetworkSample(pair, slice_index, slice_time, (slice_time, slice_time), nodes, support, w)
