"""Shared fixtures and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from rendezvous.config import Params
from rendezvous.gaps import Trajectory, extract_gaps, pair_gaps
from rendezvous.network import HistoricTraces, SpatialNetwork


def grid_network(cols: int, rows: int, pitch: float = 1.0) -> SpatialNetwork:
    """4-connected grid; node id = row * cols + col."""
    ids = list(range(cols * rows))
    xy = [((i % cols) * pitch, (i // cols) * pitch) for i in ids]
    ef, et = [], []
    for i in ids:
        c, r = i % cols, i // cols
        if c + 1 < cols:
            ef.append(i)
            et.append(i + 1)
        if r + 1 < rows:
            ef.append(i)
            et.append(i + cols)
    return SpatialNetwork(ids, xy, ef, et, [pitch] * len(ef))


def uniform_traces(net: SpatialNetwork, speed: float, t0: float, t1: float, step: float) -> HistoricTraces:
    """One record per edge midpoint every ``step`` seconds, all at ``speed``."""
    mid = 0.5 * (net.xy[net.edge_from] + net.xy[net.edge_to])
    rows = []
    for t in np.arange(t0, t1 + step / 2, step):
        for e, (x, y) in enumerate(mid):
            rows.append((f"p{e}", float(t), float(x), float(y), speed))
    return HistoricTraces.from_records(rows)


def fig1():
    """7x4 unit grid; two gaps over [2, 6] at 1 unit/s whose ellipses share a 3x2 node block.

    Object A goes from N4 to N11, object B from N25 to N18. The ellipse
    intersection holds N10-N12 and N17-N19; only N11 and N18 are reachable by
    both objects with a common wait of at least one second.
    """
    net = grid_network(7, 4)
    xy = net.xy
    trajs = [
        Trajectory("A", [2.0, 6.0], [xy[4], xy[11]]),
        Trajectory("B", [2.0, 6.0], [xy[25], xy[18]]),
    ]
    params = Params(theta_s=1.0, ms=1.0, to_s=1.0, default_speed=1.0, anchor_snap_m=0.5, trace_snap_m=0.25)
    traces = uniform_traces(net, 1.0, 0.0, 8.0, 0.25)
    (pair,) = pair_gaps(extract_gaps(trajs, params.theta_s, params.ms))
    return net, traces, pair, params


def simple_paths(adj: dict[int, dict[int, float]], s: int):
    """Yield (node, cost) for every simple path from ``s``."""
    stack = [(s, 0.0, frozenset([s]))]
    while stack:
        u, c, seen = stack.pop()
        yield u, c
        for v, w in adj.get(u, {}).items():
            if v not in seen:
                stack.append((v, c + w, seen | {v}))


def enum_shortest(adj: dict[int, dict[int, float]], s: int) -> dict[int, float]:
    best: dict[int, float] = {}
    for u, c in simple_paths(adj, s):
        if c < best.get(u, math.inf):
            best[u] = c
    return best


def reverse_adj(adj):
    rev: dict[int, dict[int, float]] = {}
    for u, nb in adj.items():
        for v, w in nb.items():
            rev.setdefault(v, {})[u] = min(w, rev.get(v, {}).get(u, math.inf))
    return rev


def random_connected_graph(rng: np.random.Generator, n: int, directed: bool, extra: float = 0.35):
    """Random spanning tree plus extra edges; integer-ish weights to stress ties."""
    edges = {}
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges[(min(a, b), max(a, b))] = None
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < extra:
            edges[(a, b)] = None
    ef, et, w, oneway = [], [], [], []
    for a, b in sorted(edges):
        if directed and rng.random() < 0.5:
            a, b = b, a
        ef.append(a)
        et.append(b)
        w.append(float(rng.integers(1, 6)))
        oneway.append(directed and rng.random() < 0.6)
    xy = rng.uniform(0, 10, size=(n, 2))
    net = SpatialNetwork(list(range(n)), xy, ef, et, w, oneway=oneway)
    adj: dict[int, dict[int, float]] = {}
    for a, b, ww, ow in zip(ef, et, w, oneway):
        adj.setdefault(a, {})[b] = min(ww, adj.get(a, {}).get(b, math.inf))
        if not ow:
            adj.setdefault(b, {})[a] = min(ww, adj.get(b, {}).get(a, math.inf))
    return net, adj
