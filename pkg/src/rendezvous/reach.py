"""Earliest arrival, latest departure and availability intervals on slice samples.

Both times come from single-source Dijkstra runs over a sample's routing
support: forward from the gap's start node for arrivals, over reversed arcs
from the end node for departures.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from rendezvous.network import ContractError, weight_drift
from rendezvous.subnet import SubNetworkSample, Support


class AnchorSnapError(LookupError):
    """A gap anchor has no sample node within the snap radius."""


@dataclass
class Counters:
    slices_processed: int = 0
    lens_tests: int = 0
    sp_runs: int = 0
    reuse_hits: int = 0
    pairs: int = 0
    skipped_pairs: int = 0

    def add(self, other: "Counters") -> None:
        for k, v in vars(other).items():
            setattr(self, k, getattr(self, k) + v)


@dataclass(frozen=True)
class AvailabilityInterval:
    node: int
    ea: float
    ld: float

    @property
    def empty(self) -> bool:
        return not self.ea <= self.ld

    def overlap(self, other: "AvailabilityInterval") -> tuple[float, float] | None:
        lo, hi = max(self.ea, other.ea), min(self.ld, other.ld)
        return (lo, hi) if lo <= hi else None


def dijkstra(csr, weights: np.ndarray, source: int, n: int) -> tuple[list[float], list[int]]:
    """Shortest travel times from local node ``source``.

    Equal-cost predecessors are resolved toward the smaller node index so
    that profiles are deterministic.
    """
    ptr, nbr, arcpos = csr
    w = weights.tolist() if isinstance(weights, np.ndarray) else list(weights)
    dist = [math.inf] * n
    pred = [-1] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(ptr[u], ptr[u + 1]):
            v = nbr[k]
            if done[v]:
                continue
            nd = d + w[arcpos[k]]
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and u < pred[v]:
                pred[v] = u
    return dist, pred


def _local(sample: SubNetworkSample, node_id: int) -> int:
    net = sample.support.net
    try:
        return sample.support.local[net.index[node_id]]
    except KeyError:
        raise ContractError(f"node {node_id} not in sample") from None


def _to_map(sample: SubNetworkSample, values: list[float], fn) -> dict[int, float]:
    ids = sample.support.net.node_ids
    return {int(ids[n]): fn(v) for n, v in zip(sample.support.nodes, values) if math.isfinite(v)}


def earliest_arrival(sample: SubNetworkSample, source_node: int, t_s: float) -> dict[int, float]:
    """Node id -> earliest arrival time leaving ``source_node`` at ``t_s``; unreachable nodes omitted."""
    sup = sample.support
    dist, _ = dijkstra(sup.fwd, sample.weights, _local(sample, source_node), len(sup))
    return _to_map(sample, dist, lambda d: t_s + d)


def latest_departure(sample: SubNetworkSample, sink_node: int, t_e: float) -> dict[int, float]:
    """Node id -> latest departure that still reaches ``sink_node`` by ``t_e``."""
    sup = sample.support
    dist, _ = dijkstra(sup.rev, sample.weights, _local(sample, sink_node), len(sup))
    return _to_map(sample, dist, lambda d: t_e - d)


@dataclass(frozen=True, eq=False)
class ReachProfile:
    """Availability intervals of one gap over a sample's support.

    ``ea``/``ld`` are arrays over support-local nodes (``inf``/``-inf`` when
    unreachable). ``weights`` are the arc weights the profile was computed
    with; ``anchor_slice`` is the slice where that computation happened.
    """

    gap: object
    pair: object
    support: Support
    slice_index: int
    anchor_slice: int
    source: int
    sink: int
    ea: np.ndarray
    ld: np.ndarray
    weights: np.ndarray
    pred_forward: tuple = field(repr=False, default=())

    def alpha(self, node_id: int) -> AvailabilityInterval:
        i = self.support.local.get(self.support.net.index.get(node_id, -1))
        if i is None:
            return AvailabilityInterval(node_id, math.inf, -math.inf)
        return AvailabilityInterval(node_id, float(self.ea[i]), float(self.ld[i]))

    def alpha_dense(self, dense: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(ea, ld) arrays for dense network node indices inside the support."""
        loc = np.fromiter((self.support.local[int(d)] for d in dense), dtype=np.int64, count=len(dense))
        return self.ea[loc], self.ld[loc]

    def reachable(self, node_id: int) -> bool:
        return not self.alpha(node_id).empty

    @property
    def intervals(self) -> dict[int, AvailabilityInterval]:
        ids = self.support.net.node_ids
        out = {}
        for i, n in enumerate(self.support.nodes):
            if self.ea[i] <= self.ld[i]:
                nid = int(ids[n])
                out[nid] = AvailabilityInterval(nid, float(self.ea[i]), float(self.ld[i]))
        return out

    def path_to(self, node_id: int) -> list[int]:
        """Node ids on the earliest-arrival path from the start node."""
        ids = self.support.net.node_ids
        i = self.support.local[self.support.net.index[node_id]]
        if not math.isfinite(self.ea[i]):
            return []
        path = [i]
        while path[-1] != self.source:
            path.append(self.pred_forward[path[-1]])
        return [int(ids[self.support.nodes[j]]) for j in reversed(path)]

    def relabeled(self, slice_index: int) -> "ReachProfile":
        return replace(self, slice_index=slice_index)

    def same_intervals(self, other: "ReachProfile") -> bool:
        return (
            self.support is other.support
            and np.array_equal(self.ea, other.ea)
            and np.array_equal(self.ld, other.ld)
        )


def snap_anchor(sample: SubNetworkSample, anchor, radius: float) -> int:
    """Support-local index of the node nearest ``anchor`` within ``radius``."""
    net = sample.support.net
    n = net.nearest_node(anchor, radius)
    if n is None or n not in sample.support.local:
        raise AnchorSnapError(f"no node within {radius} m of anchor ({anchor.x:.1f}, {anchor.y:.1f})")
    return sample.support.local[n]


def availability(
    sample: SubNetworkSample,
    gap,
    snap_radius: float = 50.0,
    counters: Counters | None = None,
) -> ReachProfile:
    """Availability intervals of ``gap`` on ``sample``: ``[ea(u), ld(u)]`` per node."""
    sup = sample.support
    src = snap_anchor(sample, gap.start_anchor, snap_radius)
    dst = snap_anchor(sample, gap.end_anchor, snap_radius)
    n = len(sup)
    fwd, pred = dijkstra(sup.fwd, sample.weights, src, n)
    back, _ = dijkstra(sup.rev, sample.weights, dst, n)
    ea = gap.t_s + np.asarray(fwd, dtype=float)
    ld = gap.t_e - np.asarray(back, dtype=float)
    if counters is not None:
        counters.sp_runs += 1
    return ReachProfile(
        gap=gap,
        pair=sample.pair,
        support=sup,
        slice_index=sample.slice_index,
        anchor_slice=sample.slice_index,
        source=src,
        sink=dst,
        ea=ea,
        ld=ld,
        weights=sample.weights,
        pred_forward=tuple(pred),
    )


def needs_refresh(anchor_weights: np.ndarray, next_weights: np.ndarray, tau: float) -> bool:
    return weight_drift(anchor_weights, next_weights) >= tau


def refresh_profile(
    prev: ReachProfile,
    sample_next: SubNetworkSample,
    tau: float,
    snap_radius: float = 50.0,
    counters: Counters | None = None,
) -> ReachProfile:
    """Reuse ``prev`` on the next slice unless its weights drifted by ``tau`` or more.

    Drift is measured against the weights ``prev`` was computed with, so slow
    creep across many slices still triggers a recompute.
    """
    if prev.pair is not sample_next.pair or prev.support is not sample_next.support:
        raise ContractError("profile and sample belong to different pairs")
    if needs_refresh(prev.weights, sample_next.weights, tau):
        return availability(sample_next, prev.gap, snap_radius, counters)
    if counters is not None:
        counters.reuse_hits += 1
    return prev.relabeled(sample_next.slice_index)


def anchor_slices(samples: list[SubNetworkSample], tau: float) -> list[int]:
    """Slice whose weights each slice's profile is computed from under forward refresh.

    Mirrors the chain of :func:`refresh_profile` calls from slice 0 upward
    without running any shortest-path search.
    """
    anchors = []
    for k, s in enumerate(samples):
        if k == 0 or needs_refresh(samples[anchors[-1]].weights, s.weights, tau):
            anchors.append(k)
        else:
            anchors.append(anchors[-1])
    return anchors
