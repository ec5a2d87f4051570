"""Rendezvous detectors: space-time prism baseline, TGARD and DC-TGARD.

TGARD walks the pair's time slices in order. DC-TGARD walks them from both
ends toward the middle and reports exactly the same nodes: it replays
TGARD's profile-reuse chain to know which weights each slice's profile comes
from, computes each profile only when a slice actually needs it, and stops
as soon as no unvisited slice can admit a node that is not already decided.
"""

from __future__ import annotations

import json
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from rendezvous.config import Params
from rendezvous.gaps import GapPair
from rendezvous.geometry import EPS_GEO, Circle, Point, discs_intersection_area, lens_at
from rendezvous.network import HistoricTraces, SpatialNetwork, TraceIndex
from rendezvous.reach import (
    AnchorSnapError,
    AvailabilityInterval,
    Counters,
    ReachProfile,
    anchor_slices,
    availability,
    refresh_profile,
    snap_anchor,
)
from rendezvous.subnet import SubNetworkSample, build_samples, window_sample

DETECTORS = ("prism", "tgard", "dc-tgard")


@dataclass(frozen=True)
class RendezvousNode:
    node: int
    pair_id: str
    alpha_i: AvailabilityInterval
    alpha_j: AvailabilityInterval
    overlap: tuple[float, float]
    qualifying_slices: frozenset = frozenset()

    @property
    def overlap_s(self) -> float:
        return self.overlap[1] - self.overlap[0]


@dataclass
class DetectorReport:
    detector: str
    nodes: dict[str, list[RendezvousNode]] = field(default_factory=dict)
    counters: Counters = field(default_factory=Counters)
    wall_time: float = 0.0
    per_pair: dict[str, dict] = field(default_factory=dict)

    def node_set(self) -> set[tuple[str, int]]:
        return {(pid, r.node) for pid, rs in self.nodes.items() for r in rs}

    def bounded_nodes(self) -> set[int]:
        return {r.node for rs in self.nodes.values() for r in rs}

    def merge(self, other: "DetectorReport") -> None:
        self.nodes.update(other.nodes)
        self.counters.add(other.counters)
        self.wall_time += other.wall_time
        self.per_pair.update(other.per_pair)

    def to_dict(self, with_time: bool = True) -> dict:
        d = {
            "detector": self.detector,
            "pairs_with_rendezvous": sum(1 for v in self.nodes.values() if v),
            "rendezvous_nodes": sum(len(v) for v in self.nodes.values()),
            "distinct_nodes": len(self.bounded_nodes()),
            "counters": vars(self.counters).copy(),
            "per_pair": {k: self.per_pair[k] for k in sorted(self.per_pair)},
        }
        if with_time:
            d["wall_time_s"] = self.wall_time
        return d


def _resolve(params: Params, K=None, tau=None, TO=None) -> Params:
    changes = {}
    if K is not None:
        changes["slices"] = int(K)
    if tau is not None:
        changes["tau"] = float(tau)
    if TO is not None:
        changes["to_s"] = float(TO)
    return params.with_(**changes) if changes else params


def _node_distances(xy: np.ndarray, gap) -> tuple[np.ndarray, np.ndarray]:
    ds = np.hypot(xy[:, 0] - gap.start_anchor.x, xy[:, 1] - gap.start_anchor.y)
    de = np.hypot(xy[:, 0] - gap.end_anchor.x, xy[:, 1] - gap.end_anchor.y)
    return ds, de


def _in_lens(ds: np.ndarray, de: np.ndarray, gap, t: float, eps: float) -> np.ndarray:
    # Same comparison Lens.contains_many makes, on cached anchor distances.
    return (ds <= (t - gap.t_s) * gap.ms + eps) & (de <= (gap.t_e - t) * gap.ms + eps)


def _qualify(pi: ReachProfile, pj: ReachProfile, dense: np.ndarray, TO: float):
    ea_i, ld_i = pi.alpha_dense(dense)
    ea_j, ld_j = pj.alpha_dense(dense)
    lo = np.maximum(ea_i, ea_j)
    hi = np.minimum(ld_i, ld_j)
    ok = (ea_i <= ld_i) & (ea_j <= ld_j) & (hi - lo >= TO)
    return ok, ea_i, ld_i, ea_j, ld_j, lo, hi


def _admit(net, pair, result, dense, k, q) -> None:
    ok, ea_i, ld_i, ea_j, ld_j, lo, hi = q
    ids = net.node_ids
    for m in np.nonzero(ok)[0]:
        nid = int(ids[dense[m]])
        result[nid] = RendezvousNode(
            node=nid,
            pair_id=pair.pair_id,
            alpha_i=AvailabilityInterval(nid, float(ea_i[m]), float(ld_i[m])),
            alpha_j=AvailabilityInterval(nid, float(ea_j[m]), float(ld_j[m])),
            overlap=(float(lo[m]), float(hi[m])),
            qualifying_slices=frozenset({k}),
        )


def _sorted(result: dict) -> list[RendezvousNode]:
    return [result[n] for n in sorted(result)]


def _samples(net, traces, pair, params) -> list[SubNetworkSample]:
    return build_samples(net, traces, pair, params.slices, params)


def _anchors_ok(sample: SubNetworkSample, pair: GapPair, params: Params) -> bool:
    try:
        for g in pair.gaps:
            snap_anchor(sample, g.start_anchor, params.anchor_snap_m)
            snap_anchor(sample, g.end_anchor, params.anchor_snap_m)
    except AnchorSnapError:
        return False
    return True


def prism_candidates(net: SpatialNetwork, pair: GapPair) -> list[int]:
    """Node ids inside both gap ellipses."""
    return [int(net.node_ids[i]) for i in net.nodes_in(pair.region)]


def prism_profiles(
    net: SpatialNetwork, traces, pair: GapPair, params: Params = Params()
) -> tuple[ReachProfile, ReachProfile] | None:
    """Both gaps' profiles on weights averaged over the whole overlap range."""
    s = window_sample(net, traces, pair, params)
    if s is None:
        return None
    return tuple(availability(s, g, params.anchor_snap_m) for g in pair.gaps)


def detect_prism(
    net: SpatialNetwork,
    pair: GapPair,
    profiles: tuple[ReachProfile, ReachProfile] | None,
    TO: float,
) -> list[RendezvousNode]:
    """Ellipse-intersection nodes reachable by both objects during their gaps.

    A prism carries no timing inside the gap, so each object's interval at a
    node is its whole gap range and the overlap is the gaps' common range.
    ``profiles`` optionally adds a network reachability filter; the default
    pipeline runs without it so the baseline stays purely geometric.
    """
    gi, gj = pair.gaps
    lo, hi = max(gi.t_s, gj.t_s), min(gi.t_e, gj.t_e)
    if hi - lo < TO:
        return []
    out = []
    for nid in prism_candidates(net, pair):
        if profiles is not None and not (profiles[0].reachable(nid) and profiles[1].reachable(nid)):
            continue
        out.append(
            RendezvousNode(
                node=nid,
                pair_id=pair.pair_id,
                alpha_i=AvailabilityInterval(nid, gi.t_s, gi.t_e),
                alpha_j=AvailabilityInterval(nid, gj.t_s, gj.t_e),
                overlap=(lo, hi),
            )
        )
    return out


def detect_tgard(
    net: SpatialNetwork,
    traces: HistoricTraces | TraceIndex,
    pair: GapPair,
    K: int | None = None,
    tau: float | None = None,
    TO: float | None = None,
    params: Params = Params(),
    samples: list[SubNetworkSample] | None = None,
) -> tuple[list[RendezvousNode], DetectorReport]:
    params = _resolve(params, K, tau, TO)
    report = DetectorReport("tgard")
    c = report.counters
    c.pairs = 1
    t0 = time.perf_counter()
    if samples is None:
        samples = _samples(net, traces, pair, params)
    result: dict[int, RendezvousNode] = {}
    if samples and not _anchors_ok(samples[0], pair, params):
        c.skipped_pairs = 1
        samples = []
    if samples:
        gi, gj = pair.gaps
        region = samples[0].region_nodes
        xy = net.xy[region]
        taken = np.zeros(len(region), dtype=bool)
        pi = pj = None
        for s in samples:
            c.slices_processed += 1
            if pi is None:
                pi = availability(s, gi, params.anchor_snap_m, c)
                pj = availability(s, gj, params.anchor_snap_m, c)
            else:
                pi = refresh_profile(pi, s, params.tau, params.anchor_snap_m, c)
                pj = refresh_profile(pj, s, params.tau, params.anchor_snap_m, c)
            li, lj = lens_at(gi, s.slice_time), lens_at(gj, s.slice_time)
            c.lens_tests += 1
            if li is None or lj is None:
                continue
            mask = li.contains_many(xy, params.eps_geo) & lj.contains_many(xy, params.eps_geo) & ~taken
            if not mask.any():
                continue
            pos = np.nonzero(mask)[0]
            q = _qualify(pi, pj, region[pos], params.to_s)
            _admit(net, pair, result, region[pos], s.slice_index, q)
            taken[pos[q[0]]] = True
    report.wall_time = time.perf_counter() - t0
    nodes = _sorted(result)
    report.nodes[pair.pair_id] = nodes
    report.per_pair[pair.pair_id] = {"slices": c.slices_processed, "sp_runs": c.sp_runs}
    return nodes, report


def _membership_windows(ds_i, de_i, ds_j, de_j, gi, gj, eps):
    """Per-node time interval during which it lies in both lenses, padded outward.

    Padding only widens the windows, which keeps the early-stop test
    conservative under round-off.
    """
    lo = np.maximum(gi.t_s + (ds_i - eps) / gi.ms, gj.t_s + (ds_j - eps) / gj.ms)
    hi = np.minimum(gi.t_e - (de_i - eps) / gi.ms, gj.t_e - (de_j - eps) / gj.ms)
    pad = 1e-7 + 1e-12 * np.maximum(np.abs(lo), np.abs(hi))
    return lo - pad, hi + pad


def _slice_area(gi, gj, t: float) -> float:
    circles = []
    for g in (gi, gj):
        circles.append(Circle(g.start_anchor, (t - g.t_s) * g.ms))
        circles.append(Circle(g.end_anchor, (g.t_e - t) * g.ms))
    return discs_intersection_area(circles)


def detect_dc_tgard(
    net: SpatialNetwork,
    traces: HistoricTraces | TraceIndex,
    pair: GapPair,
    K: int | None = None,
    tau: float | None = None,
    TO: float | None = None,
    params: Params = Params(),
    samples: list[SubNetworkSample] | None = None,
) -> tuple[list[RendezvousNode], DetectorReport]:
    params = _resolve(params, K, tau, TO)
    report = DetectorReport("dc-tgard")
    c = report.counters
    c.pairs = 1
    t0 = time.perf_counter()
    if samples is None:
        samples = _samples(net, traces, pair, params)
    result: dict[int, RendezvousNode] = {}
    info = {"slices": 0, "sp_runs": 0, "max_overlap": 0.0, "peak_slice": None, "early_stop": False}
    if samples and not _anchors_ok(samples[0], pair, params):
        c.skipped_pairs = 1
        samples = []
    if samples:
        gi, gj = pair.gaps
        eps = params.eps_geo
        K_ = len(samples) - 1
        region = samples[0].region_nodes
        xy = net.xy[region]
        ds_i, de_i = _node_distances(xy, gi)
        ds_j, de_j = _node_distances(xy, gj)
        w_lo, w_hi = _membership_windows(ds_i, de_i, ds_j, de_j, gi, gj, eps)
        times = np.array([s.slice_time for s in samples])
        anchors = anchor_slices(samples, params.tau)
        profiles: dict[int, tuple[ReachProfile, ReachProfile]] = {}
        rejected: dict[int, np.ndarray] = defaultdict(lambda: np.zeros(len(region), dtype=bool))
        taken = np.zeros(len(region), dtype=bool)
        area = {}

        def visit(k: int) -> None:
            t = float(times[k])
            c.lens_tests += 1
            area[k] = _slice_area(gi, gj, t)
            a = anchors[k]
            mask = _in_lens(ds_i, de_i, gi, t, eps) & _in_lens(ds_j, de_j, gj, t, eps)
            mask &= ~taken & ~rejected[a]
            if not mask.any():
                return
            if a not in profiles:
                s = samples[a]
                profiles[a] = (
                    availability(s, gi, params.anchor_snap_m, c),
                    availability(s, gj, params.anchor_snap_m, c),
                )
            pos = np.nonzero(mask)[0]
            q = _qualify(*profiles[a], region[pos], params.to_s)
            _admit(net, pair, result, region[pos], k, q)
            taken[pos[q[0]]] = True
            rejected[a][pos[~q[0]]] = True

        def pending(lo: int, hi: int) -> bool:
            # Could any slice strictly between the frontiers admit a node?
            undecided = ~taken
            if not undecided.any():
                return False
            by_anchor: dict[int, list[float]] = defaultdict(list)
            for k in range(lo + 1, hi):
                by_anchor[anchors[k]].append(times[k])
            for a, ts in by_anchor.items():
                live = undecided & ~rejected[a] if a in rejected else undecided
                if not live.any():
                    continue
                ts = np.asarray(ts)
                idx = np.searchsorted(ts, w_lo[live], side="left")
                hit = idx < len(ts)
                hit[hit] &= ts[idx[hit]] <= w_hi[live][hit]
                if hit.any():
                    return True
            return False

        lo, hi = 0, K_
        max_overlap = -math.inf
        while lo <= hi:
            c.slices_processed += 1
            visit(lo)
            if hi != lo:
                visit(hi)
            for k in {lo, hi}:
                if area[k] > max_overlap:
                    max_overlap = area[k]
                    info["peak_slice"] = k
            if lo >= hi - 1:
                break
            if not pending(lo, hi):
                info["early_stop"] = True
                break
            lo += 1
            hi -= 1
        info["max_overlap"] = max(max_overlap, 0.0)
        info["reuse_hits"] = len(samples) - len(set(anchors))
        c.reuse_hits += info["reuse_hits"]
    info["slices"] = c.slices_processed
    info["sp_runs"] = c.sp_runs
    report.wall_time = time.perf_counter() - t0
    nodes = _sorted(result)
    report.nodes[pair.pair_id] = nodes
    report.per_pair[pair.pair_id] = info
    return nodes, report


def run_detector(
    detector: str,
    net: SpatialNetwork,
    traces: HistoricTraces | TraceIndex,
    pairs: list[GapPair],
    params: Params = Params(),
) -> DetectorReport:
    """Run one detector over every pair; results keyed by pair id."""
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}; choose from {', '.join(DETECTORS)}")
    if isinstance(traces, HistoricTraces):
        traces = traces.index_for(net, params.trace_snap_m)
    total = DetectorReport(detector)
    for pair in pairs:
        if detector == "prism":
            rep = DetectorReport("prism")
            rep.counters.pairs = 1
            t0 = time.perf_counter()
            nodes = detect_prism(net, pair, None, params.to_s)
            rep.wall_time = time.perf_counter() - t0
            rep.nodes[pair.pair_id] = nodes
            rep.per_pair[pair.pair_id] = {"candidates": len(prism_candidates(net, pair))}
        elif detector == "tgard":
            _, rep = detect_tgard(net, traces, pair, params=params)
        else:
            _, rep = detect_dc_tgard(net, traces, pair, params=params)
        total.merge(rep)
    return total


def npe(total_study_nodes: int, bounded_nodes: int) -> float:
    """Study-area node count over bounded-region node count; ``inf`` when nothing is bounded."""
    if bounded_nodes <= 0:
        return math.inf
    if bounded_nodes > total_study_nodes:
        raise ValueError("bounded node count exceeds study-area node count")
    return total_study_nodes / bounded_nodes


def score(predicted: set, truth: set, universe: set | None = None) -> tuple[float, float, float]:
    """(precision, recall, accuracy) over ``(pair, node)`` decisions.

    Accuracy counts true negatives from ``universe``; without one, the
    universe is ``predicted | truth``.
    """
    predicted, truth = set(predicted), set(truth)
    if universe is None:
        universe = predicted | truth
    else:
        universe = set(universe) | predicted | truth
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    tn = len(universe) - tp - fp - fn
    if not predicted and not truth:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if predicted else 0.0
    recall = tp / (tp + fn) if truth else 1.0
    accuracy = (tp + tn) / len(universe) if universe else 1.0
    return precision, recall, accuracy


def to_geojson(net: SpatialNetwork, report: DetectorReport) -> dict:
    features = []
    for pid in sorted(report.nodes):
        for r in sorted(report.nodes[pid], key=lambda r: r.node):
            i = net.index[r.node]
            x, y = float(net.xy[i, 0]), float(net.xy[i, 1])
            if net.projection is not None:
                lon, lat = net.projection.inverse(x, y)
                x, y = float(lon), float(lat)
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [x, y]},
                    "properties": {
                        "pair_id": pid,
                        "node_id": r.node,
                        "alpha_i": [r.alpha_i.ea, r.alpha_i.ld],
                        "alpha_j": [r.alpha_j.ea, r.alpha_j.ld],
                        "overlap_s": r.overlap_s,
                        "slices": sorted(r.qualifying_slices),
                    },
                }
            )
    return {"type": "FeatureCollection", "features": features}


def dump_geojson(net: SpatialNetwork, report: DetectorReport) -> str:
    return json.dumps(to_geojson(net, report), sort_keys=True, indent=1) + "\n"
