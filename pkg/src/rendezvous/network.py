"""Spatial network model, CSV ingestion and time-dependent edge weights.

Undirected edges are stored as two directed arcs that share one underlying
edge index; historic traces are associated with the underlying segment, so
both directions of a road see the same traffic.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from rendezvous.geometry import Point

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8


class IngestionError(ValueError):
    """Malformed or inconsistent input file; the message names file and line."""


class ContractError(ValueError):
    """A caller violated an operation precondition."""


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular projection around a reference lon/lat, in meters."""

    lon0: float
    lat0: float

    def forward(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        k = math.cos(math.radians(self.lat0))
        x = EARTH_RADIUS_M * np.radians(lon - self.lon0) * k
        y = EARTH_RADIUS_M * np.radians(lat - self.lat0)
        return x, y

    def inverse(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = math.cos(math.radians(self.lat0))
        lon = self.lon0 + np.degrees(x / (EARTH_RADIUS_M * k))
        lat = self.lat0 + np.degrees(y / EARTH_RADIUS_M)
        return lon, lat

    def to_dict(self) -> dict:
        return {"lon0": self.lon0, "lat0": self.lat0}


@dataclass(frozen=True)
class NetworkNode:
    id: int
    location: Point


@dataclass(frozen=True)
class NetworkEdge:
    from_id: int
    to_id: int
    length: float
    weight_series: tuple[tuple[float, float], ...] = ()


class SpatialNetwork:
    """Immutable node/arc graph with dense node indices ``0..N-1``.

    ``node_ids[i]`` is the original id of dense node ``i``. Arcs are parallel
    arrays (``arc_src``, ``arc_dst``, ``arc_length``, ``arc_edge``); ``arc_edge``
    points at the underlying segment in ``edge_from``/``edge_to``.
    """

    def __init__(
        self,
        node_ids: Sequence[int],
        xy: np.ndarray,
        edge_from: Sequence[int],
        edge_to: Sequence[int],
        edge_length: Sequence[float],
        oneway: Sequence[bool] | None = None,
        projection: LocalProjection | None = None,
        raw_xy: np.ndarray | None = None,
    ):
        self.node_ids = np.asarray(node_ids, dtype=np.int64)
        self.xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        self.raw_xy = self.xy if raw_xy is None else np.asarray(raw_xy, dtype=float)
        self.projection = projection
        self.index = {int(n): i for i, n in enumerate(self.node_ids)}
        self.edge_from = np.asarray(edge_from, dtype=np.int64)
        self.edge_to = np.asarray(edge_to, dtype=np.int64)
        self.edge_length = np.asarray(edge_length, dtype=float)
        ne = len(self.edge_from)
        self.edge_oneway = np.zeros(ne, dtype=bool) if oneway is None else np.asarray(oneway, dtype=bool)
        fwd = np.arange(ne)
        back = fwd[~self.edge_oneway]
        self.arc_src = np.concatenate([self.edge_from, self.edge_to[back]])
        self.arc_dst = np.concatenate([self.edge_to, self.edge_from[back]])
        self.arc_edge = np.concatenate([fwd, back])
        self.arc_length = self.edge_length[self.arc_edge]
        self._tree = cKDTree(self.xy) if len(self.xy) else None
        self._arc_lookup = None
        self._snap_cache: dict = {}

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_src)

    @property
    def directed(self) -> bool:
        return bool(self.edge_oneway.any())

    @property
    def nodes(self) -> list[NetworkNode]:
        return [
            NetworkNode(int(n), Point(float(x), float(y)))
            for n, (x, y) in zip(self.node_ids, self.xy)
        ]

    @property
    def edges(self) -> list[NetworkEdge]:
        return [
            NetworkEdge(int(self.node_ids[a]), int(self.node_ids[b]), float(length))
            for a, b, length in zip(self.arc_src, self.arc_dst, self.arc_length)
        ]

    def location(self, i: int) -> Point:
        return Point(float(self.xy[i, 0]), float(self.xy[i, 1]))

    def arc_index(self, from_id: int, to_id: int) -> int:
        if self._arc_lookup is None:
            self._arc_lookup = {}
            for a, (s, d) in enumerate(zip(self.arc_src, self.arc_dst)):
                self._arc_lookup.setdefault((int(s), int(d)), a)
        try:
            return self._arc_lookup[(self.index[from_id], self.index[to_id])]
        except KeyError:
            raise KeyError(f"no arc {from_id}->{to_id}") from None

    def nearest_node(self, p: Point, radius: float) -> int | None:
        key = (p.x, p.y, radius)
        hit = self._snap_cache.get(key, -2)
        if hit != -2:
            return hit
        if self._tree is None:
            found = None
        else:
            d, i = self._tree.query([p.x, p.y], distance_upper_bound=radius + 1e-9)
            found = None if not np.isfinite(d) else int(i)
        self._snap_cache[key] = found
        return found

    def nodes_in(self, region) -> np.ndarray:
        """Dense indices of nodes inside ``region``, ascending."""
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        c, r = region.bounding_circle()
        cand = np.asarray(self._tree.query_ball_point([c.x, c.y], r + 1e-6), dtype=np.int64)
        if len(cand) == 0:
            return cand
        cand.sort()
        return cand[region.contains_many(self.xy[cand])]


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), str(source)
    if isinstance(source, io.TextIOBase):
        return source, source_name(source)
    raise TypeError(f"unsupported source {source!r}")


def source_name(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return str(source)
    return getattr(source, "name", "<stream>")


def read_csv_rows(source, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    """Yield ``(line_number, row)`` pairs, checking the header first."""
    fh, name = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing and header:
            raise IngestionError(f"{name}:1: missing column(s) {', '.join(missing)}")
        for row in reader:
            if not any((v or "").strip() for v in row.values()):
                continue
            yield reader.line_num, row
    finally:
        if fh is not source:
            fh.close()


def _num(row, key, name, line, cast=float):
    try:
        v = cast(row[key])
    except (TypeError, ValueError):
        raise IngestionError(f"{name}:{line}: bad {key} value {row.get(key)!r}") from None
    if cast is float and not math.isfinite(v):
        raise IngestionError(f"{name}:{line}: non-finite {key}")
    return v


def _truthy(s) -> bool:
    return str(s or "").strip().lower() in {"1", "true", "yes", "y", "t"}


def load_network(nodes_source, edges_source, geodetic: bool = False) -> SpatialNetwork:
    """Read ``node_id,x,y`` (or ``node_id,lon,lat``) and ``from_id,to_id,length_m[,oneway]``."""
    nodes_name = source_name(nodes_source)
    cols = ("node_id", "lon", "lat") if geodetic else ("node_id", "x", "y")
    ids, raw = [], []
    seen = set()
    for line, row in read_csv_rows(nodes_source, cols):
        nid = _num(row, "node_id", nodes_name, line, int)
        if nid in seen:
            raise IngestionError(f"{nodes_name}:{line}: duplicate node {nid}")
        seen.add(nid)
        ids.append(nid)
        raw.append((_num(row, cols[1], nodes_name, line), _num(row, cols[2], nodes_name, line)))
    raw_xy = np.asarray(raw, dtype=float).reshape(-1, 2)
    projection = None
    if geodetic and len(raw_xy):
        projection = LocalProjection(float(raw_xy[:, 0].mean()), float(raw_xy[:, 1].mean()))
        x, y = projection.forward(raw_xy[:, 0], raw_xy[:, 1])
        xy = np.column_stack([x, y])
    else:
        xy = raw_xy
    index = {n: i for i, n in enumerate(ids)}

    edges_name = source_name(edges_source)
    ef, et, el, ow = [], [], [], []
    loops = 0
    for line, row in read_csv_rows(edges_source, ("from_id", "to_id", "length_m")):
        a = _num(row, "from_id", edges_name, line, int)
        b = _num(row, "to_id", edges_name, line, int)
        for n in (a, b):
            if n not in index:
                raise IngestionError(f"{edges_name}:{line}: unknown node {n}")
        length = _num(row, "length_m", edges_name, line)
        if length <= 0:
            raise IngestionError(f"{edges_name}:{line}: non-positive length {length}")
        if a == b:
            loops += 1
            continue
        ef.append(index[a])
        et.append(index[b])
        el.append(length)
        ow.append(_truthy(row.get("oneway")))
    if loops:
        log.warning("dropped %d self-loop edge(s) from %s", loops, edges_name)
    return SpatialNetwork(ids, xy, ef, et, el, ow, projection=projection, raw_xy=raw_xy)


def write_network(net: SpatialNetwork, nodes_path, edges_path, geodetic: bool = False) -> None:
    cols = ("node_id", "lon", "lat") if geodetic else ("node_id", "x", "y")
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for nid, (x, y) in zip(net.node_ids, net.raw_xy):
            w.writerow([int(nid), repr(float(x)), repr(float(y))])
    with open(edges_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from_id", "to_id", "length_m", "oneway"])
        for a, b, length, one in zip(net.edge_from, net.edge_to, net.edge_length, net.edge_oneway):
            w.writerow([int(net.node_ids[a]), int(net.node_ids[b]), repr(float(length)), int(one)])


@dataclass
class HistoricTraces:
    """Historic location records: object id, unix seconds, projected point, speed."""

    object_id: np.ndarray
    t: np.ndarray
    xy: np.ndarray
    speed: np.ndarray
    _index_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.object_id = np.asarray(self.object_id).astype(str)
        self.t = np.asarray(self.t, dtype=float)
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        self.speed = np.asarray(self.speed, dtype=float)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls) -> "HistoricTraces":
        return cls(np.empty(0, dtype=str), np.empty(0), np.empty((0, 2)), np.empty(0))

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "HistoricTraces":
        rows = list(records)
        if not rows:
            return cls.empty()
        oid, t, x, y, s = zip(*rows)
        return cls(np.asarray(oid), np.asarray(t), np.column_stack([x, y]), np.asarray(s))

    def index_for(self, net: SpatialNetwork, snap_radius: float) -> "TraceIndex":
        key = (id(net), float(snap_radius))
        idx = self._index_cache.get(key)
        if idx is None:
            idx = TraceIndex.build(net, self, snap_radius)
            self._index_cache[key] = idx
        return idx


def load_traces(source, projection: LocalProjection | None = None) -> HistoricTraces:
    name = source_name(source)
    rows = []
    last: dict[str, float] = {}
    for line, row in read_csv_rows(source, ("object_id", "t_unix_s", "x", "y", "speed_mps")):
        oid = row["object_id"]
        t = _num(row, "t_unix_s", name, line)
        if t < last.get(oid, -math.inf):
            raise IngestionError(f"{name}:{line}: records of object {oid} not time-sorted")
        last[oid] = t
        rows.append((oid, t, _num(row, "x", name, line), _num(row, "y", name, line), _num(row, "speed_mps", name, line)))
    traces = HistoricTraces.from_records(rows)
    if projection is not None and len(traces):
        x, y = projection.forward(traces.xy[:, 0], traces.xy[:, 1])
        traces.xy = np.column_stack([x, y])
    return traces


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return np.hypot(*(p - a).T)
    s = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + s[:, None] * ab
    return np.hypot(*(p - proj).T)


class TraceIndex:
    """Trace records bucketed per underlying edge and sorted by time.

    Window means are answered with two ``searchsorted`` calls over a
    composite ``edge * span + time`` key and a prefix sum of speeds.
    """

    def __init__(self, edge: np.ndarray, t: np.ndarray, speed: np.ndarray, n_edges: int):
        self.n_edges = n_edges
        if len(t):
            self.t0 = float(t.min())
            self.t1 = float(t.max())
        else:
            self.t0 = self.t1 = 0.0
        self.span = (self.t1 - self.t0) + 1.0
        keys = edge.astype(float) * self.span + (t - self.t0)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.csum = np.concatenate([[0.0], np.cumsum(speed[order])])

    @classmethod
    def build(cls, net: SpatialNetwork, traces: HistoricTraces, snap_radius: float) -> "TraceIndex":
        ne = len(net.edge_from)
        ok = traces.speed > 0
        if ok.sum() == 0 or ne == 0:
            return cls(np.empty(0, dtype=np.int64), np.empty(0), np.empty(0), ne)
        pts = traces.xy[ok]
        tt = traces.t[ok]
        sp = traces.speed[ok]
        tree = cKDTree(pts)
        a = net.xy[net.edge_from]
        b = net.xy[net.edge_to]
        mid = (a + b) / 2
        reach = np.hypot(*(b - a).T) / 2 + snap_radius
        hits = tree.query_ball_point(mid, reach)
        e_idx, r_idx = [], []
        for e, cand in enumerate(hits):
            if not cand:
                continue
            cand = np.asarray(cand, dtype=np.int64)
            d = _point_segment_distance(pts[cand], a[e], b[e])
            keep = cand[d <= snap_radius]
            e_idx.append(np.full(len(keep), e, dtype=np.int64))
            r_idx.append(keep)
        if not e_idx:
            return cls(np.empty(0, dtype=np.int64), np.empty(0), np.empty(0), ne)
        e_all = np.concatenate(e_idx)
        r_all = np.concatenate(r_idx)
        return cls(e_all, tt[r_all], sp[r_all], ne)

    def window_stats(self, edges: np.ndarray, t_a: float, t_b: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-edge (speed sum, record count) for records with ``t_a <= t <= t_b``."""
        edges = np.asarray(edges, dtype=np.int64)
        lo_t = max(t_a, self.t0)
        hi_t = min(t_b, self.t1)
        if len(self.keys) == 0 or lo_t > hi_t:
            z = np.zeros(len(edges))
            return z, z.astype(np.int64)
        base = edges.astype(float) * self.span
        lo = np.searchsorted(self.keys, base + (lo_t - self.t0), side="left")
        hi = np.searchsorted(self.keys, base + (hi_t - self.t0), side="right")
        return self.csum[hi] - self.csum[lo], hi - lo


def arc_weights(
    net: SpatialNetwork,
    index: TraceIndex,
    arcs: np.ndarray,
    window: tuple[float, float],
    default_speed: float,
) -> np.ndarray:
    """Travel seconds for ``arcs`` over ``window``: length / mean in-window speed."""
    arcs = np.asarray(arcs, dtype=np.int64)
    edges = net.arc_edge[arcs]
    sums, counts = index.window_stats(edges, window[0], window[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = np.where(counts > 0, sums / np.maximum(counts, 1), default_speed)
    return net.arc_length[arcs] / speed


def edge_weight_at(
    net: SpatialNetwork,
    traces,
    edge,
    window: tuple[float, float],
    snap_radius: float = 25.0,
    default_speed: float = 15.0,
) -> float:
    """Travel time of one arc given the traces seen near it during ``window``.

    ``edge`` is an arc index or a ``(from_id, to_id)`` pair of original ids;
    ``traces`` is a :class:`HistoricTraces` or a prebuilt :class:`TraceIndex`.
    """
    t_a, t_b = window
    if not t_a < t_b:
        raise ContractError(f"window must satisfy t_a < t_b, got {window}")
    if isinstance(edge, NetworkEdge):
        edge = net.arc_index(edge.from_id, edge.to_id)
    elif isinstance(edge, tuple):
        edge = net.arc_index(*edge)
    index = traces if isinstance(traces, TraceIndex) else traces.index_for(net, snap_radius)
    return float(arc_weights(net, index, np.array([edge]), window, default_speed)[0])


def weight_series(net, traces, edge, times: Sequence[float], **kw) -> NetworkEdge:
    """Edge annotated with its travel time over each consecutive window of ``times``."""
    if isinstance(edge, tuple):
        edge = net.arc_index(*edge)
    series = []
    for k, t in enumerate(times):
        a, b = (times[k], times[k + 1]) if k + 1 < len(times) else (times[k - 1], times[k])
        series.append((float(t), edge_weight_at(net, traces, edge, (a, b), **kw)))
    return NetworkEdge(
        int(net.node_ids[net.arc_src[edge]]),
        int(net.node_ids[net.arc_dst[edge]]),
        float(net.arc_length[edge]),
        tuple(series),
    )


def weight_drift(prev_weights, next_weights) -> float:
    """Largest relative per-edge change ``|w_next - w_prev| / w_prev``.

    Accepts two mappings with the same keys or two equal-length arrays.
    """
    if isinstance(prev_weights, Mapping) or isinstance(next_weights, Mapping):
        if not (isinstance(prev_weights, Mapping) and isinstance(next_weights, Mapping)):
            raise ContractError("weight_drift needs two mappings or two arrays")
        if prev_weights.keys() != next_weights.keys():
            raise ContractError("weight maps cover different edge sets")
        keys = list(prev_weights)
        prev = np.array([prev_weights[k] for k in keys], dtype=float)
        nxt = np.array([next_weights[k] for k in keys], dtype=float)
    else:
        prev = np.asarray(prev_weights, dtype=float)
        nxt = np.asarray(next_weights, dtype=float)
        if prev.shape != nxt.shape:
            raise ContractError("weight arrays cover different edge sets")
    if prev.size == 0:
        return 0.0
    return float(np.max(np.abs(nxt - prev) / prev))
