"""Trajectory ingestion, gap extraction and plane-sweep gap pairing."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from rendezvous.geometry import (
    DEFAULT_RESOLUTION,
    EllipseIntersection,
    GeoEllipse,
    Point,
    regions_intersect,
)
from rendezvous.network import IngestionError, LocalProjection, _num, read_csv_rows, source_name

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    object_id: str
    t: np.ndarray = field(compare=False)
    xy: np.ndarray = field(compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise IngestionError(f"trajectory {self.object_id}: points not time-sorted")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", np.asarray(self.xy, dtype=float).reshape(-1, 2))

    def speeds(self) -> np.ndarray:
        """Implied speeds between consecutive points with positive time step."""
        if len(self.t) < 2:
            return np.empty(0)
        dt = np.diff(self.t)
        d = np.hypot(*np.diff(self.xy, axis=0).T)
        ok = dt > 0
        return d[ok] / dt[ok]


@dataclass(frozen=True)
class TrajectoryGap:
    gap_id: int
    object_id: str
    start_anchor: Point
    end_anchor: Point
    t_s: float
    t_e: float
    ms: float
    ordinal: int = 0

    def __post_init__(self):
        if not self.t_e > self.t_s:
            raise ValueError(f"gap {self.gap_id}: t_e must exceed t_s")
        if not self.ms > 0:
            raise ValueError(f"gap {self.gap_id}: ms must be positive")

    @property
    def duration(self) -> float:
        return self.t_e - self.t_s

    @property
    def budget(self) -> float:
        return self.duration * self.ms

    @property
    def feasible(self) -> bool:
        return self.budget >= self.start_anchor.dist(self.end_anchor)

    @property
    def ellipse(self) -> GeoEllipse:
        return GeoEllipse(self.start_anchor, self.end_anchor, self.budget)

    @property
    def key(self) -> str:
        """Stable label independent of extraction order: ``object#ordinal``."""
        return f"{self.object_id}#{self.ordinal}"


@dataclass(frozen=True)
class GapPair:
    first: TrajectoryGap
    second: TrajectoryGap
    overlap_range: tuple[float, float]
    region: EllipseIntersection

    @property
    def pair_id(self) -> str:
        return "|".join(sorted([self.first.key, self.second.key]))

    @property
    def gaps(self) -> tuple[TrajectoryGap, TrajectoryGap]:
        return self.first, self.second


def load_trajectories(source, projection: LocalProjection | None = None) -> list[Trajectory]:
    """Read ``object_id,t_unix_s,x,y``; points of each object must be time-sorted."""
    name = source_name(source)
    per: dict[str, list] = {}
    for line, row in read_csv_rows(source, ("object_id", "t_unix_s", "x", "y")):
        oid = row["object_id"].strip()
        t = _num(row, "t_unix_s", name, line)
        pts = per.setdefault(oid, [])
        if pts and t < pts[-1][0]:
            raise IngestionError(f"{name}:{line}: points of object {oid} not time-sorted")
        pts.append((t, _num(row, "x", name, line), _num(row, "y", name, line)))
    out = []
    for oid in sorted(per):
        arr = np.asarray(per[oid], dtype=float)
        xy = arr[:, 1:3]
        if projection is not None:
            x, y = projection.forward(xy[:, 0], xy[:, 1])
            xy = np.column_stack([x, y])
        out.append(Trajectory(oid, arr[:, 0], xy))
    return out


def percentile_speed(q: float = 95.0, fallback: float = 30.0) -> Callable[[Trajectory], float]:
    """Per-object speed limit: the ``q``-th percentile of its observed speeds."""

    def policy(traj: Trajectory) -> float:
        s = traj.speeds()
        s = s[s > 0]
        return float(np.percentile(s, q)) if len(s) else fallback

    return policy


MsPolicy = Union[float, Callable[[Trajectory], float]]


def extract_gaps(
    trajectories: Iterable[Trajectory] | Mapping[str, Trajectory],
    theta: float,
    ms_policy: MsPolicy = 30.0,
) -> list[TrajectoryGap]:
    """One gap per consecutive point pair at least ``theta`` seconds apart.

    Gaps whose anchors are farther apart than ``ms * duration`` cannot be
    explained by any movement and are dropped (logged as a warning count).
    """
    if isinstance(trajectories, Mapping):
        trajectories = trajectories.values()
    trajs = sorted(trajectories, key=lambda tr: tr.object_id)
    gaps: list[TrajectoryGap] = []
    dropped = 0
    for traj in trajs:
        if len(traj.t) > 1 and np.any(np.diff(traj.t) < 0):
            raise IngestionError(f"trajectory {traj.object_id}: points not time-sorted")
        ms = float(ms_policy(traj)) if callable(ms_policy) else float(ms_policy)
        dt = np.diff(traj.t)
        ordinal = 0
        for i in np.nonzero(dt >= theta)[0]:
            a = Point(*map(float, traj.xy[i]))
            b = Point(*map(float, traj.xy[i + 1]))
            if a.dist(b) > ms * float(dt[i]):
                dropped += 1
                continue
            gaps.append(
                TrajectoryGap(
                    gap_id=len(gaps),
                    object_id=traj.object_id,
                    start_anchor=a,
                    end_anchor=b,
                    t_s=float(traj.t[i]),
                    t_e=float(traj.t[i + 1]),
                    ms=ms,
                    ordinal=ordinal,
                )
            )
            ordinal += 1
    if dropped:
        log.warning("dropped %d infeasible gap(s) (anchor distance exceeds ms * duration)", dropped)
    return gaps


def time_overlap(a: TrajectoryGap, b: TrajectoryGap) -> tuple[float, float] | None:
    lo, hi = max(a.t_s, b.t_s), min(a.t_e, b.t_e)
    return (lo, hi) if lo <= hi else None


def candidate_pair(a: TrajectoryGap, b: TrajectoryGap, resolution: int = DEFAULT_RESOLUTION) -> GapPair | None:
    """The pair filter: distinct objects, overlapping times, intersecting ellipses."""
    if a.object_id == b.object_id:
        return None
    rng = time_overlap(a, b)
    if rng is None:
        return None
    ea, eb = a.ellipse, b.ellipse
    if not regions_intersect(ea, eb, resolution):
        return None
    first, second = (a, b) if a.gap_id < b.gap_id else (b, a)
    return GapPair(first, second, rng, EllipseIntersection(first.ellipse, second.ellipse))


def pair_gaps(gaps: Iterable[TrajectoryGap], resolution: int = DEFAULT_RESOLUTION) -> list[GapPair]:
    """Plane sweep over gap start times; emits pairs ordered by gap ids."""
    ordered = sorted(gaps, key=lambda g: (g.t_s, g.gap_id))
    active: list[TrajectoryGap] = []
    pairs = []
    for g in ordered:
        active = [a for a in active if a.t_e >= g.t_s]
        for a in active:
            p = candidate_pair(a, g, resolution)
            if p is not None:
                pairs.append(p)
        active.append(g)
    pairs.sort(key=lambda p: (p.first.gap_id, p.second.gap_id))
    return pairs
