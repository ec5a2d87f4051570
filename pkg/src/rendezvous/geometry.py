"""Planar geometry for gap ellipses, time-slice circles and lenses.

Coordinates are projected meters. Every region exposes ``contains`` (scalar),
``contains_many`` (vectorized over an ``(n, 2)`` array), ``bounding_circle``
and ``polygon``; polygon vertices always lie exactly on the region boundary,
which is what makes the vertex-containment test in :func:`regions_intersect`
sound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

EPS_GEO = 1e-6
EPS_AREA = 1e-6
DEFAULT_RESOLUTION = 128


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def dist(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def _as_point(p) -> Point:
    return p if isinstance(p, Point) else Point(float(p[0]), float(p[1]))


def _circle_vertices(cx, cy, r, n):
    theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])


def _arc_vertices(cx, cy, r, start, stop, n):
    theta = np.linspace(start, stop, n)
    return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])


@dataclass(frozen=True)
class GeoEllipse:
    """Points whose summed distance to both foci is at most ``budget``."""

    focus_start: Point
    focus_end: Point
    budget: float

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("ellipse budget must be non-negative")
        if self.budget + EPS_GEO < self.focal_distance:
            raise ValueError(
                f"budget {self.budget} below inter-focal distance {self.focal_distance}"
            )

    @property
    def focal_distance(self) -> float:
        return self.focus_start.dist(self.focus_end)

    @property
    def center(self) -> Point:
        return Point(
            (self.focus_start.x + self.focus_end.x) / 2,
            (self.focus_start.y + self.focus_end.y) / 2,
        )

    @property
    def semi_major(self) -> float:
        return self.budget / 2

    @property
    def semi_minor(self) -> float:
        c = self.focal_distance / 2
        return math.sqrt(max(self.semi_major**2 - c**2, 0.0))

    def contains(self, p, eps: float = EPS_GEO) -> bool:
        p = _as_point(p)
        return p.dist(self.focus_start) + p.dist(self.focus_end) <= self.budget + eps

    def contains_many(self, xy: np.ndarray, eps: float = EPS_GEO) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        d1 = np.hypot(xy[:, 0] - self.focus_start.x, xy[:, 1] - self.focus_start.y)
        d2 = np.hypot(xy[:, 0] - self.focus_end.x, xy[:, 1] - self.focus_end.y)
        return d1 + d2 <= self.budget + eps

    def bounding_circle(self) -> tuple[Point, float]:
        return self.center, self.semi_major

    def interior_point(self) -> Point:
        return self.center

    def polygon(self, n: int = DEFAULT_RESOLUTION) -> np.ndarray:
        c = self.center
        dx = self.focus_end.x - self.focus_start.x
        dy = self.focus_end.y - self.focus_start.y
        phi = math.atan2(dy, dx) if (dx or dy) else 0.0
        theta = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        a, b = self.semi_major, self.semi_minor
        u = a * np.cos(theta)
        v = b * np.sin(theta)
        x = c.x + u * math.cos(phi) - v * math.sin(phi)
        y = c.y + u * math.sin(phi) + v * math.cos(phi)
        return np.column_stack([x, y])

    def area(self) -> float:
        return math.pi * self.semi_major * self.semi_minor


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be non-negative")

    def contains(self, p, eps: float = EPS_GEO) -> bool:
        return _as_point(p).dist(self.center) <= self.radius + eps


@dataclass(frozen=True)
class Lens:
    """Intersection of the forward circle ``c1`` and backward circle ``c2`` at time ``t``."""

    c1: Circle
    c2: Circle
    t: float

    @property
    def center_distance(self) -> float:
        return self.c1.center.dist(self.c2.center)

    @property
    def is_empty(self) -> bool:
        return self.c1.radius + self.c2.radius < self.center_distance - EPS_GEO

    def contains(self, p, eps: float = EPS_GEO) -> bool:
        return self.c1.contains(p, eps) and self.c2.contains(p, eps)

    def contains_many(self, xy: np.ndarray, eps: float = EPS_GEO) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        out = np.ones(len(xy), dtype=bool)
        for c in (self.c1, self.c2):
            d = np.hypot(xy[:, 0] - c.center.x, xy[:, 1] - c.center.y)
            out &= d <= c.radius + eps
        return out

    def _smaller(self) -> Circle:
        return self.c1 if self.c1.radius <= self.c2.radius else self.c2

    def bounding_circle(self) -> tuple[Point, float]:
        small = self._smaller()
        return small.center, small.radius

    def interior_point(self) -> Point:
        # Midpoint of the overlap along the center line; inside whenever the lens is non-empty.
        d = self.center_distance
        r1, r2 = self.c1.radius, self.c2.radius
        if d == 0:
            return self.c1.center
        lo = max(-r1, d - r2)
        hi = min(r1, d + r2)
        s = (lo + hi) / 2 / d
        a, b = self.c1.center, self.c2.center
        return Point(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))

    def polygon(self, n: int = DEFAULT_RESOLUTION) -> np.ndarray:
        if self.is_empty:
            return np.empty((0, 2))
        d = self.center_distance
        r1, r2 = self.c1.radius, self.c2.radius
        if d <= abs(r1 - r2):
            small = self._smaller()
            if small.radius == 0:
                return np.array([[small.center.x, small.center.y]])
            return _circle_vertices(small.center.x, small.center.y, small.radius, n)
        a, b = self.c1.center, self.c2.center
        phi = math.atan2(b.y - a.y, b.x - a.x)
        # Distance from c1 center to the radical line, clamped for tangency round-off.
        x = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
        alpha1 = math.acos(max(-1.0, min(1.0, x / r1)))
        alpha2 = math.acos(max(-1.0, min(1.0, (d - x) / r2)))
        half = max(n // 2, 2)
        arc1 = _arc_vertices(a.x, a.y, r1, phi - alpha1, phi + alpha1, half)
        arc2 = _arc_vertices(b.x, b.y, r2, phi + math.pi - alpha2, phi + math.pi + alpha2, half)
        return np.vstack([arc1, arc2])


Region = Union[GeoEllipse, Lens, "EllipseIntersection"]


@dataclass(frozen=True)
class EllipseIntersection:
    """Intersection of two gap ellipses (the prism rendezvous region)."""

    first: GeoEllipse
    second: GeoEllipse

    def contains(self, p, eps: float = EPS_GEO) -> bool:
        return self.first.contains(p, eps) and self.second.contains(p, eps)

    def contains_many(self, xy: np.ndarray, eps: float = EPS_GEO) -> np.ndarray:
        return self.first.contains_many(xy, eps) & self.second.contains_many(xy, eps)

    def bounding_circle(self) -> tuple[Point, float]:
        return min(
            (self.first.bounding_circle(), self.second.bounding_circle()),
            key=lambda bc: bc[1],
        )


def ellipse_contains(e: GeoEllipse, p, eps: float = EPS_GEO) -> bool:
    return e.contains(p, eps)


def slice_circles(
    gap_anchor_start, gap_anchor_end, t_s: float, t_e: float, ms: float, t: float
) -> tuple[Circle, Circle]:
    """Forward circle from the start anchor and backward circle from the end anchor at ``t``."""
    if not (t_s <= t <= t_e):
        raise ValueError(f"slice time {t} outside gap range [{t_s}, {t_e}]")
    return (
        Circle(_as_point(gap_anchor_start), (t - t_s) * ms),
        Circle(_as_point(gap_anchor_end), (t_e - t) * ms),
    )


def lens_at(gap, t: float) -> Lens | None:
    """Time-slice lens of ``gap`` at ``t``; ``None`` when the two circles miss each other.

    ``gap`` is anything with ``start_anchor``, ``end_anchor``, ``t_s``, ``t_e`` and ``ms``.
    """
    c1, c2 = slice_circles(gap.start_anchor, gap.end_anchor, gap.t_s, gap.t_e, gap.ms, t)
    lens = Lens(c1, c2, t)
    return None if lens.is_empty else lens


def circle_overlap_area(r1: float, r2: float, d: float) -> float:
    if r1 <= 0 or r2 <= 0 or d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        r = min(r1, r2)
        return math.pi * r * r
    a1 = math.acos(max(-1.0, min(1.0, (d * d + r1 * r1 - r2 * r2) / (2 * d * r1))))
    a2 = math.acos(max(-1.0, min(1.0, (d * d + r2 * r2 - r1 * r1) / (2 * d * r2))))
    k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * math.sqrt(max(k, 0.0))


def lens_area(lens: Lens | None) -> float:
    if lens is None or lens.is_empty:
        return 0.0
    return circle_overlap_area(lens.c1.radius, lens.c2.radius, lens.center_distance)


def discs_intersection_area(circles: Iterable[Circle]) -> float:
    """Exact area of the common intersection of any number of discs.

    Walks the boundary arcs of the intersection and sums Green's-theorem
    contributions, so there is no polygonization error.
    """
    cs = [(c.center.x, c.center.y, c.radius) for c in circles]
    if not cs:
        return 0.0
    if any(r <= 0 for _, _, r in cs):
        return 0.0
    # Identical discs contribute one boundary; keep the first copy only.
    uniq = []
    for c in cs:
        if not any(abs(c[0] - u[0]) < 1e-12 and abs(c[1] - u[1]) < 1e-12 and abs(c[2] - u[2]) < 1e-12 for u in uniq):
            uniq.append(c)
    cs = uniq
    for i, (xi, yi, ri) in enumerate(cs):
        for j, (xj, yj, rj) in enumerate(cs):
            if i < j and math.hypot(xi - xj, yi - yj) >= ri + rj:
                return 0.0

    def inside_all(x, y, skip):
        for k, (xk, yk, rk) in enumerate(cs):
            if k != skip and math.hypot(x - xk, y - yk) > rk * (1 + 1e-12) + 1e-12:
                return False
        return True

    total = 0.0
    for i, (xi, yi, ri) in enumerate(cs):
        cuts = []
        for j, (xj, yj, rj) in enumerate(cs):
            if i == j:
                continue
            d = math.hypot(xj - xi, yj - yi)
            if d == 0 or d <= abs(ri - rj) or d >= ri + rj:
                continue
            base = math.atan2(yj - yi, xj - xi)
            half = math.acos(max(-1.0, min(1.0, (ri * ri - rj * rj + d * d) / (2 * d * ri))))
            cuts.extend([(base - half) % (2 * math.pi), (base + half) % (2 * math.pi)])
        if not cuts:
            if inside_all(xi + ri, yi, i) and inside_all(xi - ri, yi, i) and inside_all(xi, yi + ri, i):
                total += 2 * math.pi * ri * ri
            continue
        cuts.sort()
        cuts.append(cuts[0] + 2 * math.pi)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a <= 0:
                continue
            mid = (a + b) / 2
            if inside_all(xi + ri * math.cos(mid), yi + ri * math.sin(mid), i):
                total += (
                    ri * ri * (b - a)
                    + xi * ri * (math.sin(b) - math.sin(a))
                    - yi * ri * (math.cos(b) - math.cos(a))
                )
    return max(total / 2, 0.0)


def lens_intersection_area(a: Lens | None, b: Lens | None) -> float:
    if a is None or b is None:
        return 0.0
    return discs_intersection_area([a.c1, a.c2, b.c1, b.c2])


def _segments_cross(pa: np.ndarray, pb: np.ndarray) -> bool:
    if len(pa) < 2 or len(pb) < 2:
        return False
    a0 = pa
    a1 = np.roll(pa, -1, axis=0)
    b0 = pb
    b1 = np.roll(pb, -1, axis=0)
    p = a0[:, None, :]
    r = (a1 - a0)[:, None, :]
    q = b0[None, :, :]
    s = (b1 - b0)[None, :, :]

    def cross(u, v):
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    denom = cross(r, s)
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(qp, s) / denom
        u = cross(qp, r) / denom
    hit = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return bool(hit.any())


def regions_intersect(a, b, resolution: int = DEFAULT_RESOLUTION) -> bool:
    """Whether two ellipse/lens regions share a point.

    Boundary polygonization at ``resolution`` vertices per region, plus exact
    containment tests of every vertex and of one interior point per region.
    """
    if a is None or b is None:
        return False
    if isinstance(a, Lens) and a.is_empty or isinstance(b, Lens) and b.is_empty:
        return False
    ca, ra = a.bounding_circle()
    cb, rb = b.bounding_circle()
    if ca.dist(cb) > ra + rb + EPS_GEO:
        return False
    if b.contains(a.interior_point()) or a.contains(b.interior_point()):
        return True
    pa = a.polygon(resolution)
    pb = b.polygon(resolution)
    if b.contains_many(pa).any() or a.contains_many(pb).any():
        return True
    return _segments_cross(pa, pb)


def point_in_region_intersection(p, a, b, eps: float = EPS_GEO) -> bool:
    return a.contains(p, eps) and b.contains(p, eps)
