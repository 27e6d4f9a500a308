"""Open convex planar domains and their products.

Every planar domain is stored as a finite intersection of open constraints,
either half-planes ``<n, x> > c`` or discs ``|x - center| < r``. Line sections
``{t : x + t h in D}`` are then exact intersections of intervals, and the
x-coordinates where a vertical section changes its active constraints (needed
to split iterated quadrature) are pairwise boundary intersections.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gauss_core import as_vector

@dataclass(frozen=True)
class SectionInterval:
    t_lower: float
    t_upper: float

    @property
    def nonempty(self) -> bool:
        return self.t_lower < self.t_upper

    @property
    def length(self) -> float:
        return max(self.t_upper - self.t_lower, 0.0)


EMPTY_SECTION = SectionInterval(math.inf, -math.inf)


@dataclass(frozen=True)
class HalfPlaneConstraint:
    normal: tuple
    offset: float

    def value(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.normal) - self.offset

    def interval(self, x, h):
        n = np.asarray(self.normal)
        slope = float(n @ h)
        gap = float(n @ x) - self.offset
        if slope == 0.0:
            return (-math.inf, math.inf) if gap > 0 else (math.inf, -math.inf)
        root = -gap / slope
        return (root, math.inf) if slope > 0 else (-math.inf, root)

    def intervals_many(self, xs, h):
        n = np.asarray(self.normal)
        slope = float(n @ h)
        gap = xs @ n - self.offset
        if slope == 0.0:
            lo = np.where(gap > 0, -np.inf, np.inf)
            return lo, -lo
        root = -gap / slope
        inf = np.full_like(root, np.inf)
        return (root, inf) if slope > 0 else (-inf, root)

    def boundary_distance(self, x):
        n = np.asarray(self.normal)
        return (np.asarray(x, dtype=float) @ n - self.offset) / float(np.linalg.norm(n))


@dataclass(frozen=True)
class DiscConstraint:
    center: tuple
    radius: float

    def value(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return self.radius ** 2 - np.sum(d * d, axis=-1)

    def interval(self, x, h):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        a = float(h @ h)
        b = float(d @ h)
        c = float(d @ d) - self.radius ** 2
        disc = b * b - a * c
        if disc <= 0.0:
            return (math.inf, -math.inf)
        s = math.sqrt(disc)
        # stable roots of a t^2 + 2 b t + c
        q = -(b + math.copysign(s, b)) if b != 0.0 else s
        r1 = q / a
        r2 = c / q if q != 0.0 else -r1
        return (min(r1, r2), max(r1, r2))

    def intervals_many(self, xs, h):
        d = xs - np.asarray(self.center)
        a = float(h @ h)
        b = d @ h
        c = np.sum(d * d, axis=-1) - self.radius ** 2
        disc = b * b - a * c
        ok = disc > 0
        s = np.sqrt(np.where(ok, disc, 0.0))
        lo = np.where(ok, (-b - s) / a, np.inf)
        hi = np.where(ok, (-b + s) / a, -np.inf)
        return lo, hi

    def boundary_distance(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return self.radius - np.linalg.norm(d, axis=-1)


class PlanarDomain:
    """Base class: an open convex set given by :attr:`constraints`."""

    constraints: tuple = ()
    open_flag = True

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for c in self.constraints:
            inside &= c.value(x) > 0
        return bool(inside) if inside.ndim == 0 else inside

    def section(self, x, h) -> SectionInterval:
        hv = as_vector(h)
        if not np.any(hv):
            raise ValueError("section needs a nonzero direction")
        x = np.asarray(x, dtype=float)
        lo, hi = -math.inf, math.inf
        for c in self.constraints:
            a, b = c.interval(x, hv)
            lo, hi = max(lo, a), min(hi, b)
            if lo >= hi:
                return EMPTY_SECTION
        return SectionInterval(lo, hi)

    def sections_many(self, xs, h):
        """Vectorized sections for base points ``xs`` of shape ``(n, 2)``."""
        hv = as_vector(h)
        if not np.any(hv):
            raise ValueError("section needs a nonzero direction")
        xs = np.asarray(xs, dtype=float)
        lo = np.full(xs.shape[0], -np.inf)
        hi = np.full(xs.shape[0], np.inf)
        for c in self.constraints:
            a, b = c.intervals_many(xs, hv)
            lo = np.maximum(lo, a)
            hi = np.minimum(hi, b)
        return lo, hi

    def boundary_distance(self, x):
        """Distance from an interior point to the boundary."""
        return min(float(c.boundary_distance(x)) for c in self.constraints)

    def _boundary_points(self):
        pts = []
        for c in self.constraints:
            if isinstance(c, DiscConstraint):
                cx, cy = c.center
                pts += [(cx - c.radius, cy), (cx + c.radius, cy)]
        for c1, c2 in itertools.combinations(self.constraints, 2):
            pts += _boundary_intersections(c1, c2)
        return pts

    def _closure_contains(self, p, slack=1e-9):
        p = np.asarray(p, dtype=float)
        scale = 1.0 + float(np.abs(p).max())
        for c in self.constraints:
            if isinstance(c, HalfPlaneConstraint):
                if c.boundary_distance(p) < -slack * scale:
                    return False
            elif c.boundary_distance(p) < -slack * max(scale, c.radius):
                return False
        return True

    def critical_x(self):
        """x-coordinates of boundary vertices and vertical tangencies."""
        return sorted({float(p[0]) for p in self._boundary_points() if self._closure_contains(p)})

    def x_extent(self):
        xs = self.critical_x()
        if not xs:
            return (-math.inf, math.inf)
        lo, hi = min(xs), max(xs)
        # a bounded convex region attains its x-extremes at these points; probe
        # just outside to detect unboundedness
        e2 = np.array([0.0, 1.0])
        for probe in (lo - 1.0, hi + 1.0):
            if self.section(np.array([probe, 0.0]), e2).nonempty:
                return (-math.inf, math.inf)
        mid = self.section(np.array([0.5 * (lo + hi), 0.0]), e2)
        if mid.nonempty and (math.isinf(mid.t_lower) or math.isinf(mid.t_upper)):
            return (-math.inf, math.inf)
        return (lo, hi)

    def intersect(self, other: "PlanarDomain") -> "Intersection":
        return Intersection((self, other))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _boundary_intersections(c1, c2):
    if isinstance(c1, DiscConstraint) and isinstance(c2, HalfPlaneConstraint):
        c1, c2 = c2, c1
    if isinstance(c1, HalfPlaneConstraint) and isinstance(c2, HalfPlaneConstraint):
        m = np.array([c1.normal, c2.normal], dtype=float)
        if abs(np.linalg.det(m)) < 1e-14:
            return []
        return [tuple(np.linalg.solve(m, [c1.offset, c2.offset]))]
    if isinstance(c1, HalfPlaneConstraint):
        n = np.asarray(c1.normal, dtype=float)
        p0 = n * c1.offset / float(n @ n)
        d = np.array([-n[1], n[0]])
        lo, hi = c2.interval(p0, d)
        if lo >= hi:
            return []
        return [tuple(p0 + lo * d), tuple(p0 + hi * d)]
    ca, cb = np.asarray(c1.center), np.asarray(c2.center)
    dist = float(np.linalg.norm(cb - ca))
    if dist == 0.0 or dist > c1.radius + c2.radius or dist < abs(c1.radius - c2.radius):
        return []
    along = (c1.radius ** 2 - c2.radius ** 2 + dist ** 2) / (2 * dist)
    off = math.sqrt(max(c1.radius ** 2 - along ** 2, 0.0))
    u = (cb - ca) / dist
    v = np.array([-u[1], u[0]])
    base = ca + along * u
    return [tuple(base + off * v), tuple(base - off * v)]


@dataclass(frozen=True, eq=False)
class Polygon(PlanarDomain):
    """Open convex polygon; vertices in either orientation."""

    vertices: tuple
    constraints: tuple = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least three planar vertices")
        signed_area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if signed_area == 0:
            raise ValueError("degenerate polygon")
        if signed_area < 0:
            v = v[::-1]
        cons = []
        for p, q in zip(v, np.roll(v, -1, axis=0)):
            d = q - p
            n = np.array([-d[1], d[0]])
            cons.append(HalfPlaneConstraint(tuple(n), float(n @ p)))
        for c in cons:
            if np.any(c.value(v) < -1e-9 * (1 + np.abs(v).max())):
                raise ValueError("polygon is not convex")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))
        object.__setattr__(self, "constraints", tuple(cons))

    def to_dict(self):
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertices]}


class Rhomb(Polygon):
    """The open rhomb ``K_m`` with vertices ``(+-m**2, 0)`` and ``(0, +-m)``."""

    def __init__(self, m: int):
        m = int(m)
        if m < 2:
            raise ValueError("rhomb(m) needs m >= 2")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "vertices", ((m * m, 0.0), (0.0, m), (-m * m, 0.0), (0.0, -m)))
        Polygon.__post_init__(self)

    def __repr__(self):
        return f"Rhomb(m={self.m})"

    @property
    def apex(self) -> np.ndarray:
        return np.array([float(self.m * self.m), 0.0])

    @property
    def half_angle(self) -> float:
        """Half of the interior angle at the apex, ``arctan(1/m)``."""
        return math.atan(1.0 / self.m)

    def contains(self, x):
        # exact edge inequality, free of the rounding in the generic normals
        x = np.asarray(x, dtype=float)
        m = self.m
        inside = np.abs(x[..., 0]) / (m * m) + np.abs(x[..., 1]) / m < 1.0
        return bool(inside) if inside.ndim == 0 else inside

    def boundary_distance(self, x):
        x = np.asarray(x, dtype=float)
        m = self.m
        gap = 1.0 - abs(x[0]) / (m * m) - abs(x[1]) / m
        return gap / math.hypot(1.0 / (m * m), 1.0 / m)

    def to_dict(self):
        return {"kind": "rhomb", "m": self.m}


@dataclass(frozen=True, eq=False)
class Disc(PlanarDomain):
    center: tuple
    radius: float
    constraints: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")
        c = tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "constraints", (DiscConstraint(c, float(self.radius)),))

    def contains(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        inside = np.sum(d * d, axis=-1) < self.radius ** 2
        return bool(inside) if inside.ndim == 0 else inside

    def to_dict(self):
        return {"kind": "disc", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class HalfPlane(PlanarDomain):
    """``{x : <normal, x> > offset}``."""

    normal: tuple
    offset: float = 0.0
    constraints: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = tuple(float(v) for v in self.normal)
        if not any(n):
            raise ValueError("half-plane normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "constraints", (HalfPlaneConstraint(n, float(self.offset)),))

    def to_dict(self):
        return {"kind": "halfplane", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Intersection(PlanarDomain):
    parts: tuple
    constraints: tuple = field(init=False, repr=False)

    def __post_init__(self):
        cons = []
        for p in self.parts:
            cons.extend(p.constraints)
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "constraints", tuple(cons))

    def contains(self, x):
        inside = self.parts[0].contains(x)
        for p in self.parts[1:]:
            inside = inside & p.contains(x)
        return inside

    def to_dict(self):
        return {"kind": "intersection", "parts": [p.to_dict() for p in self.parts]}


def domain_from_dict(d: dict) -> PlanarDomain:
    kind = d.get("kind")
    if kind == "rhomb":
        return Rhomb(d["m"])
    if kind == "disc":
        return Disc(tuple(d["center"]), d["radius"])
    if kind == "halfplane":
        return HalfPlane(tuple(d["normal"]), d.get("offset", 0.0))
    if kind == "polygon":
        return Polygon(tuple(map(tuple, d["vertices"])))
    if kind == "intersection":
        return Intersection(tuple(domain_from_dict(p) for p in d["parts"]))
    raise ValueError(f"unknown domain kind {kind!r}")


def domain_from_json(text: str) -> PlanarDomain:
    return domain_from_dict(json.loads(text))


def contains(domain: PlanarDomain, x):
    return domain.contains(x)


def section(domain: PlanarDomain, x, h) -> SectionInterval:
    return domain.section(x, h)


@dataclass(frozen=True)
class ProductDomain:
    """``prod_{m=first_block}^{truncation} K_m``, optionally cut by an L-ball.

    Block ``i`` of a point is its coordinates ``(x_{2i}, x_{2i+1})`` and lives
    in the rhomb ``K_{first_block + i}``.
    """

    truncation: int
    l_norm_bound: float | None = None
    first_block: int = 2

    def __post_init__(self):
        if self.first_block < 2:
            raise ValueError("rhomb factors need m >= 2")
        if self.truncation < self.first_block:
            raise ValueError("truncation must be at least first_block")

    @property
    def block_indices(self):
        return range(self.first_block, self.truncation + 1)

    @property
    def block_count(self) -> int:
        return self.truncation - self.first_block + 1

    def factor(self, m: int) -> Rhomb:
        return Rhomb(m)

    def blocks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] == 2 and x.ndim >= 2 and x.shape[-2] == self.block_count:
            return x
        if x.shape[-1] != 2 * self.block_count:
            raise ValueError(f"expected {self.block_count} planar blocks")
        return x.reshape(x.shape[:-1] + (self.block_count, 2))

    def l_norm_sq(self, x):
        b = self.blocks(x)
        m = np.arange(self.first_block, self.truncation + 1, dtype=float)
        return np.sum(np.sum(b * b, axis=-1) / m ** 2, axis=-1)

    def contains(self, x):
        b = self.blocks(x)
        m = np.arange(self.first_block, self.truncation + 1, dtype=float)
        inside = np.all(np.abs(b[..., 0]) / m ** 2 + np.abs(b[..., 1]) / m < 1.0, axis=-1)
        if self.l_norm_bound is not None:
            inside &= self.l_norm_sq(b) <= self.l_norm_bound
        return bool(inside) if inside.ndim == 0 else inside


def h_open_witness(domain: ProductDomain, x, radius: float) -> bool:
    """Sufficient test that the ``l2`` ball of ``radius`` about ``x`` stays in ``domain``.

    Per block the distance to the rhomb boundary must be at least ``radius``;
    with an L-bound the triangle inequality ``||x+z||_L <= ||x||_L + |z|``
    (valid because all weights ``m**-2 <= 1``) must also keep the ball inside.
    """
    if not domain.contains(x):
        raise ValueError("point is not in the product domain")
    if radius <= 0:
        return True
    b = domain.blocks(x)
    for m, xm in zip(domain.block_indices, b):
        if Rhomb(m).boundary_distance(xm) < radius:
            return False
    if domain.l_norm_bound is not None:
        if (math.sqrt(float(domain.l_norm_sq(b))) + radius) ** 2 > domain.l_norm_bound:
            return False
    return True


def remark_point(truncation: int, first_block: int = 2) -> np.ndarray:
    """Blocks ``x_m = (m**2 - 2**-m, 0)``: inside every rhomb yet hugging the apexes."""
    return np.array([[m * m - 2.0 ** (-m), 0.0] for m in range(first_block, truncation + 1)])


def ellipsoid_contains(x, truncation: int) -> bool:
    """``sum_{n <= M} n**-2 x_n**2 < 1`` (quadratic form; see README)."""
    x = np.asarray(x, dtype=float)[:truncation]
    n = np.arange(1, len(x) + 1, dtype=float)
    return bool(np.sum(x * x / n ** 2) < 1.0)


def z_statistic(x) -> float:
    """``N**-1 sum_{n<=N} x_n**2``, the finite-N shadow of the full-measure set Z."""
    x = np.asarray(x, dtype=float)
    return float(np.mean(x * x))
