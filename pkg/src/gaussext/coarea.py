"""Grid total variation, level-set perimeters and the coarea identity.

A :class:`GridFunction` stores node values ``values[i, j]`` at the points
``origin + (i * hx, j * hy)``. Cells are the rectangles spanned by four
neighbouring nodes. A cell is *active* when its midpoint lies in the region
(if a region predicate is attached) or, without a predicate, when all four
corner nodes are in ``mask``. Both the total variation and the contour
lengths are accumulated over the same active cells, so the discrete coarea
identity compares like with like.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .norms import HatFunction

_MAGIC = b"GXGRID01"


@dataclass(eq=False)
class GridFunction:
    """Node-sampled function on a rectangular grid.

    Parameters
    ----------
    origin : (2,) array
        Coordinates of node ``(0, 0)``.
    spacing : (2,) array
        ``(hx, hy)``, both positive.
    values : (nx, ny) array
        Node values, ``ij`` indexing.
    mask : (nx, ny) bool array, optional
        Active nodes. Defaults to all nodes.
    region : callable, optional
        Vectorized predicate on ``(n, 2)`` points. When given, the active
        cells are those whose midpoint satisfies it.
    """

    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray
    mask: Optional[np.ndarray] = None
    region: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        self.spacing = np.asarray(self.spacing, dtype=float).reshape(2)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or min(self.values.shape) < 2:
            raise ValueError("values must be a 2-D array with at least 2x2 nodes")
        if np.any(self.spacing <= 0):
            raise ValueError("spacing must be positive")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape differs from values shape")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("values must be finite on the mask")
        self._cells = None

    @classmethod
    def sample(cls, func: Callable, lower, upper, shape, region: Optional[Callable] = None) -> "GridFunction":
        """Sample vectorized ``func`` on a ``shape`` node grid spanning ``[lower, upper]``."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        nx, ny = shape
        spacing = (upper - lower) / (np.array([nx, ny]) - 1)
        pts = cls._node_points(lower, spacing, (nx, ny))
        vals = np.asarray(func(pts.reshape(-1, 2)), dtype=float).reshape(nx, ny)
        mask = None if region is None else np.asarray(region(pts.reshape(-1, 2)), dtype=bool).reshape(nx, ny)
        return cls(lower, spacing, vals, mask, region)

    @staticmethod
    def _node_points(origin, spacing, shape):
        xs = origin[0] + spacing[0] * np.arange(shape[0])
        ys = origin[1] + spacing[1] * np.arange(shape[1])
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @property
    def shape(self):
        return self.values.shape

    def node_points(self) -> np.ndarray:
        return self._node_points(self.origin, self.spacing, self.shape)

    def cell_midpoints(self) -> np.ndarray:
        return self._node_points(self.origin + 0.5 * self.spacing, self.spacing,
                                 (self.shape[0] - 1, self.shape[1] - 1))

    def active_cells(self) -> np.ndarray:
        """Boolean ``(nx-1, ny-1)`` array of active cells (cached)."""
        if self._cells is None:
            if self.region is not None:
                mids = self.cell_midpoints()
                self._cells = np.asarray(self.region(mids.reshape(-1, 2)), dtype=bool).reshape(mids.shape[:2])
            else:
                m = self.mask
                self._cells = m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:] & m[1:, 1:]
        return self._cells

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.origin, self.spacing, values, self.mask, self.region)

    def truncated(self, lo: float = 0.0, hi: float = 1.0) -> "GridFunction":
        """``min(hi, max(g, lo))``."""
        return self.with_values(np.clip(self.values, lo, hi))

    def _corners(self):
        v = self.values
        return v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]

    # -- serialization -------------------------------------------------
    def to_bytes(self) -> bytes:
        """Flat little-endian layout: magic, nx, ny, origin, spacing, values, mask."""
        nx, ny = self.shape
        head = _MAGIC + struct.pack("<qq4d", nx, ny, *self.origin, *self.spacing)
        return (head + self.values.astype("<f8").tobytes(order="C")
                + self.mask.astype(np.uint8).tobytes(order="C"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        if data[:8] != _MAGIC:
            raise ValueError("not a grid file")
        nx, ny, ox, oy, hx, hy = struct.unpack_from("<qq4d", data, 8)
        off = 8 + struct.calcsize("<qq4d")
        n = nx * ny
        vals = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(nx, ny).astype(float)
        mask = np.frombuffer(data, dtype=np.uint8, count=n, offset=off + 8 * n).reshape(nx, ny).astype(bool)
        return cls((ox, oy), (hx, hy), vals, mask)

    def save(self, path, metadata: Optional[dict] = None) -> None:
        """Write the binary grid to ``path`` and a JSON sidecar to ``path + '.json'``."""
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())
        side = {"shape": list(self.shape), "origin": self.origin.tolist(), "spacing": self.spacing.tolist(),
                "dtype": "float64-le", "metadata": metadata or {}}
        with open(str(path) + ".json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def cell_gradients(g: GridFunction) -> np.ndarray:
    """Gradient of the bilinear interpolant at every cell midpoint, shape ``(nx-1, ny-1, 2)``."""
    v00, v10, v11, v01 = g._corners()
    hx, hy = g.spacing
    gx = ((v10 + v11) - (v00 + v01)) / (2.0 * hx)
    gy = ((v01 + v11) - (v00 + v10)) / (2.0 * hy)
    return np.stack([gx, gy], axis=-1)


def total_variation(g: GridFunction, weight: Optional[Callable] = None) -> float:
    """Midpoint-rule ``int |grad g| (weight)`` over the active cells."""
    cells = g.active_cells()
    if not cells.any():
        raise ValueError("no active cells")
    grad = cell_gradients(g)[cells]
    mag = np.hypot(grad[:, 0], grad[:, 1])
    if weight is not None:
        mag = mag * np.asarray(weight(g.cell_midpoints()[cells]), dtype=float)
    return float(mag.sum() * g.spacing[0] * g.spacing[1])


@dataclass(frozen=True)
class LevelSetReport:
    t: float
    perimeter: float
    inside_region_flag: bool
    nudged: bool = False
    t_used: float = math.nan


class _CellCache:
    """Corner arrays of the active cells, sorted out once per grid."""

    def __init__(self, g: GridFunction):
        cells = g.active_cells()
        idx = np.nonzero(cells)
        v00, v10, v11, v01 = g._corners()
        self.corners = np.stack([v00[idx], v10[idx], v11[idx], v01[idx]], axis=1)
        self.lo = self.corners.min(axis=1)
        self.hi = self.corners.max(axis=1)
        self.spacing = g.spacing
        self.vmin = float(self.lo.min()) if self.lo.size else 0.0
        self.vmax = float(self.hi.max()) if self.hi.size else 0.0
        self.values = np.unique(self.corners)


# Corner offsets (in cell units) and edges as (corner_a, corner_b) in the order
# bottom, right, top, left.
_CORNER_XY = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_EDGES = ((0, 1), (1, 2), (3, 2), (0, 3))


def _contour_length(cache: _CellCache, t: float) -> float:
    sel = (cache.lo < t) & (cache.hi > t)
    if not sel.any():
        return 0.0
    c = cache.corners[sel]
    above = c > t
    n = c.shape[0]
    pts = np.full((n, 4, 2), np.nan)
    crossed = np.zeros((n, 4), dtype=bool)
    for e, (a, b) in enumerate(_EDGES):
        cr = above[:, a] != above[:, b]
        s = np.where(cr, (t - c[:, a]) / np.where(cr, c[:, b] - c[:, a], 1.0), 0.0)
        p = _CORNER_XY[a] + s[:, None] * (_CORNER_XY[b] - _CORNER_XY[a])
        pts[:, e] = p * cache.spacing
        crossed[:, e] = cr
    count = crossed.sum(axis=1)
    total = 0.0
    two = count == 2
    if two.any():
        order = np.argsort(~crossed[two], axis=1, kind="stable")[:, :2]
        p = pts[two]
        rows = np.arange(p.shape[0])
        d = p[rows, order[:, 0]] - p[rows, order[:, 1]]
        total += float(np.hypot(d[:, 0], d[:, 1]).sum())
    four = count == 4
    if four.any():
        p = pts[four]
        cc = c[four]
        ab = above[four]
        center_above = cc.mean(axis=1) > t
        # The corners on the opposite side of the centre get cut off; corner k
        # is adjacent to edges (k-1 mod 4 by edge list) as below.
        corner_edges = ((0, 3), (0, 1), (1, 2), (2, 3))
        for k, (e1, e2) in enumerate(corner_edges):
            iso = ab[:, k] != center_above
            if iso.any():
                d = p[iso, e1] - p[iso, e2]
                total += float(np.hypot(d[:, 0], d[:, 1]).sum())
    return total


def level_perimeter(g: GridFunction, t: float, _cache: Optional[_CellCache] = None) -> LevelSetReport:
    """Length of ``{g = t}`` inside the active cells (marching squares).

    Saddle cells are resolved with the cell-average rule. If ``t`` coincides
    with a node value it is moved up by ``1e-12`` times the value range; the
    report records this.
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    cache = _cache or _CellCache(g)
    t_used = float(t)
    nudged = False
    if cache.values.size:
        k = np.searchsorted(cache.values, t_used)
        if k < cache.values.size and cache.values[k] == t_used:
            eps = 1e-12 * max(cache.vmax - cache.vmin, 1.0)
            t_used += eps
            nudged = True
    per = _contour_length(cache, t_used)
    inside = bool(cache.vmin < t_used < cache.vmax)
    return LevelSetReport(t=float(t), perimeter=per, inside_region_flag=inside, nudged=nudged, t_used=t_used)


@dataclass(frozen=True)
class CoareaCheck:
    total_variation: float
    perimeter_integral: float
    residual: float
    t_nodes: int


def coarea_identity_check(g: GridFunction, t_samples: int = 256,
                          breakpoints: Sequence[float] = ()) -> CoareaCheck:
    """Compare ``TV(g)`` with the trapezoid approximation of ``int P({g>t}) dt``."""
    if t_samples < 16:
        raise ValueError("t_samples must be >= 16")
    tv = total_variation(g)
    cache = _CellCache(g)
    ts = np.linspace(cache.vmin, cache.vmax, t_samples)
    extra = [b for b in breakpoints if cache.vmin < b < cache.vmax]
    ts = np.unique(np.concatenate([ts, extra]))
    per = np.array([level_perimeter(g, float(t), cache).perimeter for t in ts])
    integral = float(np.trapezoid(per, ts))
    resid = 0.0 if tv == 0.0 else abs(tv - integral) / tv
    return CoareaCheck(tv, integral, resid, int(ts.size))


# -- the hat-function geometry -----------------------------------------


def sector_arc_length(m: int, t: float) -> float:
    """``H1(K_m ∩ ∂S_t) = 2 arctan(1/m) m^-2 (1 - t)`` for ``S_t = {f_m > t}``."""
    if not 0.0 <= t < 1.0:
        raise ValueError("S_t is empty unless 0 <= t < 1")
    return 2.0 * math.atan(1.0 / m) * (1.0 - t) / m ** 2


def perimeter_comparison(g_ext: GridFunction, f: HatFunction, t: float) -> float:
    """``H1(U ∩ ∂E_t) / (m H1(K_m ∩ ∂S_t))`` for a grid extension in physical units."""
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    meas = level_perimeter(g_ext, t).perimeter
    return meas / (f.m * sector_arc_length(f.m, t))


def separation_perimeter_bound(m: int, t: float) -> float:
    """Certified lower bound on ``H1(U ∩ ∂E)`` for every ``E`` containing ``S_t``
    and disjoint from the rest of the wedge ``K_m ∩ U``.

    With ``r = m^-2 (1 - t)`` and rhomb half-angle ``θ = arctan(1/m)``, the
    bound is ``r (2θ + 2(π-θ)/(π-θ+1))``. The arc ``|x-a| = r`` inside the
    wedge always belongs to the boundary. Slicing by circles about the apex
    charges two crossings on every radius ``s < r`` whose circle is not
    inside ``E``; if a fraction of radii escapes, some circle of radius
    ``s0`` lies in ``E`` and every ray outside the wedge must leave ``E``
    before radius 2 (circles beyond ``r`` touch the excluded wedge), which
    by polar slicing costs at least ``2(π-θ) s0``. Balancing both cases gives
    the second term. This requires ``r <= 1`` in rescaled units, which holds.
    """
    theta = math.atan(1.0 / m)
    r = (1.0 - t) / m ** 2
    return r * (2.0 * theta + 2.0 * (math.pi - theta) / (math.pi - theta + 1.0))


def certified_gradient_l1_bound(m: int) -> float:
    """``int_0^1`` of :func:`separation_perimeter_bound` in closed form.

    By coarea this bounds ``int_U |grad g| dx`` from below for every
    extension ``g`` of ``f_m`` off ``K_m ∩ U`` (after truncation to [0, 1],
    which does not increase the integral).
    """
    theta = math.atan(1.0 / m)
    return (theta + (math.pi - theta) / (math.pi - theta + 1.0)) / m ** 2


def disc_weight_floor(m: int) -> float:
    """``min_{U} rho(x)/rho(a)`` for the disc ``U`` of radius ``2 m^-2`` about the apex."""
    return math.exp(-2.0 - 2.0 / m ** 4)


def write_perimeter_csv(rows, path) -> None:
    """Rows of ``(label, t, perimeter, ratio)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("candidate", "t", "perimeter", "ratio"))
        for r in rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


# -- reference library ------------------------------------------------------


@dataclass(frozen=True)
class LibraryCase:
    name: str
    grid: GridFunction
    breakpoints: tuple
    total_variation_exact: float


def hat_grid(m: int, res: int = 512) -> GridFunction:
    """``f_m`` sampled on the bounding box of the sector ``K_m ∩ supp f_m``."""
    from .domains import Rhomb

    f = HatFunction(m)
    r = f.support_radius
    half = r * math.sin(math.atan(1.0 / m))
    return GridFunction.sample(f, (f.apex[0] - r, -half), (f.apex[0], half), (res + 1, res + 1),
                               region=Rhomb(m).contains)


def coarea_library(res: int = 512, m_values: Sequence[int] = (4, 8)) -> list:
    """Plane, cone, hat functions, truncated paraboloid and a smoothed indicator.

    Each case carries the exact total variation on its region, so both sides
    of the coarea identity can also be checked against a closed form.
    """
    disc = lambda p: np.hypot(p[:, 0], p[:, 1]) < 1.0
    unit = ((0.0, 0.0), (1.0, 1.0))
    big = ((-1.0, -1.0), (1.0, 1.0))
    shape = (res + 1, res + 1)
    ramp = 0.1
    cases = [
        LibraryCase("plane", GridFunction.sample(lambda p: p[:, 0], *unit, shape), (), 1.0),
        LibraryCase("cone", GridFunction.sample(lambda p: np.hypot(p[:, 0], p[:, 1]), *big, shape, region=disc),
                    (), math.pi),
        # 1 - |x|^2 capped at 1/2: |grad| = 2r for r > 1/sqrt(2), zero inside
        LibraryCase("truncated-paraboloid",
                    GridFunction.sample(lambda p: np.minimum(1.0 - p[:, 0] ** 2 - p[:, 1] ** 2, 0.5), *big, shape,
                                        region=disc),
                    (0.5,), 2.0 * math.pi * (2.0 / 3.0) * (1.0 - 0.5 ** 1.5)),
        # linear ramp of width 0.1 from 1 to 0 across the circle of radius 1/2
        LibraryCase("smoothed-indicator",
                    GridFunction.sample(lambda p: np.clip((0.5 + ramp / 2 - np.hypot(p[:, 0], p[:, 1])) / ramp, 0, 1),
                                        *big, shape, region=disc),
                    (0.0, 1.0), 2.0 * math.pi * 0.5),
    ]
    for m in m_values:
        cases.append(LibraryCase(f"hat-m{m}", hat_grid(m, res), (0.0, 1.0), math.atan(1.0 / m) / m ** 2))
    return cases
