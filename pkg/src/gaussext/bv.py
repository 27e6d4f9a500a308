"""Bounded variation along Gaussian lines.

Functions on a planar domain are carried as *line families*: a unit direction
``h`` and, for each orthogonal coordinate ``s``, a one-dimensional BV function
of the coordinate ``t`` along the line ``x = s h_perp + t h``. Under the
standard Gaussian the coordinates ``s`` and ``t`` are independent standard
normals, so every plane integral factors into an outer integral over ``s``
against the marginal density and inner line integrals against the
conditional density.

The derivative measure of a line function ``f`` against a positive density
``rho`` is ``Λf = f'_ac rho dt + Σ (f(t_j+) - f(t_j-)) rho(t_j) δ_{t_j}``, and
integration by parts reads ``∫ φ' f rho = -∫ φ dΛf - ∫ φ f β rho`` with
``β = rho'/rho``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .domains import Disc, HalfPlane, PlanarDomain, Polygon
from .gauss_core import as_vector

SQRT_2PI = math.sqrt(2.0 * math.pi)


# -- one-dimensional densities -----------------------------------------------


@dataclass(frozen=True)
class LineDensity:
    """Positive, continuously differentiable density on the real line."""

    pdf: Callable
    dpdf: Callable
    name: str = "custom"

    def log_derivative(self, t):
        return self.dpdf(t) / self.pdf(t)

    def check_positive(self, lo: float = -8.0, hi: float = 8.0, n: int = 2001) -> None:
        ts = np.linspace(lo, hi, n)
        vals = np.asarray(self.pdf(ts), dtype=float)
        if not np.all(vals > 0):
            raise ValueError(f"density {self.name!r} is not positive on [{lo}, {hi}]")


def gaussian_line_density(mean: float = 0.0, sd: float = 1.0) -> LineDensity:
    if sd <= 0:
        raise ValueError("sd must be positive")

    def pdf(t):
        z = (np.asarray(t, dtype=float) - mean) / sd
        return np.exp(-0.5 * z * z) / (sd * SQRT_2PI)

    def dpdf(t):
        t = np.asarray(t, dtype=float)
        return -(t - mean) / sd ** 2 * pdf(t)

    return LineDensity(pdf, dpdf, f"normal({mean}, {sd})")


STANDARD_NORMAL = gaussian_line_density()


def _quad_line(func: Callable, lo: float, hi: float, points: Sequence[float] = (), epsabs: float = 1e-13,
               epsrel: float = 1e-12) -> float:
    """``∫_lo^hi func`` split at ``points``; infinite ends allowed."""
    if not hi > lo:
        return 0.0
    cuts = sorted({float(p) for p in points if lo < p < hi})
    edges = [lo] + cuts + [hi]
    total = 0.0
    for a, b in zip(edges, edges[1:]):
        if math.isinf(a) and math.isinf(b):
            pieces = [(a, 0.0), (0.0, b)]
        else:
            pieces = [(a, b)]
        for x0, x1 in pieces:
            val, _ = integrate.quad(lambda t: float(func(t)), x0, x1, epsabs=epsabs, epsrel=epsrel, limit=400)
            total += val
    return total


# -- BV functions of one variable --------------------------------------------


@dataclass(frozen=True)
class Jump:
    t: float
    left: float
    right: float

    @property
    def height(self) -> float:
        return self.right - self.left


class ZeroJumpError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BV1D:
    """Right-continuous BV function of one variable.

    Parameters
    ----------
    ac_density : callable
        Density of the absolutely continuous part of the derivative.
    jumps : sequence of Jump
        Strictly increasing locations with explicit one-sided limits.
    base_value : float
        Value at ``reference``.
    value_fn : callable, optional
        Exact evaluator; without it values are rebuilt from ``base_value``,
        the integral of ``ac_density`` and the jump heights.
    breakpoints : sequence of float
        Points where ``ac_density`` is not smooth, or where it concentrates.
    support : (float, float)
        Interval outside which ``ac_density`` vanishes.
    """

    ac_density: Callable
    jumps: tuple = ()
    base_value: float = 0.0
    reference: float = 0.0
    value_fn: Optional[Callable] = None
    breakpoints: tuple = ()
    support: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        js = tuple(self.jumps)
        object.__setattr__(self, "jumps", js)
        ts = [j.t for j in js]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("jump locations must be strictly increasing")
        if any(j.left == j.right for j in js):
            raise ZeroJumpError("a jump must change the value")

    def _rebuild(self, t: float) -> float:
        ref = self.reference
        lo, hi = (ref, t) if t >= ref else (t, ref)
        pts = [j.t for j in self.jumps] + list(self.breakpoints)
        ac = _quad_line(self.ac_density, max(lo, self.support[0]), min(hi, self.support[1]), pts)
        ac = ac if t >= ref else -ac
        jsum = 0.0
        for j in self.jumps:
            if ref < j.t <= t:
                jsum += j.height
            elif t < j.t <= ref:
                jsum -= j.height
        return self.base_value + ac + jsum

    def __call__(self, t):
        if self.value_fn is not None:
            return self.value_fn(t)
        if np.ndim(t) == 0:
            return self._rebuild(float(t))
        return np.array([self._rebuild(float(v)) for v in np.ravel(t)]).reshape(np.shape(t))

    def left_limit(self, t: float) -> float:
        for j in self.jumps:
            if j.t == t:
                return j.left
        return float(self(t))

    def jump_heights(self) -> np.ndarray:
        return np.array([j.height for j in self.jumps])

    def validate(self, tol: float = 1e-9) -> None:
        """Check the stored one-sided limits against the evaluator."""
        for j in self.jumps:
            eps = 1e-9 * max(1.0, abs(j.t))
            if abs(float(self(j.t)) - j.right) > tol or abs(float(self(j.t - eps)) - j.left) > 1e-6:
                raise ValueError(f"jump at {j.t} disagrees with the function values")

    def quad_points(self) -> list:
        return [j.t for j in self.jumps] + list(self.breakpoints)

    # -- constructors ---------------------------------------------------
    @classmethod
    def smooth(cls, f: Callable, fprime: Callable, breakpoints: Sequence[float] = ()) -> "BV1D":
        return cls(ac_density=fprime, value_fn=f, base_value=float(f(0.0)), breakpoints=tuple(breakpoints))

    @classmethod
    def indicator(cls, a: float = -math.inf, b: float = math.inf) -> "BV1D":
        """``1`` on ``[a, b)``."""
        if not a < b:
            raise ValueError("need a < b")
        jumps = []
        if math.isfinite(a):
            jumps.append(Jump(a, 0.0, 1.0))
        if math.isfinite(b):
            jumps.append(Jump(b, 1.0, 0.0))

        def val(t):
            t = np.asarray(t, dtype=float)
            out = ((t >= a) & (t < b)).astype(float)
            return float(out) if out.ndim == 0 else out

        return cls(ac_density=lambda t: 0.0 * np.asarray(t, dtype=float), jumps=tuple(jumps),
                   base_value=float(val(0.0)), value_fn=val)

    @classmethod
    def piecewise_linear(cls, knots: Sequence[float], left_values: Sequence[float],
                         right_values: Sequence[float]) -> "BV1D":
        """Zero outside ``[knots[0], knots[-1])``, linear between knots.

        ``left_values[i]`` and ``right_values[i]`` are the one-sided limits at
        ``knots[i]``; the first left limit and the last right limit are
        forced to zero. Equal one-sided limits mean no jump.
        """
        k = np.asarray(knots, dtype=float)
        lv = np.asarray(left_values, dtype=float).copy()
        rv = np.asarray(right_values, dtype=float).copy()
        if k.ndim != 1 or k.size < 2 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing, at least two")
        lv[0] = 0.0
        rv[-1] = 0.0
        slopes = (lv[1:] - rv[:-1]) / np.diff(k)
        jumps = tuple(Jump(float(t), float(l), float(r)) for t, l, r in zip(k, lv, rv) if l != r)

        def val(t):
            t = np.asarray(t, dtype=float)
            i = np.clip(np.searchsorted(k, t, side="right") - 1, 0, k.size - 2)
            out = np.where((t >= k[0]) & (t < k[-1]), rv[i] + slopes[i] * (t - k[i]), 0.0)
            return float(out) if out.ndim == 0 else out

        def dens(t):
            t = np.asarray(t, dtype=float)
            i = np.clip(np.searchsorted(k, t, side="right") - 1, 0, k.size - 2)
            out = np.where((t >= k[0]) & (t < k[-1]), slopes[i], 0.0)
            return float(out) if out.ndim == 0 else out

        return cls(ac_density=dens, jumps=jumps, base_value=float(val(0.0)), value_fn=val,
                   breakpoints=tuple(float(v) for v in k), support=(float(k[0]), float(k[-1])))


# -- H-valued measures -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FinVectorMeasure:
    """Finitely many atoms plus an optional density on a line.

    ``atoms`` is a sequence of ``(point, value)`` with ``value`` a vector of
    length ``dim``. ``ac_density`` maps ``t`` (scalar) to a vector of length
    ``dim`` (or a scalar when ``dim == 1``) and is integrated with respect
    to Lebesgue measure over ``ac_interval``.
    """

    atoms: tuple = ()
    ac_density: Optional[Callable] = None
    ac_interval: tuple = (-math.inf, math.inf)
    ac_breakpoints: tuple = ()
    dim: int = 1

    def __post_init__(self):
        atoms = tuple((tuple(np.atleast_1d(np.asarray(p, dtype=float)).tolist()),
                       tuple(np.atleast_1d(np.asarray(v, dtype=float)).tolist())) for p, v in self.atoms)
        pts = [a[0] for a in atoms]
        if len(set(pts)) != len(pts):
            raise ValueError("atom support points must be distinct")
        if any(len(a[1]) != self.dim for a in atoms):
            raise ValueError("atom values must have length dim")
        object.__setattr__(self, "atoms", atoms)

    @property
    def values(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, self.dim))
        return np.array([a[1] for a in self.atoms], dtype=float)

    @property
    def points(self) -> list:
        return [a[0] for a in self.atoms]

    def _ac_integral(self, func: Callable, interval=None) -> float:
        if self.ac_density is None:
            return 0.0
        lo, hi = self.ac_interval
        if interval is not None:
            lo, hi = max(lo, interval[0]), min(hi, interval[1])
        return _quad_line(func, lo, hi, self.ac_breakpoints)

    def total_mass(self) -> np.ndarray:
        tot = self.values.sum(axis=0)
        if self.ac_density is not None:
            for k in range(self.dim):
                tot[k] += self._ac_integral(lambda t, k=k: np.atleast_1d(self.ac_density(t))[k])
        return tot

    def pair(self, phi: Callable, interval=None) -> np.ndarray:
        """``∫ φ dη``; atoms are evaluated at their first coordinate when ``φ`` is 1-D."""
        out = np.zeros(self.dim)
        for p, v in self.atoms:
            arg = p[0] if len(p) == 1 else np.asarray(p)
            if interval is None or interval[0] < p[0] < interval[1]:
                out += float(phi(arg)) * np.asarray(v)
        if self.ac_density is not None:
            for k in range(self.dim):
                out[k] += self._ac_integral(lambda t, k=k: float(phi(t)) * np.atleast_1d(self.ac_density(t))[k],
                                            interval)
        return out

    def variation(self) -> float:
        return variation(self)

    def semivariation(self) -> "SemivariationResult":
        return semivariation(self)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "atoms": [list(p) + list(v) for p, v in self.atoms],
                "ac_interval": [float(x) for x in self.ac_interval], "has_ac_part": self.ac_density is not None}


def variation(mu: FinVectorMeasure) -> float:
    """``Σ |v_j| + ∫ |density|``, the variation for disjoint atoms."""
    v = mu.values
    tot = float(np.linalg.norm(v, axis=1).sum()) if v.size else 0.0
    if mu.ac_density is not None:
        tot += mu._ac_integral(lambda t: float(np.linalg.norm(np.atleast_1d(mu.ac_density(t)))))
    return tot


@dataclass(frozen=True)
class SemivariationResult:
    value: float
    lower: float
    upper: float
    exact: bool
    method: str

    def __float__(self):
        return self.value


BRUTE_FORCE_MAX_ATOMS = 12


def _sign_max(v: np.ndarray) -> float:
    """``max_s |Σ s_j v_j|`` over all sign vectors (first sign fixed)."""
    n = v.shape[0]
    if n == 0:
        return 0.0
    if n == 1:
        return float(np.linalg.norm(v[0]))
    signs = 1.0 - 2.0 * ((np.arange(2 ** (n - 1))[:, None] >> np.arange(n - 1)[None, :]) & 1)
    signs = np.hstack([np.ones((signs.shape[0], 1)), signs])
    return float(np.linalg.norm(signs @ v, axis=1).max())


def _planar_sign_max(v: np.ndarray) -> float:
    """Exact ``max_s |Σ s_j v_j|`` for planar vectors by an angular sweep.

    The optimal signs are ``sign<v_j, e>`` for the maximizing direction
    ``e``; they only change when ``e`` crosses a normal of some ``v_j``,
    so visiting every arc between consecutive normals is exhaustive.
    """
    v = v[np.linalg.norm(v, axis=1) > 0]
    if v.shape[0] == 0:
        return 0.0
    ang = np.arctan2(v[:, 1], v[:, 0])
    crit = np.concatenate([ang + 0.5 * np.pi, ang - 0.5 * np.pi]) % (2 * np.pi)
    owner = np.concatenate([np.arange(v.shape[0])] * 2)
    order = np.argsort(crit, kind="stable")
    crit, owner = crit[order], owner[order]
    start = 0.5 * (crit[-1] + crit[0] + 2 * np.pi) if crit.size > 1 else crit[0] + np.pi
    e = np.array([math.cos(start), math.sin(start)])
    s = np.where(v @ e >= 0, 1.0, -1.0)
    S = s @ v
    best = float(np.linalg.norm(S))
    for j in owner:
        S = S - 2.0 * s[j] * v[j]
        s[j] = -s[j]
        best = max(best, float(np.linalg.norm(S)))
    return best


def semivariation(mu: FinVectorMeasure) -> SemivariationResult:
    """Semivariation ``sup Σ |α_i| <= 1 of |Σ α_i η(Ω_i)|``.

    For atoms the supremum is attained with every atom in its own cell and
    ``α = ±1``, so it equals ``max_s |Σ s_j v_j|``. Engines, in order:
    scalar measures (semivariation equals variation), brute force over
    signs for at most 12 atoms, the angular sweep for planar values,
    ``sqrt(Σ |v_j|^2)`` for pairwise orthogonal atoms, and otherwise the
    bracket ``[max_j |v_j|, min(Var, sqrt(n λ_max(Gram)))]``.
    """
    var = variation(mu)
    if mu.dim == 1:
        return SemivariationResult(var, var, var, True, "scalar")
    v = mu.values
    if mu.ac_density is not None:
        lower = max([float(np.linalg.norm(mu.total_mass()))] + [float(np.linalg.norm(x)) for x in v])
        return SemivariationResult(math.nan, lower, var, False, "bracket")
    n = v.shape[0]
    if n <= BRUTE_FORCE_MAX_ATOMS:
        val = _sign_max(v)
        return SemivariationResult(val, val, val, True, "sign-enumeration")
    if mu.dim == 2:
        val = _planar_sign_max(v)
        return SemivariationResult(val, val, val, True, "angular-sweep")
    gram = v @ v.T
    norms = np.sqrt(np.diag(gram))
    off = gram - np.diag(np.diag(gram))
    if np.all(np.abs(off) <= 1e-14 * np.outer(norms, norms)):
        val = float(math.sqrt(float(np.sum(norms ** 2))))
        return SemivariationResult(val, val, val, True, "orthogonal")
    upper = min(var, math.sqrt(n * float(np.linalg.eigvalsh(gram)[-1])))
    lower = float(np.linalg.norm(np.where(v @ v[np.argmax(norms)] >= 0, 1.0, -1.0) @ v))
    return SemivariationResult(math.nan, lower, upper, False, "bracket")


def harmonic_atoms(n: int) -> FinVectorMeasure:
    """``Σ_{k<=n} k^-1 δ(e_k) e_k``: atom ``e_k / k`` at the point ``e_k``."""
    eye = np.eye(n)
    return FinVectorMeasure(atoms=tuple((eye[k], eye[k] / (k + 1)) for k in range(n)), dim=n)


# -- derivatives of line functions ---------------------------------------------


def lambda_measure(f: BV1D, density: LineDensity = STANDARD_NORMAL) -> FinVectorMeasure:
    """``Λf = f'_ac rho dt + Σ (right - left) rho(t_j) δ_{t_j}``."""
    atoms = tuple(((j.t,), (j.height * float(density.pdf(j.t)),)) for j in f.jumps)
    return FinVectorMeasure(atoms=atoms, ac_density=lambda t: f.ac_density(t) * density.pdf(t),
                            ac_interval=f.support, ac_breakpoints=tuple(f.quad_points()), dim=1)


def skorohod_derivative_1d(f: BV1D, density: LineDensity = STANDARD_NORMAL,
                           window: tuple = (-8.0, 8.0)) -> FinVectorMeasure:
    """Derivative of the measure ``f rho dt``: ``Λf + f rho' dt``.

    The density must be positive on ``window``; a nonpositive value raises.
    """
    density.check_positive(*window)
    atoms = tuple(((j.t,), (j.height * float(density.pdf(j.t)),)) for j in f.jumps)

    def dens(t):
        return f.ac_density(t) * density.pdf(t) + f(t) * density.dpdf(t)

    return FinVectorMeasure(atoms=atoms, ac_density=dens, ac_breakpoints=tuple(f.quad_points()), dim=1)


@dataclass(frozen=True)
class ChainRuleResult:
    function: BV1D
    jump_quotients: tuple
    lipschitz: float


def chain_rule(f: BV1D, psi: Callable, dpsi: Callable, lipschitz: Optional[float] = None,
               grid: Optional[np.ndarray] = None) -> ChainRuleResult:
    """``ψ ∘ f`` with derivative ``ψ'(f) f'_ac`` and jump quotients.

    Each jump of ``f`` becomes a jump of ``ψ∘f`` whose coefficient relative
    to the original height is ``(ψ(r) - ψ(l)) / (r - l)``; jumps that
    ``ψ`` flattens disappear. Without ``lipschitz`` the constant is
    estimated as ``max |ψ'|`` on the range of ``f`` sampled on ``grid``.
    """
    for j in f.jumps:
        if j.left == j.right:
            raise ZeroJumpError("zero-height jump in the input")
    quotients = tuple((psi(j.right) - psi(j.left)) / (j.right - j.left) for j in f.jumps)
    new_jumps = tuple(Jump(j.t, float(psi(j.left)), float(psi(j.right))) for j in f.jumps
                      if psi(j.left) != psi(j.right))
    if lipschitz is None:
        ts = np.linspace(-6, 6, 4001) if grid is None else np.asarray(grid)
        vals = np.concatenate([np.atleast_1d(f(ts)), [j.left for j in f.jumps], [j.right for j in f.jumps]])
        lo, hi = float(vals.min()), float(vals.max())
        lipschitz = float(np.max(np.abs(dpsi(np.linspace(lo, hi, 2001)))))

    g = BV1D(ac_density=lambda t: dpsi(f(t)) * f.ac_density(t), jumps=new_jumps, base_value=float(psi(f.base_value)),
             reference=f.reference, value_fn=lambda t: psi(f(t)), breakpoints=tuple(f.quad_points()),
             support=f.support)
    return ChainRuleResult(g, quotients, lipschitz)


# -- line families on planar domains --------------------------------------------


def _perp(h: np.ndarray) -> np.ndarray:
    return np.array([-h[1], h[0]])


def _unit2(h) -> np.ndarray:
    h = as_vector(h)
    if h.shape != (2,) or not math.isclose(float(np.linalg.norm(h)), 1.0, rel_tol=1e-12):
        raise ValueError("direction must be a planar unit vector")
    return h


def projection_extent(domain: Optional[PlanarDomain], d) -> tuple:
    """Range of ``<x, d>`` over the domain (infinite when unbounded)."""
    if domain is None:
        return (-math.inf, math.inf)
    d = as_vector(d)
    if isinstance(domain, Disc):
        c = float(np.asarray(domain.center) @ d)
        r = domain.radius * float(np.linalg.norm(d))
        return (c - r, c + r)
    if isinstance(domain, Polygon):
        proj = np.asarray(domain.vertices, dtype=float) @ d
        return (float(proj.min()), float(proj.max()))
    return (-math.inf, math.inf)


@dataclass(eq=False)
class LineFamily:
    """A function on ``domain`` (the plane when ``None``) cut into lines along ``h``.

    ``line(s)`` returns the :class:`BV1D` of ``t -> f(s h_perp + t h)``.
    ``point_fn`` optionally evaluates the function on ``(n, 2)`` points; it is
    used for boundary traces.
    """

    h: np.ndarray
    line: Callable[[float], BV1D]
    domain: Optional[PlanarDomain] = None
    point_fn: Optional[Callable] = None
    bound: float = math.inf

    def __post_init__(self):
        self.h = _unit2(self.h)
        self.perp = _perp(self.h)

    def point(self, s: float, t):
        t = np.asarray(t, dtype=float)
        return s * self.perp + t[..., None] * self.h

    def section(self, s: float) -> tuple:
        if self.domain is None:
            return (-math.inf, math.inf)
        sec = self.domain.section(s * self.perp, self.h)
        return (sec.t_lower, sec.t_upper) if sec.nonempty else (0.0, 0.0)

    def s_extent(self) -> tuple:
        return projection_extent(self.domain, self.perp)

    # -- constructors ---------------------------------------------------
    @classmethod
    def smooth(cls, domain: Optional[PlanarDomain], h, f: Callable, grad: Callable) -> "LineFamily":
        """``f`` and its gradient vectorized on ``(n, 2)`` points."""
        h = _unit2(h)
        perp = _perp(h)

        def line(s):
            def val(t):
                t = np.asarray(t, dtype=float)
                out = f(s * perp + np.atleast_1d(t)[:, None] * h)
                return float(out[0]) if t.ndim == 0 else out

            def dens(t):
                t = np.asarray(t, dtype=float)
                out = np.asarray(grad(s * perp + np.atleast_1d(t)[:, None] * h)) @ h
                return float(out[0]) if t.ndim == 0 else out

            return BV1D(ac_density=dens, value_fn=val, base_value=val(0.0))

        return cls(h, line, domain, f)

    @classmethod
    def halfplane_indicator(cls, domain: Optional[PlanarDomain], h, normal, offset: float = 0.0) -> "LineFamily":
        """Indicator of ``{<normal, x> > offset}`` with exact jump limits on each line."""
        h = _unit2(h)
        perp = _perp(h)
        n = as_vector(normal)
        nh, np_ = float(n @ h), float(n @ perp)

        def pf(x):
            return (np.asarray(x, dtype=float) @ n > offset).astype(float)

        def line(s):
            if nh == 0.0:
                c = 1.0 if s * np_ > offset else 0.0
                return BV1D(ac_density=lambda t: 0.0 * np.asarray(t, dtype=float),
                            value_fn=lambda t, c=c: c + 0.0 * np.asarray(t, dtype=float), base_value=c)
            ts = (offset - s * np_) / nh
            return BV1D.indicator(ts, math.inf) if nh > 0 else BV1D.indicator(-math.inf, ts)

        return cls(h, line, domain, pf, bound=1.0)


# -- test functions ---------------------------------------------------------------


def bump(z):
    """``exp(1 - 1/(1 - z^2))`` on ``|z| < 1``, zero elsewhere (value 1 at 0)."""
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1
    zz = np.where(inside, z, 0.0)
    out = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - zz * zz)), 0.0)
    return float(out) if out.ndim == 0 else out


def dbump(z):
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1
    zz = np.where(inside, z, 0.0)
    out = np.where(inside, bump(zz) * (-2.0 * zz / (1.0 - zz * zz) ** 2), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BumpTest:
    """``φ(s, t) = χ(s) bump((t - c(s)) / w(s))``.

    With ``fixed=None`` the bump sits inside the section: centre at
    ``mid + shift * half`` and half-width ``scale * half * (1 - |shift|)``
    where ``mid`` and ``half`` describe the section. With ``fixed=(c, w)``
    the bump is the same on every line. ``chi`` is any bounded function;
    ``s_support`` limits the outer integral.
    """

    shift: float = 0.0
    scale: float = 0.9
    fixed: Optional[tuple] = None
    chi: Callable = field(default=lambda s: 1.0 + 0.5 * math.sin(3.0 * s))
    s_support: tuple = (-math.inf, math.inf)

    def placement(self, section: tuple) -> tuple:
        if self.fixed is not None:
            return self.fixed
        lo, hi = section
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("a section-relative bump needs a bounded section; use fixed placement")
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return (mid + self.shift * half, self.scale * half * (1.0 - abs(self.shift)))


class TestSupportError(ValueError):
    pass


# ``BumpTest``/``TestSupportError`` are library types, not pytest classes.
BumpTest.__test__ = False
TestSupportError.__test__ = False


def _line_ibp_terms(fl: BV1D, c: float, w: float, meas: FinVectorMeasure, density: LineDensity):
    """Return ``(∫ φ' f rho, -∫ φ dΛ + ∫ φ f (-β) rho)`` for ``φ = bump((t - c)/w)``."""
    lo, hi = c - w, c + w
    pts = [p for p in fl.quad_points() if lo < p < hi] + [c]

    def lhs_f(t):
        return dbump((t - c) / w) / w * float(fl(t)) * float(density.pdf(t))

    def beta_f(t):
        return bump((t - c) / w) * float(fl(t)) * float(density.log_derivative(t)) * float(density.pdf(t))

    lhs = _quad_line(lhs_f, lo, hi, pts)
    pairing = float(meas.pair(lambda t: bump((t - c) / w), (lo, hi))[0])
    rhs = -pairing - _quad_line(beta_f, lo, hi, pts)
    return lhs, rhs


def ibp_residual(family: LineFamily, phi: BumpTest, lam: Optional[Callable[[float], FinVectorMeasure]] = None,
                 density: LineDensity = STANDARD_NORMAL, marginal: LineDensity = STANDARD_NORMAL,
                 check_points: int = 33) -> float:
    """Residual of ``∫ ∂_h φ f dμ = -∫ φ d(Λf, h) - ∫ φ f β_h dμ``.

    The plane integrals are assembled as an outer integral over ``s``
    (against ``marginal``) of line integrals in ``t`` (against
    ``density``). ``lam(s)`` supplies the line derivative measure; by
    default it is computed from the line function. The test function's
    support is checked against the sections on ``check_points`` lines.
    """
    s_lo, s_hi = family.s_extent()
    s_lo, s_hi = max(s_lo, phi.s_support[0]), min(s_hi, phi.s_support[1])
    if not (math.isfinite(s_lo) and math.isfinite(s_hi)):
        s_lo, s_hi = max(s_lo, -10.0), min(s_hi, 10.0)
    for s in np.linspace(s_lo, s_hi, check_points)[1:-1]:
        sec = family.section(float(s))
        if sec[1] <= sec[0]:
            continue
        c, w = phi.placement(sec)
        if c - w < sec[0] - 1e-12 or c + w > sec[1] + 1e-12:
            raise TestSupportError(f"test function support [{c - w}, {c + w}] leaves the section on line s={s}")

    def outer(s):
        sec = family.section(s)
        if sec[1] <= sec[0]:
            return 0.0
        c, w = phi.placement(sec)
        if w <= 0:
            return 0.0
        fl = family.line(s)
        meas = lam(s) if lam is not None else lambda_measure(fl, density)
        lhs, rhs = _line_ibp_terms(fl, c, w, meas, density)
        return float(phi.chi(s)) * float(marginal.pdf(s)) * (lhs - rhs)

    val, _ = integrate.quad(outer, s_lo, s_hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return abs(val)


# -- derivative of an indicator ---------------------------------------------------


@dataclass(frozen=True)
class BoundaryCell:
    start: tuple
    end: tuple
    midpoint: tuple


def boundary_cells(domain: PlanarDomain, n_cells: int = 256, extra_angles: Sequence[float] = (),
                   half_length: float = 12.0) -> list:
    """Partition the boundary into cells on which the outward normal turns monotonically.

    Polygons are cut at their vertices and each edge subdivided; discs are
    cut at equally spaced angles plus ``extra_angles``; a half-plane's
    boundary line is truncated to ``half_length`` about its foot point
    (the Gaussian mass beyond is negligible).
    """
    cells = []
    if isinstance(domain, Disc):
        c = np.asarray(domain.center)
        ang = np.concatenate([np.linspace(0, 2 * np.pi, n_cells + 1)[:-1], np.mod(extra_angles, 2 * np.pi)])
        ang = np.unique(ang)
        ang = np.append(ang, ang[0] + 2 * np.pi)
        for a0, a1 in zip(ang, ang[1:]):
            p0 = c + domain.radius * np.array([math.cos(a0), math.sin(a0)])
            p1 = c + domain.radius * np.array([math.cos(a1), math.sin(a1)])
            am = 0.5 * (a0 + a1)
            pm = c + domain.radius * np.array([math.cos(am), math.sin(am)])
            cells.append(BoundaryCell(tuple(p0), tuple(p1), tuple(pm)))
    elif isinstance(domain, Polygon):
        v = np.asarray(domain.vertices, dtype=float)
        per = max(1, n_cells // len(v))
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            for k in range(per):
                p0 = a + (b - a) * k / per
                p1 = a + (b - a) * (k + 1) / per
                cells.append(BoundaryCell(tuple(p0), tuple(p1), tuple(0.5 * (p0 + p1))))
    elif isinstance(domain, HalfPlane):
        n = np.asarray(domain.normal, dtype=float)
        foot = n * domain.offset / float(n @ n)
        tan = _perp(n / np.linalg.norm(n))
        taus = np.linspace(-half_length, half_length, n_cells + 1)
        for t0, t1 in zip(taus, taus[1:]):
            p0, p1 = foot + t0 * tan, foot + t1 * tan
            cells.append(BoundaryCell(tuple(p0), tuple(p1), tuple(0.5 * (p0 + p1))))
    else:
        raise TypeError(f"boundary cells are not available for {type(domain).__name__}")
    return cells


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _cell_component(domain: PlanarDomain, cell: BoundaryCell, h: np.ndarray, trace: Optional[Callable],
                    density: LineDensity, marginal: LineDensity) -> float:
    """``(η(cell), h)``: signed endpoint weights of the lines through the cell.

    Lines ``s h_perp + t h`` whose section endpoint lies in the cell carry
    ``+rho(t_lower)`` when they enter the domain there and ``-rho(t_upper)``
    when they leave; the outer coordinate ``s`` carries the marginal
    density. Entry or exit is decided by probing the cell midpoint a
    small step along ``h``.
    """
    perp = _perp(h)
    s0, s1 = float(np.asarray(cell.start) @ perp), float(np.asarray(cell.end) @ perp)
    if s0 == s1:
        return 0.0
    a, b = min(s0, s1), max(s0, s1)
    pm = np.asarray(cell.midpoint)
    scale = 1e-7 * max(1.0, float(np.linalg.norm(pm)))
    entry = bool(domain.contains(pm + scale * h))
    if entry == bool(domain.contains(pm - scale * h)):
        return 0.0
    ss = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    lo, hi = domain.sections_many(ss[:, None] * perp[None, :], h)
    t_end = lo if entry else hi
    ok = np.isfinite(t_end)
    vals = np.where(ok, marginal.pdf(ss) * density.pdf(np.where(ok, t_end, 0.0)), 0.0)
    if trace is not None:
        pts = ss[:, None] * perp[None, :] + np.where(ok, t_end, 0.0)[:, None] * h[None, :]
        vals = vals * np.asarray(trace(pts), dtype=float)
    sign = 1.0 if entry else -1.0
    return sign * 0.5 * (b - a) * float(vals @ _GL_W)


@dataclass(frozen=True)
class IndicatorDerivative:
    measure: FinVectorMeasure
    directions: tuple
    variation: float


def lambda_indicator_convex(domain: PlanarDomain, directions=None, n_cells: int = 1024,
                            trace: Optional[Callable] = None, density: LineDensity = STANDARD_NORMAL,
                            marginal: LineDensity = STANDARD_NORMAL) -> IndicatorDerivative:
    """Derivative measure of the indicator of a convex domain, cell by cell on the boundary.

    ``directions`` is one unit vector (scalar measure ``(Λ I_U, h)``) or a
    sequence of orthonormal vectors (vector measure in those coordinates;
    the default is both coordinate axes). With ``trace`` the endpoint
    weights are multiplied by the trace of a function at the boundary,
    which yields the atoms that extension by zero adds.
    """
    if directions is None:
        dirs = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    else:
        d = np.asarray(directions, dtype=float)
        dirs = (d,) if d.ndim == 1 else tuple(d)
    dirs = tuple(_unit2(h) for h in dirs)
    extra = []
    for h in dirs:
        a = math.atan2(h[1], h[0])
        extra += [a, a + math.pi]
    cells = boundary_cells(domain, n_cells, extra_angles=extra)
    atoms = []
    for cell in cells:
        vec = [_cell_component(domain, cell, h, trace, density, marginal) for h in dirs]
        if any(vec):
            atoms.append((cell.midpoint, vec))
    mu = FinVectorMeasure(atoms=tuple(atoms), dim=len(dirs))
    if not atoms:
        raise ValueError("no line meets the domain boundary; the domain is negligible")
    return IndicatorDerivative(mu, dirs, variation(mu))


def boundary_gaussian_integral(domain: PlanarDomain, weight: Optional[Callable] = None, half_length: float = 12.0) -> float:
    """``∮ rho dH1`` (optionally times ``weight``) by adaptive quadrature along the boundary."""
    def dens(p):
        p = np.asarray(p, dtype=float)
        return math.exp(-0.5 * float(p @ p)) / (2 * math.pi) * (1.0 if weight is None else float(weight(p)))

    if isinstance(domain, Disc):
        c = np.asarray(domain.center)
        r = domain.radius
        f = lambda a: dens(c + r * np.array([math.cos(a), math.sin(a)])) * r
        return integrate.quad(f, 0, 2 * np.pi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    if isinstance(domain, Polygon):
        v = np.asarray(domain.vertices, dtype=float)
        tot = 0.0
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            L = float(np.linalg.norm(b - a))
            tot += integrate.quad(lambda u: dens(a + u * (b - a)) * L, 0, 1, epsabs=1e-14, epsrel=1e-12)[0]
        return tot
    if isinstance(domain, HalfPlane):
        n = np.asarray(domain.normal, dtype=float)
        foot = n * domain.offset / float(n @ n)
        tan = _perp(n / np.linalg.norm(n))
        return integrate.quad(lambda u: dens(foot + u * tan), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    raise TypeError(f"no boundary parametrization for {type(domain).__name__}")


def line_sigma(domain: PlanarDomain, h, s: float) -> FinVectorMeasure:
    """``σ`` on one line: ``+δ`` at the entry point, ``-δ`` at the exit point."""
    h = _unit2(h)
    sec = domain.section(s * _perp(h), h)
    atoms = []
    if sec.nonempty:
        if math.isfinite(sec.t_lower):
            atoms.append(((sec.t_lower,), (1.0,)))
        if math.isfinite(sec.t_upper):
            atoms.append(((sec.t_upper,), (-1.0,)))
    return FinVectorMeasure(atoms=tuple(atoms), dim=1)


# -- extension by zero ---------------------------------------------------------


class UnboundedFunctionError(ValueError):
    pass


@dataclass(eq=False)
class ZeroExtension:
    family: LineFamily
    original: LineFamily
    bound: float

    def added_measure(self, directions=None, n_cells: int = 1024) -> IndicatorDerivative:
        """Atoms the extension gains on the boundary, as a vector measure."""
        dom = self.original.domain
        return lambda_indicator_convex(dom, directions, n_cells, trace=self.original.point_fn)

    def indicator_measure(self, directions=None, n_cells: int = 1024) -> IndicatorDerivative:
        return lambda_indicator_convex(self.original.domain, directions, n_cells)


def extend_by_zero(family: LineFamily, bound: Optional[float] = None, samples: int = 41) -> ZeroExtension:
    """Extend a line family on a convex domain by zero to the whole plane.

    On each line the section endpoints become jumps from 0 to the inner
    one-sided limit and back; vanishing limits add nothing. ``|f|`` is
    checked against ``bound`` on a sample of lines.
    """
    dom = family.domain
    if dom is None:
        raise ValueError("the family is already defined on the whole plane")
    bound = family.bound if bound is None else bound
    s_lo, s_hi = family.s_extent()
    if not (math.isfinite(s_lo) and math.isfinite(s_hi)):
        s_lo, s_hi = -8.0, 8.0
    for s in np.linspace(s_lo, s_hi, samples)[1:-1]:
        lo, hi = family.section(float(s))
        if hi <= lo:
            continue
        a, b = max(lo, -50.0), min(hi, 50.0)
        vals = np.atleast_1d(family.line(float(s))(np.linspace(a, b, 101)[1:-1]))
        if not np.all(np.abs(vals) <= bound + 1e-12):
            raise UnboundedFunctionError(f"|f| exceeds the bound {bound} on line s={s}")

    def line(s):
        fl = family.line(s)
        lo, hi = family.section(s)
        if hi <= lo:
            return BV1D(ac_density=lambda t: 0.0 * np.asarray(t, dtype=float),
                        value_fn=lambda t: 0.0 * np.asarray(t, dtype=float))
        jumps = [j for j in fl.jumps if lo < j.t < hi]
        if math.isfinite(lo):
            v = float(fl(lo))
            if v != 0.0:
                jumps.insert(0, Jump(lo, 0.0, v))
        if math.isfinite(hi):
            v = float(fl.left_limit(hi)) if any(j.t == hi for j in fl.jumps) else float(fl(hi))
            if v != 0.0:
                jumps.append(Jump(hi, v, 0.0))

        def val(t):
            t = np.asarray(t, dtype=float)
            inside = (t >= lo) & (t < hi)
            out = np.where(inside, fl(np.where(inside, t, 0.5 * (max(lo, -1e6) + min(hi, 1e6)))), 0.0)
            return float(out) if out.ndim == 0 else out

        def dens(t):
            t = np.asarray(t, dtype=float)
            inside = (t > lo) & (t < hi)
            out = np.where(inside, fl.ac_density(np.where(inside, t, 0.5 * (max(lo, -1e6) + min(hi, 1e6)))), 0.0)
            return float(out) if out.ndim == 0 else out

        return BV1D(ac_density=dens, jumps=tuple(jumps), value_fn=val, base_value=float(val(0.0)),
                    breakpoints=tuple(fl.breakpoints) + tuple(x for x in (lo, hi) if math.isfinite(x)))

    pf = None
    if family.point_fn is not None:
        def pf(x):
            x = np.asarray(x, dtype=float)
            return np.where(dom.contains(x), family.point_fn(x), 0.0)

    ext = LineFamily(family.h, line, None, pf, bound)
    return ZeroExtension(ext, family, bound)


# -- norms and the closedness harness -------------------------------------------


def bv_norm_1d(f: BV1D, density: LineDensity = STANDARD_NORMAL) -> float:
    """``||f||_{L1(μ)} + ||f β||_{L1(μ)} + Var(Λf)`` on the line."""
    pts = f.quad_points()
    l1 = _quad_line(lambda t: abs(float(f(t))) * float(density.pdf(t)), -math.inf, math.inf, pts)
    lb = _quad_line(lambda t: abs(float(f(t)) * float(density.dpdf(t))), -math.inf, math.inf, pts)
    return l1 + lb + variation(lambda_measure(f, density))


@dataclass(frozen=True)
class MNormRecord:
    l1_part: float
    sup_beta_part: float
    direction_set: tuple
    sup_upper_estimate: float

    @property
    def value(self) -> float:
        return self.l1_part + self.sup_beta_part


def m_norm(f: Callable, domain: PlanarDomain, n_random: int = 8, seed: int = 0, tol: float = 1e-8) -> MNormRecord:
    """``||f||_{L1(U,γ)} + sup_h ||f β_h||_{L1(U,γ)}`` over a direction net.

    The net holds both coordinate axes and ``n_random`` seeded unit vectors;
    its maximum bounds the supremum from below. The upper estimate adds
    ``||f |x|||_{L1} * δ`` where ``δ`` is the largest angular gap of the net,
    because ``|β_h - β_g| <= |x| |h - g|``.
    """
    from .gauss_core import quad_integrate_2d

    rng = np.random.default_rng(seed)
    ang = np.concatenate([[0.0, 0.5 * np.pi], rng.uniform(0, 2 * np.pi, n_random)])
    dirs = tuple((math.cos(a), math.sin(a)) for a in ang)

    def integral(g, region=domain):
        return quad_integrate_2d("gaussian-log-relative", region, g, tol, anchor=np.zeros(2)).value

    def fv(x):
        return float(np.asarray(f(np.asarray(x)[None, :])).reshape(-1)[0])

    def beta_part(h):
        # split along <x, h> = 0 so no quadrature panel straddles the kink of |beta_h|
        g = lambda x: abs(fv(x) * float(x @ h))
        tot = 0.0
        for side in (1.0, -1.0):
            piece = domain.intersect(HalfPlane(tuple(side * h), 0.0))
            lo, hi = piece.x_extent()
            if hi > lo:
                tot += integral(g, piece)
        return tot

    l1 = integral(lambda x: abs(fv(x)))
    parts = [beta_part(np.array(h)) for h in dirs]
    moment = integral(lambda x: abs(fv(x)) * float(np.linalg.norm(x)))
    a = np.sort(np.mod(np.concatenate([ang, ang + np.pi]), 2 * np.pi))
    gap = float(np.max(np.diff(np.append(a, a[0] + 2 * np.pi))))
    delta = 2.0 * math.sin(gap / 4.0)  # chord to the nearest net direction (up to sign)
    best = max(parts)
    return MNormRecord(l1, best, dirs, best + moment * delta)


@dataclass(frozen=True)
class ClosednessReport:
    sequence_norms: tuple
    sup_norm: float
    limit_norm: float
    pairing_errors: tuple
    pointwise_error: float

    @property
    def norm_excess(self) -> float:
        return self.limit_norm - self.sup_norm

    def holds(self, norm_tol: float = 1e-6, pairing_tol: float = 1e-4) -> bool:
        return self.norm_excess <= norm_tol and max(self.pairing_errors, default=0.0) <= pairing_tol


class NotConvergentError(ValueError):
    pass


DEFAULT_TESTS = (
    lambda t: bump(t),
    lambda t: bump((t - 0.75) / 1.25) * (1.0 + t),
    lambda t: bump((t - 1.5) / 1.0),
    lambda t: bump(t / 3.0) * math.sin(2.0 * t + 0.3),
)


def closedness_harness(sequence: Sequence[BV1D], limit: BV1D, tests: Sequence[Callable] = DEFAULT_TESTS,
                       sample_points: Optional[np.ndarray] = None, density: LineDensity = STANDARD_NORMAL,
                       pointwise_tol: float = 1e-6) -> ClosednessReport:
    """Norms along a sequence, the limit norm, and test-function pairings.

    Pointwise convergence is checked at the last term on ``sample_points``
    (default: a grid avoiding the origin). The pairing errors compare
    ``∫ φ dΛf_n`` for the last term against ``∫ φ dΛf``.
    """
    if not sequence:
        raise ValueError("empty sequence")
    if sample_points is None:
        sample_points = np.concatenate([-np.geomspace(1e-3, 5, 40), np.geomspace(1e-3, 5, 40)])
    last = sequence[-1]
    err = float(np.max(np.abs(np.atleast_1d(last(sample_points)) - np.atleast_1d(limit(sample_points)))))
    if err > pointwise_tol:
        raise NotConvergentError(f"last term differs from the limit by {err:.3g} on the sample")
    norms = tuple(bv_norm_1d(f, density) for f in sequence)
    lim = bv_norm_1d(limit, density)
    lam_last, lam_lim = lambda_measure(last, density), lambda_measure(limit, density)
    errs = tuple(abs(float(lam_last.pair(phi)[0]) - float(lam_lim.pair(phi)[0])) for phi in tests)
    return ClosednessReport(norms, max(norms), lim, errs, err)


def shifted_indicator_sequence(kmax: int = 30) -> list:
    """``I_[1/n, ∞)`` for ``n = 2^k``, ``k = 0..kmax``."""
    return [BV1D.indicator(2.0 ** -k, math.inf) for k in range(kmax + 1)]


def mollified_step(n: float) -> BV1D:
    """``Φ(n t)``, the standard normal CDF squeezed by ``n``."""
    pts = tuple(sorted({0.0} | {s * c / n for s in (-1, 1) for c in (1.0, 4.0, 8.0, 16.0, 40.0)}))
    return BV1D(ac_density=lambda t: n * math.exp(-0.5 * (n * t) ** 2) / SQRT_2PI if np.ndim(t) == 0
                else n * np.exp(-0.5 * (n * np.asarray(t)) ** 2) / SQRT_2PI,
                value_fn=lambda t: ndtr(n * np.asarray(t, dtype=float)) if np.ndim(t) else float(ndtr(n * t)),
                base_value=0.5, breakpoints=pts)


def mollified_step_sequence(kmax: int = 20) -> list:
    return [mollified_step(2.0 ** k) for k in range(kmax + 1)]


def open_step() -> BV1D:
    """``I_(0, ∞)``, equal a.e. to the right-continuous ``I_[0, ∞)``."""
    return BV1D.indicator(0.0, math.inf)
