"""Standard Gaussian product measure at finite truncation.

Everything Gaussian is kept on the natural-log scale. The hat functions live
at apex points ``(m**2, 0)`` whose density ``exp(-m**4/2)/(2*pi)`` is below
the smallest double for ``m >= 6``, so integrals are reported relative to a
caller supplied anchor (see :class:`LogWeight`).

Vectorized callables in this package take points as arrays of shape
``(..., d)`` and return arrays of shape ``(...)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

LOG_2PI = math.log(2.0 * math.pi)


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped before reaching the requested tolerance."""


class NonFiniteIntegrandError(ValueError):
    """A Monte Carlo integrand produced NaN or infinity."""

    def __init__(self, sample, value):
        super().__init__(f"non-finite integrand value {value!r} at sample {np.asarray(sample).tolist()}")
        self.sample = np.asarray(sample)
        self.value = value


@dataclass(frozen=True)
class GaussianProductSpace:
    """``block_count`` independent standard Gaussian planes."""

    block_count: int

    def __post_init__(self):
        if int(self.block_count) < 1:
            raise ValueError("block_count must be positive")

    @property
    def total_dim(self) -> int:
        return 2 * self.block_count

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.total_dim:
            raise ValueError(f"expected points of dimension {self.total_dim}, got {x.shape[-1]}")
        return x


@dataclass(frozen=True)
class Direction:
    """A vector of the (truncated) Cameron-Martin space ``l2``."""

    coordinates: tuple

    def __init__(self, coordinates):
        object.__setattr__(self, "coordinates", tuple(float(c) for c in np.ravel(coordinates)))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.coordinates)

    @property
    def h_norm(self) -> float:
        return float(np.linalg.norm(self.coordinates))

    def unit(self) -> "Direction":
        n = self.h_norm
        if n == 0.0:
            raise ValueError("zero direction has no unit normalization")
        return Direction(self.vector / n)


def as_vector(h) -> np.ndarray:
    if isinstance(h, Direction):
        return h.vector
    return np.asarray(h, dtype=float)


@dataclass(frozen=True)
class LogWeight:
    """A nonnegative weight stored as ``exp(log_value + reference_log)``."""

    log_value: float
    reference_log: float = 0.0

    @property
    def relative(self) -> float:
        return math.exp(self.log_value)

    @property
    def value(self) -> float:
        # may underflow to 0.0; that is the point of carrying the anchor
        return math.exp(self.log_value + self.reference_log)

    @property
    def total_log(self) -> float:
        return self.log_value + self.reference_log


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int


def log_density(space: GaussianProductSpace, x) -> np.ndarray:
    x = space.check_point(x)
    return -0.5 * np.sum(x * x, axis=-1) - 0.5 * space.total_dim * LOG_2PI


def log_density_ratio_from_offset(anchor, offset) -> np.ndarray:
    """``log(rho(anchor + offset) / rho(anchor))`` without forming ``|x|**2``.

    Computing ``-(|x|**2 - |a|**2)/2`` directly cancels catastrophically when
    ``|a|`` is large and the offset tiny; the expanded form does not.
    """
    a = np.asarray(anchor, dtype=float)
    d = np.asarray(offset, dtype=float)
    return -(np.sum(d * a, axis=-1) + 0.5 * np.sum(d * d, axis=-1))


def beta(space: GaussianProductSpace, h, x) -> np.ndarray:
    """Logarithmic derivative of the standard Gaussian along ``h``: ``-<x, h>``."""
    x = space.check_point(x)
    hv = as_vector(h)
    if hv.shape[-1] != space.total_dim:
        raise ValueError(f"direction has dimension {hv.shape[-1]}, expected {space.total_dim}")
    return -np.sum(x * hv, axis=-1)


def conditional_density(space: GaussianProductSpace, x, h, t):
    """Density in ``t`` of the normalized restriction of the measure to ``x + t h``.

    Lebesgue measure on the line is the one induced by ``t -> x + t h``, so the
    result is normal with mean ``-<x,h>/|h|**2`` and variance ``1/|h|**2``. For
    unit ``h`` this is the arc-length parametrization.
    """
    x = space.check_point(x)
    hv = as_vector(h)
    hh = float(hv @ hv)
    if hh == 0.0:
        raise ValueError("conditional density needs a nonzero direction")
    mean = -float(x @ hv) / hh
    t = np.asarray(t, dtype=float)
    return np.sqrt(hh) * np.exp(-0.5 * hh * (t - mean) ** 2 - 0.5 * LOG_2PI)


def conditional_log_density_derivative(space: GaussianProductSpace, x, h, t):
    """``d/dt log rho^{x,h}(t)``."""
    x = space.check_point(x)
    hv = as_vector(h)
    hh = float(hv @ hv)
    if hh == 0.0:
        raise ValueError("conditional density needs a nonzero direction")
    mean = -float(x @ hv) / hh
    return -hh * (np.asarray(t, dtype=float) - mean)


def density_ratio_in_bounds(x, y) -> bool:
    """Check ``e**-1 <= rho(x)/rho(y) <= e**1.5`` whenever ``|x-y| <= min(1, 1/|x|)``.

    Vacuously true when the distance hypothesis fails.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = float(np.linalg.norm(x))
    limit = 1.0 if nx <= 1.0 else 1.0 / nx
    if float(np.linalg.norm(x - y)) > limit:
        return True
    log_ratio = 0.5 * (float(y @ y) - float(x @ x))
    return -1.0 <= log_ratio <= 1.5


def density_ratio_bounds_many(x, y) -> np.ndarray:
    """Vectorized :func:`density_ratio_in_bounds` over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = np.linalg.norm(x, axis=-1)
    limit = np.minimum(1.0, 1.0 / np.maximum(nx, 1e-300))
    admissible = np.linalg.norm(x - y, axis=-1) <= limit
    log_ratio = 0.5 * (np.sum(y * y, axis=-1) - np.sum(x * x, axis=-1))
    ok = (log_ratio >= -1.0) & (log_ratio <= 1.5)
    return ~admissible | ok


def mc_integrate(space: GaussianProductSpace, integrand: Callable, restriction: Callable | None,
                 samples: int, seed: int) -> MonteCarloEstimate:
    """Plain Monte Carlo estimate of ``int integrand * 1_restriction d gamma``.

    Samples come from a Philox (counter-based) generator keyed by ``seed``, so
    a given ``(samples, seed)`` pair is bitwise reproducible.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    pts = rng.standard_normal((samples, space.total_dim))
    vals = np.asarray(integrand(pts), dtype=float)
    vals = np.broadcast_to(vals, (samples,)).copy()
    if restriction is not None:
        keep = np.asarray(restriction(pts), dtype=bool)
        vals = np.where(keep, vals, 0.0)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteIntegrandError(pts[i], vals[i])
    mean = float(vals.mean())
    err = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return MonteCarloEstimate(mean=mean, std_error=err, samples=samples, seed=seed)


def _checked_quad(func, lo, hi, tol, points=None, limit=200, epsabs=0.0):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(func, lo, hi, epsabs=epsabs, epsrel=tol, points=points, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val, err


def quad_integrate_2d(weight_mode: str, region, integrand: Callable, tol: float = 1e-6,
                      reference_log: float | None = None, anchor=None, abs_floor: float = 1e-300):
    """Iterated adaptive Gauss-Kronrod quadrature over a bounded convex region.

    The inner integral runs over the exact vertical section of ``region``; the
    outer one is split at every x-coordinate where the section endpoints change
    which boundary piece is active, so both integrands are smooth on each
    piece whenever ``integrand`` is.

    ``weight_mode`` is ``"lebesgue"`` (returns a float) or
    ``"gaussian-log-relative"``: the integrand is multiplied by
    ``rho(x)/exp(reference_log)`` for the standard planar Gaussian density
    ``rho`` and a :class:`LogWeight` anchored at ``reference_log`` is returned.
    Passing ``anchor`` evaluates the weight from the offset ``x - anchor``,
    which stays accurate far from the origin; ``reference_log`` then defaults
    to ``log rho(anchor)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if weight_mode not in ("lebesgue", "gaussian-log-relative"):
        raise ValueError(f"unknown weight_mode {weight_mode!r}")
    lo, hi = region.x_extent()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("quadrature region must be bounded")
    if hi <= lo:
        return 0.0 if weight_mode == "lebesgue" else LogWeight(-math.inf, reference_log or 0.0)
    breaks = sorted(b for b in region.critical_x() if lo < b < hi)

    if weight_mode == "lebesgue":
        def point_value(x1, x2):
            return float(integrand(np.array([x1, x2])))
    elif anchor is not None:
        a1, a2 = (float(v) for v in anchor)
        shift = -0.5 * (a1 * a1 + a2 * a2) - LOG_2PI
        if reference_log is None:
            reference_log = shift
        shift -= reference_log

        def point_value(x1, x2):
            d1, d2 = x1 - a1, x2 - a2
            w = shift - (a1 * d1 + a2 * d2 + 0.5 * (d1 * d1 + d2 * d2))
            return float(integrand(np.array([x1, x2]))) * math.exp(w)
    else:
        if reference_log is None:
            reference_log = 0.0

        def point_value(x1, x2):
            w = -0.5 * (x1 * x1 + x2 * x2) - LOG_2PI - reference_log
            return float(integrand(np.array([x1, x2]))) * math.exp(w)

    inner_tol = tol / 4.0
    e2 = np.array([0.0, 1.0])

    def inner(x1):
        sec = region.section(np.array([x1, 0.0]), e2)
        if not sec.nonempty:
            return 0.0
        val, _ = _checked_quad(lambda x2: point_value(x1, x2), sec.t_lower, sec.t_upper, inner_tol)
        return val

    edges = [lo, *breaks, hi]
    pieces = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    # coarse scale so that sliver pieces next to tangency points only need
    # absolute accuracy relative to the whole integral
    nodes, weights = np.polynomial.legendre.leggauss(8)
    scale = 0.0
    for a, b in pieces:
        half = 0.5 * (b - a)
        scale += abs(sum(w * inner(0.5 * (a + b) + half * z) for z, w in zip(nodes, weights)) * half)
    epsabs = 0.25 * tol * scale / len(pieces) if pieces else 0.0
    total = 0.0
    total_err = 0.0
    for a, b in pieces:
        val, err = _checked_quad(inner, a, b, tol / 2.0, epsabs=epsabs)
        total += val
        total_err += err
    if total_err > tol * abs(total) + abs_floor:
        raise QuadratureError(f"outer error estimate {total_err:.3e} exceeds tolerance for value {total:.6e}")
    if weight_mode == "lebesgue":
        return total
    if total < 0:
        raise ValueError("gaussian-log-relative mode needs a nonnegative integrand")
    return LogWeight(math.log(total) if total > 0 else -math.inf, reference_log)
