"""Hat functions ``f_m`` and weighted Sobolev norms on planar domains."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .domains import Disc, PlanarDomain, Rhomb
from .gauss_core import LOG_2PI, LogWeight, quad_integrate_2d


@dataclass(frozen=True)
class HatFunction:
    """``f_m(x) = max(1 - m**2 |x - a|, 0)`` with apex ``a = (m**2, 0)``."""

    m: int

    def __post_init__(self):
        if int(self.m) < 2:
            raise ValueError("hat functions need m >= 2")

    @property
    def apex(self) -> np.ndarray:
        return np.array([float(self.m) ** 2, 0.0])

    @property
    def support_radius(self) -> float:
        return float(self.m) ** -2

    @property
    def apex_log_density(self) -> float:
        """``log rho(a)`` for the standard planar Gaussian."""
        return -0.5 * float(self.m) ** 4 - LOG_2PI

    def support(self) -> Disc:
        return Disc(tuple(self.apex), self.support_radius)

    def __call__(self, x):
        return eval_hat(self, x)

    def gradient(self, x):
        return grad_hat(self, x)


def eval_hat(f: HatFunction, x):
    d = np.asarray(x, dtype=float) - f.apex
    return np.maximum(1.0 - f.m ** 2 * np.linalg.norm(d, axis=-1), 0.0)


def grad_hat(f: HatFunction, x, return_flag: bool = False):
    """Gradient ``-m**2 (x-a)/|x-a|`` on the closed support disc, zero outside.

    On the support circle the inward radial value is returned. At the apex the
    gradient does not exist; the zero vector is returned there and, with
    ``return_flag``, a boolean mask marks those points.
    """
    d = np.asarray(x, dtype=float) - f.apex
    r = np.linalg.norm(d, axis=-1)
    at_apex = r == 0.0
    on_support = (r <= f.support_radius) & ~at_apex
    safe = np.where(at_apex, 1.0, r)
    g = np.where(on_support[..., None], -(f.m ** 2) * d / safe[..., None], 0.0)
    if return_flag:
        return g, at_apex
    return g


@dataclass(frozen=True)
class SobolevNormValue:
    """``||f||_{p,1,V} = lp_part + grad_part``, each part on the log scale."""

    p: float
    lp_part: LogWeight
    grad_part: LogWeight
    domain_id: str

    @property
    def reference_log(self) -> float:
        return self.lp_part.reference_log

    @property
    def relative(self) -> float:
        """Norm divided by ``exp(reference_log)``; both parts share the anchor."""
        return self.lp_part.relative + self.grad_part.relative

    @property
    def log_norm(self) -> float:
        return math.log(self.relative) + self.reference_log if self.relative > 0 else -math.inf

    @property
    def grad_fraction(self) -> float:
        total = self.relative
        return self.grad_part.relative / total if total > 0 else math.nan


def sobolev_norm(f: Callable, domain: PlanarDomain, p: float, weight_mode: str = "gaussian-log-relative",
                 tol: float = 1e-8, gradient: Callable | None = None, support: PlanarDomain | None = None,
                 anchor=None) -> SobolevNormValue:
    """``(int_V |f|^p)^{1/p} + (int_V |grad f|^p)^{1/p}`` by 2-D quadrature.

    For a :class:`HatFunction` the gradient, the support disc and the anchor
    (the apex) are filled in automatically. In gaussian mode both parts are
    reported relative to ``rho(anchor)**(1/p)``; in lebesgue mode the anchor
    is 1.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(f, HatFunction):
        gradient = gradient or f.gradient
        support = support or f.support()
        anchor = f.apex if anchor is None else anchor
    if gradient is None:
        raise ValueError("a gradient oracle is required")
    region = domain if support is None else domain.intersect(support)

    def lp_integrand(x):
        return abs(float(f(x))) ** p

    def grad_integrand(x):
        return float(np.linalg.norm(gradient(x))) ** p

    parts = []
    for integrand in (lp_integrand, grad_integrand):
        if weight_mode == "lebesgue":
            val = quad_integrate_2d("lebesgue", region, integrand, tol)
            parts.append(LogWeight(math.log(val) / p if val > 0 else -math.inf, 0.0))
        else:
            anchor_pt = np.zeros(2) if anchor is None else np.asarray(anchor, dtype=float)
            w = quad_integrate_2d("gaussian-log-relative", region, integrand, tol, anchor=anchor_pt)
            parts.append(LogWeight(w.log_value / p, w.reference_log / p))
    return SobolevNormValue(p=p, lp_part=parts[0], grad_part=parts[1], domain_id=domain.to_json())


def hat_norm(m: int, p: float, weight_mode: str = "gaussian-log-relative", tol: float = 1e-8) -> SobolevNormValue:
    """``||f_m||_{p,1,K_m}``."""
    return sobolev_norm(HatFunction(m), Rhomb(m), p, weight_mode, tol)


def sector_gradient_l1(m: int) -> float:
    """Closed form ``int_{K_m} |grad f_m| dx = m**2 * arctan(1/m) * m**-4``."""
    return math.atan(1.0 / m) / m ** 2


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class ScalingFit:
    p: float
    m_values: tuple
    norms: tuple
    slope: float

    @property
    def expected(self) -> float:
        return 2.0 - 5.0 / self.p


def scaling_exponent(p: float, m_values: Sequence[int], tol: float = 1e-8,
                     family: Callable[[int], HatFunction] = HatFunction) -> ScalingFit:
    """Fit the exponent of ``m -> rho(a)**(-1/p) ||f_m||_{p,1,K_m}``."""
    m_values = tuple(int(m) for m in m_values)
    if len(m_values) < 3:
        raise ValueError("need at least three values of m")
    norms = tuple(sobolev_norm(family(m), Rhomb(m), p, "gaussian-log-relative", tol) for m in m_values)
    slope = fit_slope(m_values, [n.relative for n in norms])
    return ScalingFit(p=p, m_values=m_values, norms=norms, slope=slope)


NORM_CSV_COLUMNS = ("m", "p", "lp_part_log", "grad_part_log", "relative_norm", "fitted_slope")


def write_scaling_csv(fits: Sequence[ScalingFit], path) -> None:
    """One row per ``(m, p)``; the ``*_log`` columns are natural logs relative to ``rho(a)**(1/p)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NORM_CSV_COLUMNS)
        for fit in fits:
            for m, n in zip(fit.m_values, fit.norms):
                w.writerow([m, repr(float(fit.p)), repr(n.lp_part.log_value), repr(n.grad_part.log_value),
                            repr(n.relative), repr(fit.slope)])
