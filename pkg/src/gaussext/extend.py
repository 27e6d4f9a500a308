"""Extension operators and extension-cost certificates.

Three constructions live here:

* reflection across a hyperplane ``{<x, h> = 0}``, which doubles every
  ``L^p(gamma)`` integral of a function given on one side;
* the McShane inf-convolution, which extends a ``C``-Lipschitz function from
  a convex planar set with the same constant;
* a weighted Dirichlet-energy minimization around the apex of ``K_m`` that
  bounds from below what any extension of the hat function ``f_m`` must pay
  on the disc ``U`` of radius ``2 m^-2`` about the apex.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .coarea import certified_gradient_l1_bound, disc_weight_floor
from .domains import HalfPlane, PlanarDomain, Polygon
from .gauss_core import QuadratureError, as_vector, quad_integrate_2d
from .norms import fit_slope, hat_norm

# -- reflection -------------------------------------------------------------


def _unit(h) -> np.ndarray:
    h = as_vector(h)
    n = np.linalg.norm(h)
    if not math.isclose(n, 1.0, rel_tol=1e-12, abs_tol=1e-12):
        raise ValueError("reflection direction must have unit length")
    return h


def reflect_points(h, x) -> np.ndarray:
    """Map each point to the closed side ``{<x, h> >= 0}``."""
    h = _unit(h)
    x = np.asarray(x, dtype=float)
    s = x @ h
    return x - 2.0 * np.minimum(s, 0.0)[..., None] * h


def reflect_halfspace(f: Callable, h, x):
    """``f(x)`` where ``<x, h> >= 0`` and ``f(x - 2<x, h> h)`` elsewhere.

    ``f`` only needs to be defined on the closed half-space; points of the
    hyperplane take the value of the positive side.
    """
    return f(reflect_points(h, x))


def reflect_gradient(grad: Callable, h, x):
    """Gradient of the reflected function: ``R grad f(R x)`` on the negative side."""
    h = _unit(h)
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad(reflect_points(h, x)), dtype=float)
    neg = (x @ h) < 0
    flipped = g - 2.0 * (g @ h)[..., None] * h
    return np.where(neg[..., None], flipped, g)


_BOX = 12.0  # standard Gaussian mass outside [-12, 12]^2 is below 1e-32


def _gaussian_integral_halfplane(integrand: Callable, h, side: int, tol: float) -> float:
    box = Polygon(((-_BOX, -_BOX), (_BOX, -_BOX), (_BOX, _BOX), (-_BOX, _BOX)))
    region = box.intersect(HalfPlane(tuple(side * as_vector(h)), 0.0))
    # |f|^p has a kink on the zero set of a sign-changing f; adaptive quadrature
    # then reports roundoff at tight tolerances, so relax in steps up to 1e-6.
    while True:
        try:
            return quad_integrate_2d("gaussian-log-relative", region, integrand, tol, anchor=np.zeros(2)).value
        except QuadratureError:
            if tol >= 1e-6:
                raise
            tol = min(tol * 100.0, 1e-6)


@dataclass(frozen=True)
class ReflectionCheck:
    p: float
    norm_extended: float
    norm_half: float
    grad_norm_extended: Optional[float]
    grad_norm_half: Optional[float]

    @property
    def value_defect(self) -> float:
        return abs(self.norm_extended / (2.0 ** (1.0 / self.p) * self.norm_half) - 1.0)

    @property
    def grad_defect(self) -> float:
        if self.grad_norm_half in (None, 0.0):
            return 0.0
        return abs(self.grad_norm_extended / (2.0 ** (1.0 / self.p) * self.grad_norm_half) - 1.0)


def reflection_norm_check(f: Callable, h, p: float, grad: Optional[Callable] = None,
                          tol: float = 1e-9) -> ReflectionCheck:
    """Gaussian ``L^p`` norms of ``f`` on ``{<x,h> > 0}`` and of its reflection on the plane.

    The plane integral is assembled from the two open half-planes, so the
    kink of the reflected function along the hyperplane never sits inside
    a quadrature panel.
    """
    def power(func):
        return lambda x: abs(float(np.asarray(func(np.asarray(x)[None, :])).reshape(-1)[0])) ** p

    def grad_power(func):
        return lambda x: float(np.linalg.norm(np.asarray(func(np.asarray(x)[None, :])).reshape(-1))) ** p

    ext = lambda x: reflect_halfspace(f, h, x)
    half = _gaussian_integral_halfplane(power(f), h, +1, tol)
    full = _gaussian_integral_halfplane(power(ext), h, +1, tol)
    full += _gaussian_integral_halfplane(power(ext), h, -1, tol)
    gh = gf = None
    if grad is not None:
        gext = lambda x: reflect_gradient(grad, h, x)
        gh = _gaussian_integral_halfplane(grad_power(grad), h, +1, tol) ** (1.0 / p)
        gf = (_gaussian_integral_halfplane(grad_power(gext), h, +1, tol)
              + _gaussian_integral_halfplane(grad_power(gext), h, -1, tol)) ** (1.0 / p)
    return ReflectionCheck(p, full ** (1.0 / p), half ** (1.0 / p), gf, gh)


# -- McShane extension -----------------------------------------------------


class LipschitzViolation(ValueError):
    pass


@dataclass(eq=False)
class McShaneExtension:
    """``g(x) = min(f(x) if x in V, min_y f(y) + C|x - y|)`` over a grid of ``V``.

    ``f`` is vectorized on ``(n, 2)`` arrays. The candidate ``y = x`` makes
    the restriction to ``V`` exact; away from ``V`` the grid spacing enters
    the error as at most ``C * spacing / sqrt(2)``.
    """

    f: Callable
    domain: PlanarDomain
    lipschitz: float
    spacing: float = 0.02
    check_pairs: int = 2000
    seed: int = 0
    nodes: np.ndarray = field(init=False, repr=False)
    node_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        lo, hi = self.domain.x_extent()
        ylo, yhi = self._y_extent()
        if not all(map(math.isfinite, (lo, hi, ylo, yhi))):
            raise ValueError("McShane grid needs a bounded domain")
        xs = np.arange(lo, hi + self.spacing, self.spacing)
        ys = np.arange(ylo, yhi + self.spacing, self.spacing)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        pts = pts[np.asarray(self.domain.contains(pts), dtype=bool)]
        if pts.shape[0] == 0:
            raise ValueError("grid spacing too coarse for the domain")
        self.nodes = pts
        self.node_values = np.asarray(self.f(pts), dtype=float)
        self._spot_check()

    def _y_extent(self):
        # y-range from vertical sections across the x-range
        lo, hi = self.domain.x_extent()
        xs = np.linspace(lo, hi, 65)[1:-1]
        ymin, ymax = math.inf, -math.inf
        for x1 in xs:
            sec = self.domain.section(np.array([x1, 0.0]), np.array([0.0, 1.0]))
            if sec.nonempty:
                ymin = min(ymin, sec.t_lower)
                ymax = max(ymax, sec.t_upper)
        return ymin, ymax

    def _spot_check(self):
        rng = np.random.default_rng(self.seed)
        n = self.nodes.shape[0]
        i = rng.integers(0, n, self.check_pairs)
        j = rng.integers(0, n, self.check_pairs)
        keep = i != j
        d = np.linalg.norm(self.nodes[i[keep]] - self.nodes[j[keep]], axis=1)
        df = np.abs(self.node_values[i[keep]] - self.node_values[j[keep]])
        bad = df > self.lipschitz * d * (1.0 + 1e-9) + 1e-12
        if bad.any():
            k = int(np.argmax(df - self.lipschitz * d))
            raise LipschitzViolation(
                f"f is not {self.lipschitz}-Lipschitz on the domain: quotient {df[k] / d[k]:.6g} on a sampled pair")

    def __call__(self, x, chunk: int = 512):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            xx = x[s:s + chunk]
            d = np.linalg.norm(xx[:, None, :] - self.nodes[None, :, :], axis=2)
            out[s:s + chunk] = np.min(self.node_values[None, :] + self.lipschitz * d, axis=1)
        inside = np.asarray(self.domain.contains(x), dtype=bool)
        if inside.any():
            out[inside] = np.minimum(out[inside], np.asarray(self.f(x[inside]), dtype=float))
        return out


def mcshane_extend(f: Callable, domain: PlanarDomain, C: float, x, spacing: float = 0.02):
    return McShaneExtension(f, domain, C, spacing)(x)


# -- variational extension cost (p = 2) --------------------------------------


def rescaled_weight(u, m: int):
    """``rho(a + u/m^2) / rho(a)`` in apex-rescaled coordinates ``u = m^2 (x - a)``."""
    u = np.asarray(u, dtype=float)
    return np.exp(-u[..., 0] - 0.5 * np.sum(u * u, axis=-1) / float(m) ** 4)


def rescaled_hat(u):
    """``f_m`` in rescaled coordinates: ``max(1 - |u|, 0)`` for every ``m``."""
    return np.maximum(1.0 - np.linalg.norm(np.asarray(u, dtype=float), axis=-1), 0.0)


def rescaled_wedge(u, m: int):
    """``K_m`` inside ``U`` in rescaled coordinates: ``|u2| < -u1/m``.

    This is exact on ``U``: the two rhomb edges through the apex become the
    lines ``|u2| = -u1/m`` and the other vertices are far outside ``U``.
    """
    u = np.asarray(u, dtype=float)
    return np.abs(u[..., 1]) < -u[..., 0] / m


def extension_candidates(m: int) -> dict:
    """Extensions of ``f_m`` off ``K_m ∩ U`` in rescaled coordinates.

    ``zero`` jumps to 0 across the wedge edges, ``radial`` keeps the full
    cone ``max(1 - |u|, 0)``, and ``tube`` continues each level set as a
    strip towards ``+u1`` until it leaves ``U``.
    """
    def zero(u):
        return np.where(rescaled_wedge(u, m), rescaled_hat(u), 0.0)

    def tube(u):
        u = np.asarray(u, dtype=float)
        return np.where(u[..., 0] <= 0.0, rescaled_hat(u), np.maximum(1.0 - np.abs(u[..., 1]), 0.0))

    return {"zero": zero, "radial": rescaled_hat, "tube": tube}


class SolverError(RuntimeError):
    pass


@dataclass(eq=False)
class DiscGrid:
    """Nodes of a uniform grid on ``[-R, R]^2`` lying in the open disc ``|u| < R``."""

    resolution: int
    radius: float = 2.0

    def __post_init__(self):
        n = self.resolution + 1
        self.h = 2.0 * self.radius / self.resolution
        c = -self.radius + self.h * np.arange(n)
        X, Y = np.meshgrid(c, c, indexing="ij")
        inside = X * X + Y * Y < self.radius ** 2
        self.index = np.full((n, n), -1, dtype=np.int64)
        self.index[inside] = np.arange(int(inside.sum()))
        self.points = np.stack([X[inside], Y[inside]], axis=1)
        self.size = self.points.shape[0]
        edges = []
        for dx, dy in ((1, 0), (0, 1)):
            a = self.index[: n - dx, : n - dy]
            b = self.index[dx:, dy:]
            ok = (a >= 0) & (b >= 0)
            edges.append(np.stack([a[ok], b[ok]], axis=1))
        self.edges = np.concatenate(edges)
        mid = 0.5 * (self.points[self.edges[:, 0]] + self.points[self.edges[:, 1]])
        self.edge_midpoints = mid

    def spec(self) -> dict:
        return {"resolution": self.resolution, "radius": self.radius, "spacing": self.h,
                "nodes": int(self.size), "edges": int(self.edges.shape[0])}


@dataclass(eq=False)
class WeightedEnergy:
    """``Q(g) = sum_edges w (dg)^2 + m^-4 h^2 sum_nodes w g^2`` on a :class:`DiscGrid`.

    The edge sum is the five-point discretization of ``int |grad_u g|^2 w du``
    and the node sum that of ``m^-4 int g^2 w du``; together they equal
    ``int_U (g^2 + |grad g|^2) rho / rho(a) dx`` in physical units.
    """

    grid: DiscGrid
    m: int

    def __post_init__(self):
        g = self.grid
        self.edge_w = rescaled_weight(g.edge_midpoints, self.m)
        self.node_w = rescaled_weight(g.points, self.m) * g.h ** 2 / float(self.m) ** 4
        n = g.size
        i, j = g.edges[:, 0], g.edges[:, 1]
        w = self.edge_w
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([w, w, -w, -w])
        L = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        self.matrix = (L + sp.diags(self.node_w)).tocsr()

    def __call__(self, values) -> float:
        v = np.asarray(values, dtype=float)
        d = v[self.grid.edges[:, 0]] - v[self.grid.edges[:, 1]]
        return float(np.dot(self.edge_w, d * d) + np.dot(self.node_w, v * v))

    def gradient_part(self, values) -> float:
        v = np.asarray(values, dtype=float)
        d = v[self.grid.edges[:, 0]] - v[self.grid.edges[:, 1]]
        return float(np.dot(self.edge_w, d * d))


@dataclass(frozen=True)
class VariationalSolution:
    values: np.ndarray
    fixed: np.ndarray
    energy: float
    iterations: int
    residual: float
    seconds: float


def solve_min_energy(energy: WeightedEnergy, fixed: np.ndarray, fixed_values: np.ndarray, tol: float = 1e-8,
                     maxiter: Optional[int] = None) -> VariationalSolution:
    """Minimize ``Q`` over the free nodes with the fixed nodes held at ``fixed_values``.

    The normal equations ``A_ff g_f = -A_fc g_c`` are symmetric positive
    definite; they are solved by conjugate gradients with a Jacobi
    preconditioner to relative residual ``tol``.
    """
    t0 = time.perf_counter()
    A = energy.matrix
    n = A.shape[0]
    fixed = np.asarray(fixed, dtype=bool)
    free = ~fixed
    full = np.zeros(n)
    full[fixed] = fixed_values
    iters = 0
    resid = 0.0
    if free.any():
        A_ff = A[free][:, free].tocsr()
        rhs = -(A[free][:, fixed] @ fixed_values)
        diag = A_ff.diagonal()
        M = LinearOperator(A_ff.shape, matvec=lambda r: r / diag, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x0 = np.zeros(int(free.sum()))
        maxiter = maxiter or 20 * int(math.sqrt(n)) + 2000
        sol, info = cg(A_ff, rhs, x0=x0, rtol=tol, atol=0.0, M=M, maxiter=maxiter, callback=cb)
        iters = count[0]
        rn = np.linalg.norm(rhs)
        resid = float(np.linalg.norm(A_ff @ sol - rhs) / rn) if rn > 0 else 0.0
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge in {maxiter} iterations "
                              f"(relative residual {resid:.3g})")
        full[free] = sol
    return VariationalSolution(full, fixed, energy(full), iters, resid, time.perf_counter() - t0)


@dataclass(frozen=True)
class ExtensionCostCertificate:
    """Lower bound on the cost of extending ``f_m`` across the disc ``U``.

    All norms are relative to ``rho(a)^(1/p)``. ``local_min_norm`` bounds
    ``||G||_{p,1,U}`` from below for every extension ``G`` of ``f_m``;
    ``ratio`` divides it by ``||f_m||_{p,1,K_m}``.
    """

    m: int
    p: float
    local_min_norm: float
    base_norm: float
    ratio: float
    grid_spec: dict
    discretization_error: float = math.nan
    method: str = "variational"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExtensionCostCertificate":
        return cls(**json.loads(text))


def _fixed_data(grid: DiscGrid, m: int):
    fixed = rescaled_wedge(grid.points, m)
    return fixed, rescaled_hat(grid.points[fixed])


def min_energy_extension(m: int, resolution: int, tol: float = 1e-8):
    """Grid minimizer of the weighted ``W^{2,1}(U)`` energy with ``f_m`` imposed on ``K_m``."""
    grid = DiscGrid(resolution)
    energy = WeightedEnergy(grid, m)
    fixed, vals = _fixed_data(grid, m)
    if not fixed.any():
        raise SolverError("no grid node lies inside the rhomb; raise the resolution")
    return grid, energy, solve_min_energy(energy, fixed, vals, tol)


def min_norm_extension_p2(m: int, grid_resolution: int = 1024, tol: float = 1e-8,
                          estimate_error: bool = True, base_tol: float = 1e-9) -> ExtensionCostCertificate:
    """Certificate for ``p = 2`` from the minimal weighted energy on ``U``.

    ``sqrt(Q_min)`` bounds ``(||G||_2^2 + ||grad G||_2^2)^(1/2)`` and hence
    ``||G||_{2,1,U} / rho(a)^(1/2)`` for every extension ``G``. The
    discretization error is estimated as the energy change against a solve
    at half the resolution, propagated to the norm.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    grid, energy, sol = min_energy_extension(m, grid_resolution, tol)
    local = math.sqrt(sol.energy)
    err = math.nan
    if estimate_error:
        _, _, coarse = min_energy_extension(m, grid_resolution // 2, tol)
        err = abs(local - math.sqrt(coarse.energy))
    base = hat_norm(m, 2.0, tol=base_tol).relative
    spec = grid.spec()
    # wall time stays out of the certificate so that reruns are byte-identical
    spec.update({"iterations": sol.iterations, "relative_residual": sol.residual, "tol": tol,
                 "fixed_nodes": int(sol.fixed.sum())})
    return ExtensionCostCertificate(m=m, p=2.0, local_min_norm=local, base_norm=base, ratio=local / base,
                                    grid_spec=spec, discretization_error=err)


def coarea_certificate(m: int, base_tol: float = 1e-9) -> ExtensionCostCertificate:
    """Certificate for ``p = 1`` from the separation-perimeter bound.

    ``||G||_{1,1,U} / rho(a) >= int_U |grad G| rho/rho(a) dx >= w_min * B_m``
    where ``B_m`` integrates the certified level-set perimeter over ``t``
    and ``w_min`` is the smallest weight ratio on ``U``.
    """
    local = disc_weight_floor(m) * certified_gradient_l1_bound(m)
    base = hat_norm(m, 1.0, tol=base_tol).relative
    return ExtensionCostCertificate(m=m, p=1.0, local_min_norm=local, base_norm=base, ratio=local / base,
                                    grid_spec={"analytic": True}, discretization_error=0.0,
                                    method="coarea-lower-bound")


@dataclass(frozen=True)
class SweepResult:
    p: float
    certificates: tuple
    slope: float

    @property
    def ratios(self):
        return [c.ratio for c in self.certificates]

    def monotone(self) -> bool:
        r = self.ratios
        return all(b >= a for a, b in zip(r, r[1:]))


def extension_ratio_sweep(m_values: Sequence[int], p: float, method: Optional[str] = None,
                          resolution: int = 1024, tol: float = 1e-8, estimate_error: bool = False) -> SweepResult:
    """Certified extension-cost ratios over ``m`` and their fitted exponent."""
    method = method or ("variational" if p == 2 else "coarea-lower-bound")
    if method == "variational":
        if p != 2:
            raise ValueError("the variational certificate is only available for p = 2")
        certs = [min_norm_extension_p2(m, resolution, tol, estimate_error) for m in m_values]
    elif method == "coarea-lower-bound":
        if p != 1:
            raise ValueError("the coarea certificate is only available for p = 1")
        certs = [coarea_certificate(m) for m in m_values]
    else:
        raise ValueError(f"unknown method {method!r}")
    slope = fit_slope(list(m_values), [c.ratio for c in certs]) if len(certs) >= 2 else math.nan
    return SweepResult(float(p), tuple(certs), slope)


COST_CSV_COLUMNS = ("m", "p", "method", "local_min_norm", "base_norm", "ratio", "discretization_error",
                    "fitted_slope")


def write_cost_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COST_CSV_COLUMNS)
        for c in result.certificates:
            w.writerow([c.m, repr(c.p), c.method, repr(c.local_min_norm), repr(c.base_norm), repr(c.ratio),
                        repr(c.discretization_error), repr(result.slope)])
