"""The product construction: ``f(x) = Σ_k C_k f_{m_k}(x_{m_k})`` on ``prod K_m``.

Block ``m`` of a point is a planar coordinate pair living in the rhomb
``K_m``. The schedule supports the blocks ``m_k = 2^k``; all other blocks
contribute nothing to ``f``. Every block quantity is kept on the natural-log
scale with the block anchor ``log rho((m^2, 0))``, which differs by thousands
of nats between neighbouring blocks.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .domains import ProductDomain
from .gauss_core import MonteCarloEstimate
from .norms import HatFunction, eval_hat, grad_hat, hat_norm

BASEL = math.pi ** 2 / 6.0
DAMPINGS = ("geometric", "inverse-square")


def damping_weight(k: int, p: float, damping: str = "geometric") -> float:
    """Target value of ``C_k ||f_{m_k}||_{p,1,K_{m_k}}``.

    ``inverse-square`` uses ``1/k^2``. ``geometric`` uses
    ``c_p 2^{-k/(2p)}`` with ``c_p = (π²/6)(2^{1/(2p)} - 1)``, so the weights
    also sum to ``π²/6`` over ``k >= 1``. Since the certified extension ratio
    grows like ``m^{1/p} = 2^{k/p}``, the geometric weights leave a growth
    factor ``2^{k/(2p)}`` in the divergence column from the first blocks on;
    with ``1/k^2`` that factor is ``2^{k/p}/k^2``, which only starts growing
    near ``k = 2p / ln 2``.
    """
    if damping == "inverse-square":
        return 1.0 / k ** 2
    if damping == "geometric":
        r = 2.0 ** (-1.0 / (2.0 * p))
        return BASEL * (1.0 / r - 1.0) * r ** k
    raise ValueError(f"unknown damping {damping!r}")


def damping_tail(kmax: int, p: float, damping: str = "geometric") -> float:
    """``Σ_{k > kmax}`` of the damping weights, in closed form."""
    if damping == "inverse-square":
        return BASEL - sum(1.0 / k ** 2 for k in range(1, kmax + 1))
    r = 2.0 ** (-1.0 / (2.0 * p))
    return BASEL * (1.0 / r - 1.0) * r ** (kmax + 1) / (1.0 - r)


@dataclass(frozen=True)
class CoefficientSchedule:
    """Coefficients ``C_{m_k}`` on the support ``m_k = 2^k``, ``k = 1..k_max``.

    ``log_C[k]`` is the natural log of ``C_{m_k}``; ``log_norm[k]`` and
    ``log_grad[k]`` are the natural logs of ``||f_{m_k}||_{p,1,K_{m_k}}`` and
    ``||grad f_{m_k}||_{p,K_{m_k}}`` (absolute, anchors included).
    """

    p: float
    ks: tuple
    log_C: Mapping[int, float]
    log_norm: Mapping[int, float]
    log_grad: Mapping[int, float]
    damping: str = "geometric"

    @property
    def support(self) -> tuple:
        return tuple(2 ** k for k in self.ks)

    def coefficient_log(self, m: int) -> float:
        k = int(round(math.log2(m)))
        if 2 ** k != m or k not in self.log_C:
            return -math.inf
        return self.log_C[k]

    def bounded_terms_log(self) -> np.ndarray:
        return np.array([self.log_C[k] + self.log_norm[k] for k in self.ks])

    def bounded_partial_sums(self) -> np.ndarray:
        """Partial sums of ``Σ C_k ||f_{m_k}||``, accumulated with log-sum-exp."""
        t = self.bounded_terms_log()
        return np.array([math.exp(logsumexp(t[: i + 1])) for i in range(t.size)])

    def gradient_series_log(self) -> np.ndarray:
        """``log(C_k m_k^{1/p} ||grad f_{m_k}||_p)``, the sequence that must be unbounded."""
        return np.array([self.log_C[k] + math.log(2 ** k) / self.p + self.log_grad[k] for k in self.ks])

    def tail_bound(self) -> float:
        return damping_tail(max(self.ks), self.p, self.damping)

    def bounded_invariant(self, tol: float = 1e-3) -> bool:
        sums = self.bounded_partial_sums()
        return bool(np.all(np.diff(sums) >= 0) and sums[-1] <= BASEL + tol
                    and sums[-1] + self.tail_bound() <= BASEL + tol)

    def unbounded_invariant(self, from_k: int = 2) -> bool:
        g = [v for k, v in zip(self.ks, self.gradient_series_log()) if k >= from_k]
        return all(b > a for a, b in zip(g, g[1:]))


def choose_coefficients(p: float, k_max: int, damping: str = "geometric", tol: float = 1e-9) -> CoefficientSchedule:
    """``C_{m_k} = w_k / ||f_{m_k}||_{p,1,K_{m_k}}`` with damping weights ``w_k``.

    The norms come from the quadrature engine in log scale, so the
    bounded series is ``Σ w_k`` up to quadrature error.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    if damping not in DAMPINGS:
        raise ValueError(f"damping must be one of {DAMPINGS}")
    ks = tuple(range(1, k_max + 1))
    log_C, log_norm, log_grad = {}, {}, {}
    for k in ks:
        nv = hat_norm(2 ** k, p, tol=tol)
        log_norm[k] = nv.log_norm
        log_grad[k] = nv.grad_part.total_log
        log_C[k] = math.log(damping_weight(k, p, damping)) - nv.log_norm
    return CoefficientSchedule(float(p), ks, log_C, log_norm, log_grad, damping)


@dataclass(frozen=True)
class ProductEvaluation:
    in_K: bool
    log_f_value: float
    f_value: float
    grad_block_norms_log: tuple

    @property
    def grad_block_norms(self) -> tuple:
        return tuple(math.exp(v) if v < 700 else math.inf for v in self.grad_block_norms_log)


def product_membership_and_f(schedule: CoefficientSchedule, x, truncation: Optional[int] = None,
                             l_norm_bound: Optional[float] = None) -> ProductEvaluation:
    """Membership in ``prod_{m<=M} K_m``, the value of ``f`` and per-block gradient norms.

    ``x`` holds the blocks ``m = 2..M`` as an ``(M-1, 2)`` array. Values are
    returned on the log scale; ``f_value`` is the plain float when it fits.
    """
    M = truncation or max(schedule.support)
    if M < max(schedule.support):
        raise ValueError("truncation must cover every supported block")
    dom = ProductDomain(M, l_norm_bound)
    b = dom.blocks(x)
    in_K = bool(dom.contains(b))
    terms, grads = [], []
    for i, m in enumerate(dom.block_indices):
        lc = schedule.coefficient_log(m)
        if lc == -math.inf:
            grads.append(-math.inf)
            continue
        hf = HatFunction(m)
        v = float(eval_hat(hf, b[i]))
        if v > 0:
            terms.append(lc + math.log(v))
        gn = float(np.linalg.norm(grad_hat(hf, b[i])))
        grads.append(lc + math.log(gn) if gn > 0 else -math.inf)
    lf = float(logsumexp(terms)) if terms else -math.inf
    fv = math.exp(lf) if lf < 700 else math.inf
    return ProductEvaluation(in_K, lf, fv, tuple(grads))


def product_mass_mc(first_block: int, truncation: int, samples: int, seed: int, streams: int = 4,
                    l_norm_bound: Optional[float] = None) -> MonteCarloEstimate:
    """Monte Carlo estimate of ``γ(prod_{m=first..M} K_m)``.

    Each of ``streams`` workers draws from its own Philox generator spawned
    from the master seed, so the estimate does not depend on scheduling.
    """
    dom = ProductDomain(truncation, l_norm_bound, first_block)
    children = np.random.SeedSequence(seed).spawn(streams)
    sizes = [samples // streams + (1 if i < samples % streams else 0) for i in range(streams)]
    hits = []
    for child, n in zip(children, sizes):
        rng = np.random.Generator(np.random.Philox(child))
        pts = rng.standard_normal((n, 2 * dom.block_count))
        hits.append(np.asarray(dom.contains(pts), dtype=float))
    h = np.concatenate(hits)
    return MonteCarloEstimate(float(h.mean()), float(h.std(ddof=1) / math.sqrt(h.size)), int(h.size), seed)


@dataclass(frozen=True)
class DivergenceRow:
    k: int
    m: int
    log_C: float
    bounded_partial_sum: float
    divergence_term_log: float
    ratio_certificate: float


@dataclass(frozen=True)
class DivergenceTable:
    schedule: CoefficientSchedule
    rows: tuple
    certificates: Mapping[int, object] = field(default_factory=dict)

    def divergence_increasing(self, ks: Sequence[int] = (2, 3, 4)) -> bool:
        d = {r.k: r.divergence_term_log for r in self.rows}
        vals = [d[k] for k in ks if k in d]
        return len(vals) == len(list(ks)) and all(b > a for a, b in zip(vals, vals[1:]))

    def bounded_ok(self, tol: float = 1e-3) -> bool:
        return all(r.bounded_partial_sum <= BASEL + tol for r in self.rows)


def divergence_table(schedule: CoefficientSchedule, certificates: Mapping[int, object]) -> DivergenceTable:
    """Per-block lower bounds ``C_k * ratio(m_k) * ||f_{m_k}||`` for any global extension.

    ``certificates`` maps each supported ``m`` to an object with a ``ratio``
    attribute (an extension-cost certificate).
    """
    sums = schedule.bounded_partial_sums()
    rows = []
    for i, k in enumerate(schedule.ks):
        m = 2 ** k
        if m not in certificates:
            raise KeyError(f"missing extension-cost certificate for m={m}")
        ratio = float(certificates[m].ratio)
        div = schedule.log_C[k] + math.log(ratio) + schedule.log_norm[k]
        rows.append(DivergenceRow(k, m, schedule.log_C[k], float(sums[i]), div, ratio))
    return DivergenceTable(schedule, tuple(rows), dict(certificates))


def product_table(p: float, k_max: int, resolution: int = 1024, tol: float = 1e-8,
                  damping: str = "geometric") -> DivergenceTable:
    """Schedule, certificates and divergence table in one call (``p`` in {1, 2})."""
    from .extend import extension_ratio_sweep

    schedule = choose_coefficients(p, k_max, damping)
    sweep = extension_ratio_sweep(list(schedule.support), p, resolution=resolution, tol=tol)
    certs = {c.m: c for c in sweep.certificates}
    return divergence_table(schedule, certs)


TABLE_CSV_COLUMNS = ("k", "m", "log_C", "bounded_partial_sum", "divergence_term_log", "ratio_certificate")


def write_table_csv(table: DivergenceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_CSV_COLUMNS)
        for r in table.rows:
            w.writerow([r.k, r.m, repr(r.log_C), repr(r.bounded_partial_sum), repr(r.divergence_term_log),
                        repr(r.ratio_certificate)])
