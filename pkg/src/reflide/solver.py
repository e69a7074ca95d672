"""Contraction constants for the fixed-point map and the Picard iteration.

Two sufficient conditions are evaluated.  With constant Lipschitz bounds
``Lf``, ``Lh`` and kernel mass ``c``::

    geom / lam^2 * (Lf + 2 c Lh) < 1

and with integrable Lipschitz profiles ``Lf(t)``, ``Lh(t)`` and q = p/(p-1)::

    ||Lf||_p + 2 ||K||_q ||Lh||_p < lam (q lam)^(1/q) / geom

where geom = |lam - a| + |lam + a| + 2|b|.  Either one makes Gamma a
contraction in the sup norm with factor lhs/rhs.  Neither failure proves
non-existence; a failed check only means uniqueness is not guaranteed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .expr import Expression
from .funcspace import GridFunction, sup_distance
from .operator import GammaOperator, ProblemSpec
from .quadrature import DEFAULT_QUAD, QuadratureConfig, kernel_constant_c, kernel_q_norm, lp_norm_real_line

log = logging.getLogger(__name__)

THM1 = "thm1_constant_lipschitz"
THM2 = "thm2_lp_lipschitz"


class ContractionError(RuntimeError):
    """Raised when a solve is requested without a passing contraction check."""


@dataclass(frozen=True)
class ContractionReport:
    theorem: str
    lam: float
    geom: float
    lf: float
    lh: float
    lhs: float
    rhs: float
    c: float | None = None
    k_qnorm: float | None = None
    q: float | None = None
    p: float | None = None
    lf_mu_norm: float | None = None

    def __post_init__(self):
        if self.theorem not in (THM1, THM2):
            raise ValueError(f"unknown theorem {self.theorem!r}")
        if self.lhs < 0 or not self.rhs > 0:
            raise ValueError("contraction sides must satisfy lhs >= 0, rhs > 0")

    @property
    def factor(self) -> float:
        return self.lhs / self.rhs

    @property
    def verdict(self) -> bool:
        return self.lhs < self.rhs

    @property
    def summary(self) -> str:
        if self.verdict:
            return "contraction holds"
        return "condition violated; uniqueness not guaranteed"


def check_thm1(ps: ProblemSpec, Lf: float, Lh: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> ContractionReport:
    if Lf < 0 or Lh < 0:
        raise ValueError("Lipschitz constants must be non-negative")
    cfg = replace(cfg, abs_tol=cfg.abs_tol * 1e-3)
    c = kernel_constant_c(ps.kernel, cfg) if not ps.h_is_zero else 0.0
    lhs = ps.geom / ps.lam**2 * (Lf + 2.0 * c * Lh)
    return ContractionReport(THM1, ps.lam, ps.geom, float(Lf), float(Lh), lhs, 1.0, c=c)


def _profile(expr, consts) -> Callable:
    if isinstance(expr, Expression):
        return expr.bind("t", constants=consts)
    return expr


def check_thm2(
    ps: ProblemSpec,
    Lf_expr,
    Lh_expr,
    p: float,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    lf_decay: float = 1.0,
    lh_decay: float = 1.0,
) -> ContractionReport:
    """Integrable-profile condition.  ``lf_decay``/``lh_decay`` declare the
    envelopes ``L(t) <= C exp(-decay |t|)`` that certify the norm truncation."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    q = p / (p - 1.0)
    consts = {"p": ps.p_delay}
    # the p-th root magnifies quadrature error, so the norms get a tighter budget
    cfg = replace(cfg, abs_tol=cfg.abs_tol * 1e-3)
    zero = lambda e: isinstance(e, Expression) and e.is_zero
    Lf = _profile(Lf_expr, consts)
    Lh = _profile(Lh_expr, consts)
    nf = 0.0 if zero(Lf_expr) else lp_norm_real_line(Lf, p, lf_decay, cfg)
    nh = 0.0 if zero(Lh_expr) else lp_norm_real_line(Lh, p, lh_decay, cfg)
    kq = kernel_q_norm(ps.kernel, q, cfg) if not (ps.kernel.is_zero or ps.h_is_zero) else 0.0
    nf_mu = 0.0 if zero(Lf_expr) else lp_norm_real_line(Lf, p, lf_decay, cfg, weight=ps.mu.density)
    lam = ps.lam
    lhs = nf + 2.0 * kq * nh
    rhs = lam * (q * lam) ** (1.0 / q) / ps.geom
    return ContractionReport(THM2, lam, ps.geom, nf, nh, lhs, rhs, k_qnorm=kq, q=q, p=p, lf_mu_norm=nf_mu)


def estimate_lipschitz(
    g,
    box: Mapping[str, tuple[float, float]],
    n_samples: int = 4000,
    seed: int = 0,
    constants: Mapping[str, float] | None = None,
) -> float:
    """Sampled lower bound on the Lipschitz constant of g(t, x1, x2) in
    (x1, x2) with respect to |dx1| + |dx2|.

    Pairs move both arguments, x1 only or x2 only, with log-uniform
    increments down to 1e-7 so that derivative-sized ratios are reached.
    The box centre and t = 0 (when inside the box) are always sampled.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    fn = g.bind("t", "x1", "x2", constants=constants) if isinstance(g, Expression) else g
    rng = np.random.default_rng(seed)
    (t0, t1), (a0, a1), (b0, b1) = box["t"], box["x1"], box["x2"]
    t = rng.uniform(t0, t1, n_samples)
    x1 = rng.uniform(a0, a1, n_samples)
    x2 = rng.uniform(b0, b1, n_samples)
    anchors_t = [0.5 * (t0 + t1)] + ([0.0] if t0 <= 0.0 <= t1 else []) + [t0, t1]
    anchors_x1 = [0.5 * (a0 + a1)] + ([0.0] if a0 <= 0.0 <= a1 else [])
    anchors_x2 = [0.5 * (b0 + b1)] + ([0.0] if b0 <= 0.0 <= b1 else [])
    k = 0
    for ta in anchors_t:
        for xa in anchors_x1:
            for xb in anchors_x2:
                if k < n_samples:
                    t[k], x1[k], x2[k] = ta, xa, xb
                    k += 1
    span = max(a1 - a0, b1 - b0, 1e-12)
    d = span * 10.0 ** rng.uniform(-7.0, 0.0, (3, n_samples))
    sgn = rng.choice([-1.0, 1.0], (2, n_samples))
    base = fn(t, x1, x2)
    best = 0.0
    for dx1, dx2 in ((sgn[0] * d[0], sgn[1] * d[0]), (sgn[0] * d[1], 0.0 * d[1]), (0.0 * d[2], sgn[1] * d[2])):
        y1, y2 = x1 + dx1, x2 + dx2
        ratio = np.abs(fn(t, y1, y2) - base) / (np.abs(dx1) + np.abs(dx2))
        best = max(best, float(np.max(ratio)))
    return best


@dataclass
class SolveTrace:
    iterations: list = field(default_factory=list)
    converged: bool = False
    final_residual: float | None = None
    solution: GridFunction | None = None
    contraction: ContractionReport | None = None
    lattice_level: int = 0
    seconds: float = 0.0
    iterates: list | None = None

    @property
    def ratios(self) -> list[float]:
        d = self.iterations
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]

    def apriori_bound(self, k: int) -> float:
        """rho^k d_0 / (1 - rho), the distance of iterate k from the limit."""
        rho = self.contraction.factor
        return rho**k * self.iterations[0] / (1.0 - rho)


def picard_solve(
    ps: ProblemSpec,
    x0: GridFunction,
    picard_tol: float = 1e-8,
    max_iter: int = 200,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    contraction: ContractionReport | None = None,
    force: bool = False,
    store_iterates: bool = False,
    residual_window: tuple[float, float] = (-10.0, 10.0),
) -> SolveTrace:
    """x_{k+1} = Gamma x_k until sup|x_{k+1} - x_k| < picard_tol.

    A passing ``contraction`` report is required unless ``force`` is set.
    Non-convergence is reported through ``converged=False``, not raised.
    """
    if not force:
        if contraction is None:
            raise ContractionError("picard_solve needs a contraction report (or force=True)")
        if not contraction.verdict:
            raise ContractionError(
                f"contraction check failed: lhs {contraction.lhs:.6g} >= rhs {contraction.rhs:.6g}"
            )
    start = time.perf_counter()
    gamma = GammaOperator(ps, cfg)
    trace = SolveTrace(contraction=contraction, iterates=[x0] if store_iterates else None)
    x = x0
    for k in range(max_iter):
        nxt = gamma(x)
        d = sup_distance(nxt, x)
        trace.iterations.append(d)
        log.debug("picard %d: d = %.3e (lattice level %d)", k, d, gamma.level)
        x = nxt
        if store_iterates:
            trace.iterates.append(x)
        if d < picard_tol:
            trace.converged = True
            break
    trace.solution = x
    trace.lattice_level = gamma.level
    if trace.converged:
        from .verify import residual

        lo, hi = residual_window
        lim = x.half_width - 5.0
        lo, hi = max(lo, -lim), min(hi, lim)
        if hi > lo:
            trace.final_residual = residual(ps, x, (lo, hi), cfg).sup_residual
    trace.seconds = time.perf_counter() - start
    return trace
