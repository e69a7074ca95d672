"""Right-hand side assembly and the bounded-solution operator.

For a bounded forcing G the linear reflection equation

    u'(t) = a u(t) + b u(-t) + G(t)

has, when lam = sqrt(a^2 - b^2) > 0, exactly one bounded solution

    u(t) = -1/(2 lam) int_t^inf  e^{-lam (y - t)} [(lam + a) G(y) - b G(-y)] dy
           +1/(2 lam) int_-inf^t e^{-lam (t - y)} [(lam - a) G(y) + b G(-y)] dy.

Gamma maps a candidate x to that solution with G = F[x], where F adds the
two convolution terms of the kernel to the pointwise nonlinearity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .expr import Expression, parse
from .funcspace import GridFunction
from .measure import LEBESGUE, MeasureSpec
from .quadrature import (
    DEFAULT_QUAD,
    KernelSpec,
    QuadratureConfig,
    QuadratureError,
    integrate,
    integrate_semi_infinite,
    kernel_constant_c,
    kernel_cutoff,
    simpson_weights,
    truncation_point,
)

ALLOWED_VARS = {
    "f": ("t", "x1", "x2"),
    "h": ("t", "x1", "x2"),
    "K": ("s",),
    "beta": ("t",),
    "rho": ("t",),
}


class ProblemSpecError(ValueError):
    pass


def _check_increasing(beta: Callable, span: float = 100.0) -> None:
    t = np.linspace(-span, span, 20001)
    if not np.all(np.diff(beta(t)) > 0):
        raise ProblemSpecError("beta must be strictly increasing (sampled check failed)")


@dataclass
class ProblemSpec:
    """u'(t) = a u(t) + b u(-t) + f(t, u(beta(t)), u(beta(-t)))
              + int_t^inf K(s-t) h(s, u(beta(s)), u(beta(-s))) ds
              + int_-t^inf K(s+t) h(s, u(beta(s)), u(beta(-s))) ds

    ``f``, ``h`` are vectorised callables of ``(t, x1, x2)`` and ``beta`` of
    ``t``.  Build from expression text with :meth:`from_sources`.
    """

    a: float
    b: float
    f: Callable
    h: Callable
    kernel: KernelSpec
    beta: Callable
    mu: MeasureSpec = LEBESGUE
    p_delay: float = 0.0
    sources: dict = field(default_factory=dict)
    h_is_zero: bool = False
    allow_no_reflection: bool = False
    beta_check_span: float = 100.0

    def __post_init__(self):
        self.a, self.b = float(self.a), float(self.b)
        if not self.a * self.a - self.b * self.b > 0:
            raise ProblemSpecError("a²−b² must be positive")
        if self.b == 0 and not self.allow_no_reflection:
            raise ProblemSpecError("b must be non-zero (set allow_no_reflection for the b = 0 harness mode)")
        _check_increasing(self.beta, self.beta_check_span)
        self.notes = []
        if not self.a > self.b:
            self.notes.append("a > b fails; a²−b² > 0 still gives lambda > 0")
            warnings.warn(self.notes[-1], stacklevel=2)

    @classmethod
    def from_sources(
        cls,
        a: float,
        b: float,
        f: str = "0",
        h: str = "0",
        K: str = "0",
        beta: str = "t",
        rho: str = "1",
        p_delay: float = 0.0,
        kernel_decay: float | None = None,
        **kwargs,
    ) -> "ProblemSpec":
        consts = {"p": float(p_delay)}
        exprs = {name: parse(src) for name, src in (("f", f), ("h", h), ("K", K), ("beta", beta), ("rho", rho))}
        for name, e in exprs.items():
            allowed = set(ALLOWED_VARS[name]) | {"p"}
            bad = [v for v in e.free_vars if v not in allowed]
            if bad:
                raise ProblemSpecError(
                    f"{name}: variable(s) {', '.join(bad)} not allowed "
                    f"(allowed: {', '.join(sorted(allowed | {'pi', 'e'}))})"
                )
        return cls(
            a=a,
            b=b,
            f=exprs["f"].bind("t", "x1", "x2", constants=consts),
            h=exprs["h"].bind("t", "x1", "x2", constants=consts),
            kernel=KernelSpec(exprs["K"], kernel_decay, consts),
            beta=exprs["beta"].bind("t", constants=consts),
            mu=MeasureSpec(exprs["rho"], constants=consts),
            p_delay=float(p_delay),
            sources={name: str(e) for name, e in exprs.items()},
            h_is_zero=exprs["h"].is_zero,
            **kwargs,
        )

    @cached_property
    def lam(self) -> float:
        return math.sqrt(self.a * self.a - self.b * self.b)

    @property
    def geom(self) -> float:
        lam = self.lam
        return abs(lam - self.a) + abs(lam + self.a) + 2.0 * abs(self.b)

    @property
    def has_kernel_terms(self) -> bool:
        return not (self.kernel.is_zero or self.h_is_zero)

    def replace(self, **changes) -> "ProblemSpec":
        data = {
            name: getattr(self, name)
            for name in (
                "a", "b", "f", "h", "kernel", "beta", "mu", "p_delay", "sources",
                "h_is_zero", "allow_no_reflection", "beta_check_span",
            )
        }
        data.update(changes)
        return ProblemSpec(**data)


@dataclass(frozen=True)
class RHSValue:
    f_part: np.ndarray | float
    kernel_forward: np.ndarray | float
    kernel_backward: np.ndarray | float

    @property
    def total(self):
        return self.f_part + self.kernel_forward + self.kernel_backward


def f_values(ps: ProblemSpec, x, t):
    return ps.f(t, x(ps.beta(t)), x(ps.beta(-t)))


def h_values(ps: ProblemSpec, x, s):
    return ps.h(s, x(ps.beta(s)), x(ps.beta(-s)))


@dataclass(frozen=True)
class ForcingBounds:
    """Sampled sup bounds and the truncation lengths they certify."""

    f_sup: float
    h_sup: float
    c: float
    kernel_cutoff: float
    F_sup: float
    gamma_cutoff: float


def forcing_bounds(ps: ProblemSpec, x: GridFunction, cfg: QuadratureConfig = DEFAULT_QUAD) -> ForcingBounds:
    """|F| <= sup|f| + 2 c sup|h|, each sup sampled on the grid step over
    every point the truncated integrals can reach (x is clamped beyond +-T)."""
    cap_g = cfg.truncation_cap / ps.lam
    cap_k = cfg.truncation_cap / ps.kernel.decay if ps.kernel.decay else cfg.truncation_cap
    span = x.half_width + cap_g + cap_k
    s = x.step * np.arange(-math.ceil(span / x.step), math.ceil(span / x.step) + 1)
    f_sup = float(np.max(np.abs(f_values(ps, x, s))))
    if ps.has_kernel_terms:
        h_sup = float(np.max(np.abs(h_values(ps, x, s))))
        c = kernel_constant_c(ps.kernel, cfg)
        r_k = kernel_cutoff(ps.kernel, h_sup, cfg)
    else:
        h_sup, c, r_k = 0.0, 0.0, 0.0
    F_sup = f_sup + 2.0 * c * h_sup
    r_g = truncation_point(0.0, ps.lam, ps.geom * F_sup / (2.0 * ps.lam), cfg)
    return ForcingBounds(f_sup, h_sup, c, r_k, F_sup, r_g)


def _chunks(n: int, size: int = 64):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def assemble_F(
    ps: ProblemSpec,
    u: GridFunction,
    t,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    bounds: ForcingBounds | None = None,
) -> RHSValue:
    """Pointwise right-hand side F[u](t); ``t`` may be a scalar or any array."""
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    f_part = f_values(ps, u, flat)
    if not ps.has_kernel_terms:
        zero = np.zeros_like(flat)
        kf, kb = zero, zero.copy()
    else:
        bounds = bounds or forcing_bounds(ps, u, cfg)
        h = u.step
        R = math.ceil(bounds.kernel_cutoff / h - 1e-9) * h
        kf = np.empty_like(flat)
        kb = np.empty_like(flat)
        # panels must not straddle the grid points of the integrand's argument,
        # so points are batched by their offset from the grid
        off = np.round(np.mod(flat, h) / h, 9) % 1.0
        for value in np.unique(off):
            idx = np.flatnonzero(off == value)
            for sl in _chunks(len(idx)):
                sel = idx[sl]
                tt = flat[sel][:, None]
                kf[sel] = integrate(
                    lambda y: ps.kernel(y) * h_values(ps, u, tt + y), 0.0, R, cfg,
                    align=h, anchor=(-value * h) % h,
                )
                kb[sel] = integrate(
                    lambda y: ps.kernel(y) * h_values(ps, u, y - tt), 0.0, R, cfg,
                    align=h, anchor=value * h,
                )
    shape = t.shape
    if shape == ():
        return RHSValue(float(f_part[0]), float(kf[0]), float(kb[0]))
    return RHSValue(f_part.reshape(shape), kf.reshape(shape), kb.reshape(shape))


def linear_solution(
    ps: ProblemSpec,
    G: Callable,
    t,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    bound: float | None = None,
    align: float | None = None,
):
    """Bounded solution of u' = a u + b u(-.) + G at ``t`` (scalar or 1-D).

    ``bound`` must dominate |G|; it certifies the truncation of both
    half-line integrals.
    """
    lam, a, b = ps.lam, ps.a, ps.b
    if not lam > 0:
        raise QuadratureError("lambda must be positive")
    if bound is None:
        raise ValueError("linear_solution needs a sup bound for G")
    t = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t)[:, None]

    def integrand(s):
        yp = tt + s
        ym = tt - s
        g = G(np.concatenate([yp, -yp, ym, -ym], axis=0))
        n = len(tt)
        gp, gmp, gm, gmm = g[:n], g[n : 2 * n], g[2 * n : 3 * n], g[3 * n :]
        ahead = (lam + a) * gp - b * gmp
        behind = (lam - a) * gm + b * gmm
        return np.exp(-lam * s) * (behind - ahead) / (2.0 * lam)

    value = integrate_semi_infinite(integrand, 0.0, lam, ps.geom * bound / (2.0 * lam), cfg, align=align)
    return float(value[0]) if t.ndim == 0 else value


def gamma_pointwise(ps: ProblemSpec, x: GridFunction, t, cfg: QuadratureConfig = DEFAULT_QUAD):
    """Gamma x at ``t`` by nested quadrature: independent of the lattice path
    used by :class:`GammaOperator`, and much slower."""
    bounds = forcing_bounds(ps, x, cfg)
    G = lambda y: assemble_F(ps, x, y, cfg, bounds).total
    return linear_solution(ps, G, t, cfg, bound=bounds.F_sup, align=x.step)


def kernel_terms_on_lattice(ps: ProblemSpec, x: GridFunction, m: int, JF: int, MK: int) -> np.ndarray:
    """Both kernel integrals at every lattice point y = j delta, |j| <= JF,
    with the kernel truncated after MK subintervals of delta = h/m.

    H is only piecewise smooth between grid points, so each integral is
    split at the first grid point it meets: Gauss-Legendre up to there,
    composite Simpson on whole grid cells after.  With the offset r (in
    subintervals) to that grid point, the Simpson part is a sliding dot
    product with weights K(i delta) w_S[i - r], one convolution per r.
    """
    delta = x.step / m
    j = np.arange(-JF, JF + 1)
    y = delta * j
    JH = JF + MK + m
    H = h_values(ps, x, delta * np.arange(-JH, JH + 1))
    Hr = H[::-1]
    L = MK + m
    K = ps.kernel(delta * np.arange(L))
    wS = simpson_weights(MK, delta)
    r_fwd = (-j) % m
    r_bwd = j % m
    out = np.zeros_like(y)
    for r in range(m):
        w = np.zeros(L)
        w[r : r + MK + 1] = wS
        w *= K
        sel_f, sel_b = r_fwd == r, r_bwd == r
        if np.any(sel_f):
            fwd = fftconvolve(H, w[::-1], mode="valid")[JH - JF : JH + JF + 1]
            out[sel_f] += fwd[sel_f]
        if np.any(sel_b):
            bwd = fftconvolve(Hr, w, mode="valid")[JH - JF - L + 1 : JH + JF - L + 2]
            out[sel_b] += bwd[sel_b]
    # pieces shorter than one grid cell, before the first grid point
    for offs, sign in ((r_fwd, 1.0), (r_bwd, -1.0)):
        part = offs > 0
        span = delta * offs[part][:, None]
        sig = span * _GL_NODES
        yy = y[part][:, None]
        args = yy + sig if sign > 0 else sig - yy
        vals = ps.kernel(sig) * h_values(ps, x, args)
        out[part] += (span[:, 0]) * (vals @ _GL_WEIGHTS)
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


class GammaOperator:
    """Gamma evaluated at every grid point on a shared quadrature lattice.

    At refinement level k every grid cell is split into 2^(k+1) Simpson
    subintervals.  All half-line integrals start on grid points, so each
    per-point composite Simpson sum is a sliding dot product over the lattice
    and is computed for all points at once by FFT convolution.  Levels k and
    k+1 are compared and the finer result is accepted when the two agree to
    ``abs_tol``.  The accepted level only ever increases, which keeps the
    discrete map fixed across Picard iterations.
    """

    def __init__(self, ps: ProblemSpec, cfg: QuadratureConfig = DEFAULT_QUAD, start_level: int = 0):
        self.ps = ps
        self.cfg = cfg
        self.level = start_level
        self.last_bounds: ForcingBounds | None = None

    def __call__(self, x: GridFunction) -> GridFunction:
        ps, cfg = self.ps, self.cfg
        bounds = forcing_bounds(ps, x, cfg)
        self.last_bounds = bounds
        h = x.step
        n_g = max(1, math.ceil(bounds.gamma_cutoff / h - 1e-9))
        n_k = math.ceil(bounds.kernel_cutoff / h - 1e-9) if ps.has_kernel_terms else 0
        level = self.level
        coarse = self._at_level(x, level, n_g, n_k)
        while True:
            if level + 1 > cfg.max_refinements:
                raise QuadratureError("Gamma lattice did not reach tolerance within max_refinements")
            fine = self._at_level(x, level + 1, n_g, n_k)
            if np.max(np.abs(fine - coarse)) < cfg.abs_tol:
                self.level = level
                return x.with_samples(fine)
            level += 1
            coarse = fine

    def _at_level(self, x: GridFunction, level: int, n_g: int, n_k: int) -> np.ndarray:
        ps = self.ps
        lam, a, b = ps.lam, ps.a, ps.b
        m = 2 ** (level + 1)
        delta = x.step / m
        n = x.n_half
        JF = (n + n_g) * m
        MK = n_k * m
        MG = n_g * m

        y = delta * np.arange(-JF, JF + 1)
        F = f_values(ps, x, y)
        if MK > 0:
            F = F + kernel_terms_on_lattice(ps, x, m, JF, MK)

        Fr = F[::-1]
        ahead = (lam + a) * F - b * Fr
        behind = (lam - a) * F + b * Fr
        wG = simpson_weights(MG, delta) * np.exp(-lam * delta * np.arange(MG + 1))
        stop = 2 * n * m + 1
        I_ahead = fftconvolve(ahead, wG[::-1], mode="valid")[MG : MG + stop : m]
        I_behind = fftconvolve(behind, wG, mode="valid")[:stop:m]
        return (I_behind - I_ahead) / (2.0 * lam)


def gamma_apply(ps: ProblemSpec, x: GridFunction, cfg: QuadratureConfig = DEFAULT_QUAD) -> GridFunction:
    return GammaOperator(ps, cfg)(x)
