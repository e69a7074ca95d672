"""Composite Simpson quadrature with panel doubling, certified truncation of
exponentially decaying semi-infinite integrals, and the kernel/measure
constants built on top of them.

Integrands are vectorised: ``f(nodes)`` receives a 1-D array and returns an
array whose *last* axis runs over the nodes.  Leading axes are a batch, so a
single call can integrate many integrands on the same node set; convergence
is then judged on the worst member of the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .expr import Expression


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-8
    max_refinements: int = 20
    initial_panels: int = 4
    tail_decay_rate: float | None = None
    # hard cap on semi-infinite truncation, in units of 1/decay
    truncation_cap: float = 200.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.initial_panels < 4 or self.initial_panels % 2:
            raise ValueError("initial_panels must be even and >= 4")
        if self.max_refinements < 1:
            raise ValueError("max_refinements must be >= 1")
        if self.tail_decay_rate is not None and not self.tail_decay_rate > 0:
            raise ValueError("tail_decay_rate must be positive")


DEFAULT_QUAD = QuadratureConfig()


def simpson_weights(n: int, step: float) -> np.ndarray:
    """Weights of the composite Simpson rule on ``n`` (even) subintervals."""
    if n < 2 or n % 2:
        raise ValueError("Simpson needs an even number of subintervals")
    w = np.empty(n + 1)
    w[0] = w[-1] = 1.0
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (step / 3.0)


def simpson_sequence(
    f: Callable, lo: float, hi: float, n0: int, max_levels: int
) -> Iterator[tuple[int, np.ndarray | float]]:
    """Yield ``(n, I_n)`` for n = n0, 2 n0, 4 n0, ... reusing old nodes."""
    if n0 < 2 or n0 % 2:
        raise ValueError("n0 must be even")
    width = hi - lo
    ends = f(np.array([lo, hi]))
    ends = ends[..., 0] + ends[..., 1]
    n = n0
    nodes = lo + width * np.arange(1, n) / n
    vals = f(nodes)
    odd = vals[..., 0::2].sum(axis=-1)
    even = vals[..., 1::2].sum(axis=-1)
    yield n, (width / n / 3.0) * (ends + 4.0 * odd + 2.0 * even)
    for _ in range(max_levels):
        even = even + odd
        n *= 2
        mids = lo + width * np.arange(1, n, 2) / n
        odd = f(mids).sum(axis=-1)
        yield n, (width / n / 3.0) * (ends + 4.0 * odd + 2.0 * even)


def _simpson_converged(f, lo, hi, n0, cfg: QuadratureConfig, tol: float):
    prev = None
    for n, value in simpson_sequence(f, lo, hi, n0, cfg.max_refinements):
        if prev is not None and np.max(np.abs(value - prev)) < tol:
            return value
        prev = value
    raise QuadratureError(
        f"Simpson on [{lo}, {hi}] did not reach tolerance {tol:g} "
        f"after {cfg.max_refinements} refinements"
    )


def integrate(
    f: Callable,
    lo: float,
    hi: float,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    align: float | None = None,
    tol: float | None = None,
    anchor: float = 0.0,
):
    """Composite Simpson with doubling until ``|I_2n - I_n| < abs_tol``.

    With ``align`` set, panels never straddle the lattice
    ``anchor + align * Z``; use it when the integrand is only piecewise smooth
    between lattice points (for example anything built from a linearly
    interpolated grid function).
    """
    tol = cfg.abs_tol if tol is None else tol
    if hi < lo:
        raise ValueError("integrate needs lo <= hi")
    if hi == lo:
        return 0.0 * f(np.array([lo]))[..., 0]
    if align is None:
        return _simpson_converged(f, lo, hi, cfg.initial_panels, cfg, tol)

    eps = 1e-9 * align
    k_lo = math.ceil((lo - anchor) / align - 1e-9)
    k_hi = math.floor((hi - anchor) / align + 1e-9)
    if k_hi <= k_lo:
        return _simpson_converged(f, lo, hi, cfg.initial_panels, cfg, tol)
    a_lo, a_hi = anchor + k_lo * align, anchor + k_hi * align
    total = _simpson_converged(f, a_lo, a_hi, max(cfg.initial_panels, 2 * (k_hi - k_lo)), cfg, tol / 3)
    if a_lo - lo > eps:
        total = total + _simpson_converged(f, lo, a_lo, cfg.initial_panels, cfg, tol / 3)
    if hi - a_hi > eps:
        total = total + _simpson_converged(f, a_hi, hi, cfg.initial_panels, cfg, tol / 3)
    return total


def truncation_point(lo: float, decay: float, bound: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Smallest ``R`` with ``bound * exp(-decay (R - lo)) / decay <= abs_tol``."""
    if not decay > 0:
        raise QuadratureError(f"decay rate must be positive, got {decay}")
    if bound <= 0:
        return lo
    length = math.log(bound / (cfg.abs_tol * decay)) / decay
    if length <= 0:
        return lo
    cap = cfg.truncation_cap / decay
    if length > cap:
        raise QuadratureError(
            f"truncation needs R - lo = {length:.6g}, beyond the hard cap {cap:.6g}"
        )
    return lo + length


def integrate_semi_infinite(
    f: Callable,
    lo: float,
    decay: float,
    bound: float,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    align: float | None = None,
):
    """Integrate over ``[lo, inf)`` given ``|f(y)| <= bound exp(-decay (y - lo))``.

    The tail beyond the truncation point is at most ``abs_tol`` and the
    Simpson estimate is within ``abs_tol`` too, so the total error is at most
    ``2 abs_tol``.
    """
    R = truncation_point(lo, decay, bound, cfg)
    if align is not None:
        R = lo + math.ceil((R - lo) / align - 1e-9) * align
    return integrate(f, lo, R, cfg, align=align)


# --- kernels ---------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel K(s) on s >= 0.

    ``decay`` is an optional certificate ``K(s) <= C exp(-decay s)``; C is
    measured by sampling.  Without it, tails are bounded by panel doubling.
    """

    expr: Expression
    decay: float | None = None
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_fn", self.expr.bind("s", constants=self.constants))
        if self.decay is not None and not self.decay > 0:
            raise ValueError("kernel decay certificate must be positive")
        if not self.is_zero:
            s = np.linspace(0.0, 50.0, 5001)
            if np.any(self(s) < 0):
                raise ValueError(f"kernel {self.expr} takes negative values")

    def __call__(self, s):
        return self._fn(s)

    @property
    def is_zero(self) -> bool:
        return self.expr.is_zero

    def certificate_bound(self, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
        """Sampled ``max K(s) exp(decay s)``."""
        if self.decay is None:
            raise QuadratureError("kernel has no decay certificate")
        s = np.linspace(0.0, cfg.truncation_cap / self.decay, 20001)
        return float(np.max(self(s) * np.exp(self.decay * s)))


def _tail_doubling(g: Callable, cfg: QuadratureConfig, target: float):
    """Integrate g >= 0 over [0, inf) on panels [0,1], [1,2], [2,4], ...

    Returns ``(integral, cutoff)`` where the estimated remaining tail past
    ``cutoff`` is below ``target``.  The tail is extrapolated geometrically
    from the last two panel contributions.
    """
    total = integrate(g, 0.0, 1.0, cfg, tol=target / 10)
    lo, hi = 1.0, 2.0
    prev = None
    for _ in range(60):
        piece = float(integrate(g, lo, hi, cfg, tol=target / 10))
        total += piece
        if prev is not None and prev > 0:
            ratio = piece / prev
            if ratio < 0.9 and piece * ratio / (1.0 - ratio) < target:
                return total, hi
        elif prev is not None and piece == 0.0:
            return total, hi
        prev = piece
        lo, hi = hi, 2.0 * hi
    raise QuadratureError("kernel integral does not converge (tail not below tolerance at cap)")


def kernel_constant_c(K: KernelSpec, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Total mass of the kernel on [0, inf)."""
    if K.is_zero:
        return 0.0
    if K.decay is not None:
        return float(integrate_semi_infinite(K, 0.0, K.decay, K.certificate_bound(cfg), cfg))
    return _tail_doubling(K, cfg, cfg.abs_tol)[0]


def kernel_q_norm(K: KernelSpec, q: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    if not q > 1:
        raise ValueError("q must exceed 1")
    if K.is_zero:
        return 0.0
    g = lambda s: K(s) ** q
    if K.decay is not None:
        val = integrate_semi_infinite(g, 0.0, q * K.decay, K.certificate_bound(cfg) ** q, cfg)
    else:
        val = _tail_doubling(g, cfg, cfg.abs_tol)[0]
    return float(val) ** (1.0 / q)


def kernel_cutoff(K: KernelSpec, weight_bound: float, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Cutoff R with ``weight_bound * int_R^inf K <= abs_tol``."""
    if K.is_zero or weight_bound <= 0:
        return 0.0
    if K.decay is not None:
        return truncation_point(0.0, K.decay, K.certificate_bound(cfg) * weight_bound, cfg)
    return _tail_doubling(K, cfg, cfg.abs_tol / weight_bound)[1]


def lp_norm_real_line(
    g: Callable,
    p: float,
    decay: float,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    weight: Callable | None = None,
) -> float:
    """``(int_R |g|^p w dt)^(1/p)`` given the envelope ``|g(t)| <= C exp(-decay |t|)``.

    C (and, with a weight, the weighted constant) is measured by sampling.
    """
    if not decay > 0:
        raise ValueError("L^p norm needs a positive decay envelope")
    w = weight if weight is not None else (lambda t: 1.0)
    integrand = lambda t: np.abs(g(t)) ** p * w(t)
    s = np.linspace(0.0, cfg.truncation_cap / (p * decay), 40001)
    env = np.exp(p * decay * s)
    bound = float(max(np.max(integrand(s) * env), np.max(integrand(-s) * env)))
    if bound == 0.0:
        return 0.0
    right = integrate_semi_infinite(integrand, 0.0, p * decay, bound, cfg)
    left = integrate_semi_infinite(lambda t: integrand(-t), 0.0, p * decay, bound, cfg)
    return float(right + left) ** (1.0 / p)


# --- (h1) weighted sup-integrals -------------------------------------------


@dataclass(frozen=True)
class WeightedSupReport:
    z_grid: tuple[float, ...]
    p1_values: tuple[float, ...]
    p2_values: tuple[float, ...]
    p1: float
    p2: float
    p1_saturated: bool
    p2_saturated: bool

    @property
    def saturated(self) -> bool:
        return self.p1_saturated or self.p2_saturated


def _saturated(values: list[float], plateau_rtol: float) -> bool:
    # max at the last z and still moving: the grid sup underestimates the true sup
    if len(values) < 2 or int(np.argmax(values)) != len(values) - 1:
        return False
    last, before = values[-1], values[-2]
    return abs(last - before) > plateau_rtol * max(abs(last), 1e-300)


def p1_p2_sup(mu, lam: float, z_grid, cfg: QuadratureConfig = DEFAULT_QUAD, plateau_rtol: float = 1e-6):
    """Grid sups of the two exp(-lam(±t + z))-weighted window integrals of mu.

    ``mu`` is anything with a vectorised ``density(t)``.  A saturation flag is
    raised when the maximum sits at the largest z and has not levelled off.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    z = [float(v) for v in z_grid]
    if any(b <= a for a, b in zip(z, z[1:])) or (z and z[0] < 0):
        raise ValueError("z_grid must be increasing and non-negative")
    p1_vals, p2_vals = [], []
    for zi in z:
        if zi == 0.0:
            p1_vals.append(0.0)
            p2_vals.append(0.0)
            continue
        both = lambda t, zi=zi: np.stack(
            [np.exp(-lam * (t + zi)) * mu.density(t), np.exp(-lam * (-t + zi)) * mu.density(t)]
        )
        v = integrate(both, -zi, zi, cfg)
        p1_vals.append(float(v[0]))
        p2_vals.append(float(v[1]))
    return WeightedSupReport(
        z_grid=tuple(z),
        p1_values=tuple(p1_vals),
        p2_values=tuple(p2_vals),
        p1=max(p1_vals),
        p2=max(p2_vals),
        p1_saturated=_saturated(p1_vals, plateau_rtol),
        p2_saturated=_saturated(p2_vals, plateau_rtol),
    )
