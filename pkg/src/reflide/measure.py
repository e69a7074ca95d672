"""Absolutely continuous measures d mu = rho(t) dt, weighted ergodic means and
sampled probes of the measure hypotheses (translation bound, reflection bound
and the pushforward bound under the argument deformation).

Every probe here is a falsification test on a finite family of windows and
shifts.  A "supported" verdict means no violation was seen, nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import Expression, parse
from .quadrature import DEFAULT_QUAD, QuadratureConfig, integrate

SUPPORTED = "supported"
VIOLATED = "violated on sample"

DECAYING = "decaying"
NON_DECAYING = "non-decaying"
INCONCLUSIVE = "inconclusive"


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class MeasureSpec:
    rho: Expression
    description: str = ""
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_fn", self.rho.bind("t", constants=self.constants))
        if not self.description:
            object.__setattr__(self, "description", f"rho(t) = {self.rho}")

    @classmethod
    def from_source(cls, source: str, description: str = "", constants=None) -> "MeasureSpec":
        return cls(parse(source), description, dict(constants or {}))

    def density(self, t):
        return self._fn(t)

    def check_positive(self, t: np.ndarray) -> None:
        values = self.density(t)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = t[np.argmin(np.where(np.isfinite(values), values, -np.inf))]
            raise MeasureError(f"density {self.rho} is not positive at t = {bad:g}")


LEBESGUE = MeasureSpec.from_source("1", "Lebesgue measure")


def mass(mu: MeasureSpec, r: float, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """mu([-r, r])."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    return float(integrate(mu.density, -r, r, quad))


def window_mass(mu: MeasureSpec, lo: float, hi: float, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """mu([lo, hi]); the tolerance is relative once the mass exceeds 1, since
    the probes compare masses by ratio and densities may grow."""
    rough = (hi - lo) * float(np.max(mu.density(np.linspace(lo, hi, 5))))
    return float(integrate(mu.density, lo, hi, quad, tol=quad.abs_tol * max(1.0, rough)))


# --- ergodic means ---------------------------------------------------------


@dataclass(frozen=True)
class ErgodicityReport:
    radii: tuple[float, ...]
    means: tuple[float, ...]
    trend_slope: float
    verdict: str
    note: str = ""

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be strictly increasing")
        if any(m < 0 for m in self.means):
            raise ValueError("ergodic means are non-negative")


def _classify(means: Sequence[float], zero_tol: float) -> str:
    m = np.asarray(means, dtype=float)
    if np.max(m) <= zero_tol:
        return DECAYING
    tail = m[len(m) // 2 :]
    eventually_decreasing = bool(np.all(np.diff(tail) <= 0))
    if eventually_decreasing and m[-1] < 0.1 * m[0]:
        return DECAYING
    if m[-1] >= 0.5 * m[0]:
        return NON_DECAYING
    return INCONCLUSIVE


def _trend_slope(radii, means) -> float:
    m = np.asarray(means, dtype=float)
    if len(m) < 2 or np.any(m <= 0):
        return float("nan")
    return float(np.polyfit(np.log(radii), np.log(m), 1)[0])


def ergodic_mean(
    phi,
    mu: MeasureSpec,
    radii: Sequence[float],
    quad: QuadratureConfig = DEFAULT_QUAD,
    zero_tol: float = 1e-9,
) -> ErgodicityReport:
    """Windowed means (1/mu[-r,r]) int_{-r}^{r} |phi| d mu over a radius sweep.

    ``phi`` may be a GridFunction (radii must stay inside its domain), an
    Expression in ``t`` or a vectorised callable.

    The verdict is "decaying" when the second half of the sweep is
    non-increasing and the last mean is below a tenth of the first;
    "non-decaying" when the last mean is still at least half the first.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("radii must be non-empty")
    align = None
    if hasattr(phi, "samples"):
        if max(radii) > phi.half_width + 1e-12:
            raise ValueError(
                f"radius {max(radii)} exceeds the grid function domain [-{phi.half_width}, {phi.half_width}]"
            )
        fn = phi.eval_at
        align = phi.step
    elif isinstance(phi, Expression):
        fn = phi.bind("t")
    else:
        fn = phi
    integrand = lambda t: np.abs(fn(t)) * mu.density(t)
    means = []
    for r in radii:
        if r <= 0:
            raise ValueError("radii must be positive")
        total = integrate(integrand, -r, r, quad, align=align)
        means.append(max(float(total), 0.0) / mass(mu, r, quad))
    return ErgodicityReport(
        radii=tuple(radii),
        means=tuple(means),
        trend_slope=_trend_slope(radii, means),
        verdict=_classify(means, zero_tol),
    )


# --- hypothesis probes -----------------------------------------------------

M1_WINDOWS = tuple(range(2, 51))
M1_SHIFTS = (1.0, -1.0, math.pi, -math.pi, 10.0, -10.0)
M1_INTERVAL = (-1.0, 1.0)


@dataclass(frozen=True)
class HypothesisReport:
    m1_ratio: float
    m1_verdict: str
    m2_pair: tuple[float, float] | None
    m2_verdict: str
    h0_lambda_bound: float
    h0_translation: bool
    h0_limsup_radii: tuple[float, ...]
    h0_limsup_estimate: tuple[float, ...]
    h0_verdict: str
    windows: str = ""
    shifts: tuple[float, ...] = ()

    def __post_init__(self):
        vals = [self.m1_ratio, self.h0_lambda_bound, *self.h0_limsup_estimate]
        if self.m2_pair is not None:
            vals.extend(self.m2_pair)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("hypothesis ratios must be finite and non-negative")


def _unbounded_trend(ratios: np.ndarray, factor: float = 1e3) -> bool:
    # a family ratio that keeps climbing by orders of magnitude signals no uniform constant
    head = ratios[: max(1, len(ratios) // 4)]
    tail = ratios[-max(1, len(ratios) // 4) :]
    return bool(np.min(tail) > factor * np.max(head))


def _check_increasing(beta: Callable, t: np.ndarray) -> None:
    vals = beta(t)
    if not np.all(np.diff(vals) > 0):
        i = int(np.argmin(np.diff(vals)))
        raise MeasureError(f"beta is not strictly increasing near t = {t[i]:g}")


def pushforward_ratio(mu: MeasureSpec, beta: Callable, t: np.ndarray, span: float):
    """Pointwise density ratio of mu_beta to mu on ``t``.

    Returns ``(ratio, is_translation)``.  For a pure translation
    beta(t) = t + c the ratio is rho(t - c)/rho(t) in closed form; otherwise
    the inverse of beta is tabulated on [-span, span] and differentiated.
    """
    probe = np.linspace(-span, span, 2001)
    shift = beta(probe) - probe
    if np.max(np.abs(shift - shift[0])) <= 1e-12 * max(1.0, abs(shift[0])):
        c = float(shift[0])
        return mu.density(t - c) / mu.density(t), True
    s = np.linspace(-span, span, int(200 * span) + 1)
    bs = beta(s)
    _check_increasing(beta, s)
    if t.min() < bs[0] or t.max() > bs[-1]:
        raise MeasureError("beta does not cover the probe range; widen the span")
    inv = np.interp(t, bs, s)
    d = 1e-5
    dbeta = (beta(inv + d) - beta(inv - d)) / (2 * d)
    return mu.density(inv) / (dbeta * mu.density(t)), False


def check_hypotheses(
    mu: MeasureSpec,
    beta: Callable,
    p_delay: float = 0.0,
    quad: QuadratureConfig = DEFAULT_QUAD,
    radii: Sequence[float] = (5.0, 10.0, 20.0, 40.0),
    windows: Sequence[int] = M1_WINDOWS,
    shifts: Sequence[float] = M1_SHIFTS,
) -> HypothesisReport:
    """Sampled evidence for the translation (M1), reflection (M2) and
    pushforward (h0) hypotheses.

    ``beta`` is a vectorised callable (already bound to ``p_delay``); the
    delay is accepted for reporting symmetry with the configuration.
    """
    span = max(60.0, 2.0 * max(radii) + 2.0 * abs(p_delay) + 10.0)
    _check_increasing(beta, np.linspace(-span, span, 24001))

    base = np.array([window_mass(mu, k, k + 1, quad) for k in windows])
    mu.check_positive(np.linspace(-span, span, 24001))

    # (M1): windows [k, k+1], k >= 2, are disjoint from I = [-1, 1]
    m1 = np.array(
        [[window_mass(mu, k + tau, k + 1 + tau, quad) for tau in shifts] for k in windows]
    ) / base[:, None]
    m1_ratio = float(np.max(m1))
    m1_verdict = VIOLATED if _unbounded_trend(np.max(m1, axis=1)) else SUPPORTED

    # (M2): least n with m = 0, on the windows and their mirror images
    mirror = np.array([window_mass(mu, -k - 1, -k, quad) for k in windows])
    ratios = np.concatenate([mirror / base, base / mirror])
    if np.all(np.isfinite(ratios)):
        m2_pair = (0.0, float(np.max(ratios)))
    else:
        deficit = np.maximum(np.concatenate([mirror - base, base - mirror]), 0.0)
        m2_pair = (float(np.max(deficit)), 1.0)
    m2_verdict = (
        VIOLATED
        if _unbounded_trend(mirror / base) or _unbounded_trend(base / mirror)
        else SUPPORTED
    )

    # (h0)
    radii = sorted(float(r) for r in radii)
    T_of = lambda r: abs(float(beta(np.array([r]))[0])) + abs(float(beta(np.array([-r]))[0]))
    T_max = max(T_of(r) for r in radii)
    grid = np.linspace(-T_max, T_max, int(100 * T_max) + 1)
    ratio, translation = pushforward_ratio(mu, beta, grid, span=T_max + 2.0 * abs(p_delay) + 10.0)
    lam_bound = float(np.max(ratio))
    tail_radii = tuple(radii[-3:])
    estimates = []
    for r in tail_radii:
        Tr = T_of(r)
        S = float(np.max(ratio[np.abs(grid) <= Tr + 1e-12]))
        estimates.append(mass(mu, Tr, quad) * S / mass(mu, r, quad))
    h0_verdict = (
        SUPPORTED if np.all(np.isfinite(estimates)) and estimates[-1] <= 1.5 * estimates[0] else VIOLATED
    )

    return HypothesisReport(
        m1_ratio=m1_ratio,
        m1_verdict=m1_verdict,
        m2_pair=m2_pair,
        m2_verdict=m2_verdict,
        h0_lambda_bound=lam_bound,
        h0_translation=translation,
        h0_limsup_radii=tail_radii,
        h0_limsup_estimate=tuple(estimates),
        h0_verdict=h0_verdict,
        windows=f"[k, k+1], k = {windows[0]}..{windows[-1]} (and mirrors for M2)",
        shifts=tuple(shifts),
    )
