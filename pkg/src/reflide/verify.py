"""Checks that do not trust the solver: the equation residual of a grid
function, manufactured problems with a known exact solution, and a numerical
surrogate for the almost automorphic plus ergodic splitting of a solution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .expr import Expression, parse
from .funcspace import GridFunction
from .measure import ErgodicityReport, MeasureSpec, ergodic_mean
from .operator import ProblemSpec, assemble_F, forcing_bounds, kernel_terms_on_lattice
from .quadrature import DEFAULT_QUAD, QuadratureConfig
from .solver import ContractionReport, check_thm1, estimate_lipschitz

EDGE_BUFFER = 5.0
PAA_NOTE = (
    "evidence-grade surrogate, not a proof of almost automorphy: "
    "a trigonometric fit stands in for the almost automorphic part"
)


class VerificationError(ValueError):
    pass


class DegenerateFitError(VerificationError):
    pass


# --- residual --------------------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    window: tuple[float, float]
    sup_residual: float
    l2_residual: float
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lo, hi = self.window
        if self.sup_residual < 0:
            raise ValueError("sup residual is non-negative")
        if self.l2_residual > self.sup_residual * math.sqrt(hi - lo) * (1 + 1e-12) + 1e-300:
            raise ValueError("L2 residual exceeds sup * sqrt(window length)")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "residual"])
            for t, r in zip(self.t, self.values):
                writer.writerow([f"{t:.17g}", f"{r:.17g}"])


_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FORWARD = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def grid_derivative(u: GridFunction, idx: np.ndarray) -> np.ndarray:
    """Fourth-order derivative at grid indices ``idx`` (into ``u.samples``).

    Central differences, except within two steps of t = 0 where one-sided
    five-point stencils are used: forcing built from |t| leaves the second
    derivative of the solution discontinuous there.
    """
    s, h = u.samples, u.step
    n = u.n_half
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        j = i - n
        if 0 <= j < 2:
            out[k] = _FORWARD @ s[i : i + 5] / h
        elif -2 < j < 0:
            out[k] = -(_FORWARD @ s[i - 4 : i + 1][::-1]) / h
        else:
            out[k] = _CENTRAL @ s[i - 2 : i + 3] / h
    return out


def residual(
    ps: ProblemSpec,
    u: GridFunction,
    window: tuple[float, float] = (-10.0, 10.0),
    cfg: QuadratureConfig = DEFAULT_QUAD,
) -> ResidualReport:
    """r(t) = u'(t) - a u(t) - b u(-t) - F[u](t) on the grid points of ``window``."""
    lo, hi = float(window[0]), float(window[1])
    lim = u.half_width - EDGE_BUFFER
    if not (-lim - 1e-12 <= lo < hi <= lim + 1e-12):
        raise VerificationError(
            f"residual window [{lo:g}, {hi:g}] must lie inside [{-lim:g}, {lim:g}]"
        )
    grid = u.grid
    idx = np.flatnonzero((grid >= lo - 1e-9 * u.step) & (grid <= hi + 1e-9 * u.step))
    t = grid[idx]
    du = grid_derivative(u, idx)
    rhs = assemble_F(ps, u, t, cfg).total
    r = du - ps.a * u.samples[idx] - ps.b * u.samples[::-1][idx] - rhs
    sup = float(np.max(np.abs(r)))
    l2 = float(math.sqrt(trapezoid(r * r, t))) if len(t) > 1 else 0.0
    return ResidualReport((lo, hi), sup, min(l2, sup * math.sqrt(hi - lo)), t, r)


# --- manufactured solutions ------------------------------------------------


def derivative6(fn, t, step: float = 0.01):
    """Sixth-order central difference."""
    c = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
    return sum(ck * fn(t + (k - 3) * step) for k, ck in enumerate(c) if ck) / step


class ManufacturedForcing:
    """f(t, x1, x2) = G*(t) + eps (sin x1 - sin u*(beta(t))) with

        G*(t) = u*'(t) - a u*(t) - b u*(-t) - (kernel terms at u*)(t)

    so the grid samples of u* are an exact fixed point and f is eps-Lipschitz
    in (x1, x2).  The kernel terms are tabulated on a fine lattice.
    """

    def __init__(self, u_star: Expression, eps: float, ps: ProblemSpec, grid_u: GridFunction, cfg: QuadratureConfig):
        self.u_star = u_star
        self.eps = float(eps)
        self.beta = ps.beta
        self.grid_u = grid_u
        self.contraction: ContractionReport | None = None
        self._u = u_star.bind("t")
        self._a, self._b = ps.a, ps.b
        self._kernel = None
        if ps.has_kernel_terms:
            self._kernel = _kernel_table(ps, grid_u, cfg)

    def drive(self, t):
        t = np.asarray(t, dtype=float)
        g = derivative6(self._u, t) - self._a * self._u(t) - self._b * self._u(-t)
        if self._kernel is not None:
            spline, lim = self._kernel
            g = g - spline(np.clip(t, -lim, lim))
        return g

    def __call__(self, t, x1, x2):
        out = self.drive(t)
        if self.eps:
            out = out + self.eps * (np.sin(x1) - np.sin(self.grid_u(self.beta(t))))
        return out + np.zeros(np.broadcast(t, x1, x2).shape)


def _kernel_table(ps: ProblemSpec, x: GridFunction, cfg: QuadratureConfig, m: int = 16):
    bounds = forcing_bounds(ps, x, cfg)
    h = x.step
    # beyond T + 40/lam the table is clamped; Gamma weights it by exp(-40) or less
    n_extra = math.ceil(40.0 / ps.lam / h)
    n_k = max(1, math.ceil(bounds.kernel_cutoff / h - 1e-9))
    JF = (x.n_half + n_extra) * m
    y = (h / m) * np.arange(-JF, JF + 1)
    values = kernel_terms_on_lattice(ps, x, m, JF, n_k * m)
    return CubicSpline(y, values), float(y[-1])


def manufacture(
    u_star,
    ps_template: ProblemSpec,
    eps: float = 0.05,
    half_width: float = 40.0,
    step: float = 0.02,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    lipschitz_samples: int = 4000,
) -> ProblemSpec:
    """Problem with the template's a, b, K, h, beta, mu and a forcing f that
    makes ``u_star`` (expression in t) an exact solution.

    Raises VerificationError when the constant-Lipschitz contraction check
    fails for the result (eps too large for the geometry).
    """
    if isinstance(u_star, str):
        u_star = parse(u_star)
    extra = [v for v in u_star.free_vars if v != "t"]
    if extra:
        raise VerificationError(f"u* may only depend on t (found {', '.join(extra)})")
    fn = u_star.bind("t")
    grid_u = GridFunction.from_callable(fn, half_width, step)
    forcing = ManufacturedForcing(u_star, eps, ps_template, grid_u, cfg)
    ps = ps_template.replace(
        f=forcing,
        sources={**ps_template.sources, "f": f"manufactured(u* = {u_star}, eps = {eps:g})"},
    )
    Lh = 0.0
    if ps.has_kernel_terms:
        reach = float(np.max(np.abs(grid_u.samples))) + 5.0
        box = {"t": (-half_width, half_width), "x1": (-reach, reach), "x2": (-reach, reach)}
        Lh = estimate_lipschitz(ps.h, box, lipschitz_samples)
    report = check_thm1(ps, abs(eps), Lh, cfg)
    if not report.verdict:
        raise VerificationError(
            f"manufactured problem is not a contraction (constant {report.lhs:.4g} >= 1)"
        )
    forcing.contraction = report
    return ps


# --- almost automorphic surrogate ------------------------------------------


def _design(t: np.ndarray, omegas: Sequence[float]) -> np.ndarray:
    cols = [np.ones_like(t)]
    for w in omegas:
        cols.extend([np.sin(w * t), np.cos(w * t)])
    return np.stack(cols, axis=1)


def _fit(t, y, omegas):
    A = _design(t, omegas)
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise DegenerateFitError(
            f"trigonometric dictionary is rank deficient ({rank} < {A.shape[1]})"
        )
    return coef


def _refine(t, y, omegas):
    if not omegas:
        return []
    fun = lambda w: y - _design(t, w) @ np.linalg.lstsq(_design(t, w), y, rcond=None)[0]
    res = least_squares(fun, np.asarray(omegas), method="lm")
    return list(res.x)


def fit_trigonometric(u: GridFunction, n_peaks: int = 8, amp_floor: float = 1e-4):
    """Greedy spectral fit of {1, sin w t, cos w t} on |t| >= T/2.

    Peaks are taken from a zero-padded DFT of the current remainder until the
    next peak amplitude falls under ``amp_floor * max|u|``; all frequencies
    are then re-optimised jointly by variable projection.
    """
    t_all, y_all = u.grid, u.samples
    mask = np.abs(t_all) >= 0.5 * u.half_width
    t, y = t_all[mask], y_all[mask]
    floor = amp_floor * max(float(np.max(np.abs(y_all))), 1e-300)
    n_fft = 16 * len(t_all)
    freqs = 2 * np.pi * np.fft.rfftfreq(n_fft, u.step)
    resolution = 2 * np.pi / (2 * u.half_width)
    omegas: list[float] = []
    coef = _fit(t, y, omegas)
    for _ in range(n_peaks):
        rem = np.zeros_like(y_all)
        rem[mask] = y - _design(t, omegas) @ coef
        spec = np.abs(np.fft.rfft(rem, n_fft)) * 2.0 / len(t)
        spec[freqs < 0.5 * resolution] = 0.0
        for w in omegas:
            spec[np.abs(freqs - w) < resolution] = 0.0
        k = int(np.argmax(spec))
        if spec[k] < floor:
            break
        omegas = _refine(t, y, omegas + [float(freqs[k])])
        coef = _fit(t, y, omegas)
    return omegas, coef


def paa_diagnostics(
    u: GridFunction,
    mu: MeasureSpec,
    radii: Sequence[float] | None = None,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    n_peaks: int = 8,
) -> ErgodicityReport:
    """Ergodic means of u minus its fitted trigonometric part."""
    T = u.half_width
    radii = list(radii) if radii is not None else [T / 2**k for k in range(5, -1, -1)]
    if max(radii) > T + 1e-12:
        raise VerificationError(f"radii exceed the grid function domain [-{T:g}, {T:g}]")
    omegas, coef = fit_trigonometric(u, n_peaks)
    trend = _design(u.grid, omegas) @ coef
    rem = u.with_samples(u.samples - trend)
    scale = max(1.0, float(np.max(np.abs(u.samples))))
    rep = ergodic_mean(rem, mu, radii, cfg, zero_tol=1e-9 * scale)
    terms = ", ".join(f"{w:.6g}" for w in omegas) or "none"
    return ErgodicityReport(
        rep.radii, rep.means, rep.trend_slope, rep.verdict,
        note=f"{PAA_NOTE}; constant plus frequencies [{terms}]",
    )
