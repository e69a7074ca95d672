"""Grid functions on a symmetric interval with clamp extension."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

DEFAULT_HALF_WIDTH = 40.0
DEFAULT_STEP = 0.02


class GridMismatchError(ValueError):
    pass


def _half_count(half_width: float, step: float) -> int:
    if not (half_width > 0 and step > 0):
        raise ValueError("half width and step must be positive")
    n = round(half_width / step)
    if abs(n * step - half_width) > 1e-9 * max(1.0, half_width):
        raise ValueError(f"T/h must be an integer (T={half_width}, h={step})")
    return n


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on ``{-T, -T+h, ..., T}``; linear in between, frozen outside."""

    half_width: float
    step: float
    samples: np.ndarray

    def __post_init__(self):
        n = _half_count(self.half_width, self.step)
        samples = np.array(self.samples, dtype=float)
        if samples.shape != (2 * n + 1,):
            raise ValueError(f"expected {2 * n + 1} samples, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("grid function samples must be finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_half(self) -> int:
        return (len(self.samples) - 1) // 2

    @property
    def grid(self) -> np.ndarray:
        return self.step * np.arange(-self.n_half, self.n_half + 1)

    @classmethod
    def from_callable(cls, fn: Callable, half_width=DEFAULT_HALF_WIDTH, step=DEFAULT_STEP):
        n = _half_count(half_width, step)
        t = step * np.arange(-n, n + 1)
        return cls(half_width, step, np.broadcast_to(fn(t), t.shape))

    @classmethod
    def constant(cls, value: float, half_width=DEFAULT_HALF_WIDTH, step=DEFAULT_STEP):
        n = _half_count(half_width, step)
        return cls(half_width, step, np.full(2 * n + 1, float(value)))

    def same_grid(self, other: "GridFunction") -> bool:
        return len(self.samples) == len(other.samples) and abs(self.step - other.step) <= 1e-12 * self.step

    def eval_at(self, t):
        return np.interp(t, self.grid, self.samples)

    __call__ = eval_at

    def with_samples(self, samples: np.ndarray) -> "GridFunction":
        return GridFunction(self.half_width, self.step, samples)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "u"])
            for t, u in zip(self.grid, self.samples):
                writer.writerow([f"{t:.17g}", f"{u:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["t", "u"]:
            raise ValueError(f"{path}: expected header 't,u'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        t, u = data[:, 0], data[:, 1]
        if len(t) < 3 or len(t) % 2 == 0:
            raise ValueError(f"{path}: need an odd number (>= 3) of samples")
        step = (t[-1] - t[0]) / (len(t) - 1)
        n = (len(t) - 1) // 2
        step = round(step, 12)
        return cls(n * step, step, u)


def reflect(u: GridFunction) -> GridFunction:
    return u.with_samples(u.samples[::-1])


def sup_distance(u: GridFunction, v: GridFunction) -> float:
    if not u.same_grid(v):
        raise GridMismatchError("grid functions live on different grids")
    return float(np.max(np.abs(u.samples - v.samples)))


def eval_at(u: GridFunction, t):
    return u.eval_at(t)
