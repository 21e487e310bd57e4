"""Synthetic objectives, noise and regret bookkeeping.

Objectives live on the rescaled square ``[-0.5, 0.5]^2`` and are min-max
normalised into ``[0, 1]`` so the global maximum is exactly 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import optimize


def himmelblau_raw(x1, x2):
    """Negated Himmelblau function; maximum 0 at four points of [-5, 5]^2."""
    return -((x1 ** 2 + x2 - 11) ** 2 + (x1 + x2 ** 2 - 7) ** 2)


def goldstein_raw(x1, x2):
    """Negated Goldstein-Price function; maximum -3 at (0, -1) on [-2, 2]^2."""
    a = 1 + (x1 + x2 + 1) ** 2 * (19 - 14 * x1 + 3 * x1 ** 2 - 14 * x2 + 6 * x1 * x2 + 3 * x2 ** 2)
    b = 30 + (2 * x1 - 3 * x2) ** 2 * (
        18 - 32 * x1 + 12 * x1 ** 2 + 48 * x2 - 36 * x1 * x2 + 27 * x2 ** 2
    )
    return -(a * b)


# name -> (raw function, native half-width, analytic maximum)
_RAW = {
    "himmelblau": (himmelblau_raw, 5.0, 0.0),
    "goldstein": (goldstein_raw, 2.0, -3.0),
}

RESCALED_BOUNDS = ((-0.5, 0.5), (-0.5, 0.5))


@dataclass(frozen=True)
class Objective:
    """Rescaled 2-D objective. Call with points of shape ``(2,)`` or ``(n, 2)``."""

    name: str
    raw: Callable
    scale: float
    f_min: float
    f_max: float
    optimum: float = 1.0

    def native(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * (2.0 * self.scale)

    def __call__(self, x):
        p = self.native(x)
        v = (self.raw(p[..., 0], p[..., 1]) - self.f_min) / (self.f_max - self.f_min)
        return float(v) if np.ndim(v) == 0 else v

    @property
    def bounds(self):
        return RESCALED_BOUNDS


def _grid_min(raw, scale: float, grid_n: int) -> float:
    g = np.linspace(-scale, scale, grid_n)
    vals = raw(g[:, None], g[None, :])
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    # polish the grid minimiser so off-grid points cannot undershoot f_min
    res = optimize.minimize(
        lambda p: raw(p[0], p[1]),
        x0=[g[i], g[j]],
        bounds=[(-scale, scale)] * 2,
        method="L-BFGS-B",
    )
    return float(min(vals[i, j], res.fun))


@lru_cache(maxsize=None)
def make_rescaled(name: str, grid_n: int = 1025) -> Objective:
    """Rescaled objective with ``f_min`` from a ``grid_n`` x ``grid_n`` scan."""
    if grid_n < 256:
        raise ValueError("grid_n must be >= 256")
    try:
        raw, scale, f_max = _RAW[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(_RAW)}") from None
    return Objective(name, raw, scale, _grid_min(raw, scale, grid_n), f_max)


# -- noise ---------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "uniform"
    sigma: float = 0.05
    clip: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "truncated-gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """``none``, ``uniform:0.05`` or ``truncated-gaussian:0.1[:0.3]``."""
        parts = text.split(":")
        if parts[0] == "none":
            return cls("none", 0.0)
        if len(parts) < 2:
            raise ValueError(f"noise spec {text!r} needs a sigma")
        clip = float(parts[2]) if len(parts) > 2 else None
        return cls(parts[0], float(parts[1]), clip)

    def __str__(self) -> str:
        if self.kind == "none":
            return "none"
        s = f"{self.kind}:{self.sigma!r}"
        return s + (f":{self.clip!r}" if self.clip is not None else "")


def draw_noise(spec: NoiseSpec, rng: np.random.Generator) -> float:
    if spec.kind == "none" or spec.sigma == 0:
        return 0.0
    if spec.kind == "uniform":
        return float(rng.uniform(-spec.sigma, spec.sigma))
    clip = 3.0 * spec.sigma if spec.clip is None else spec.clip
    while True:
        e = float(rng.normal(0.0, spec.sigma))
        if abs(e) <= clip:
            return e


def add_noise(f: Callable, spec: NoiseSpec, rng: np.random.Generator) -> Callable:
    """Noisy evaluator ``x -> f(x) + eps`` drawing from its own ``rng``."""

    def noisy(*args):
        return f(*args) + draw_noise(spec, rng)

    noisy.noiseless = f
    return noisy


# -- contextual wrapper --------------------------------------------------


class ContextualObjective:
    """2-D objective seen as ``f(z, a)``: first coordinate is the context.

    Contexts are i.i.d. uniform on [-0.5, 0.5] from a dedicated stream.
    """

    def __init__(self, base: Objective, grid: int = 4096):
        self.base = base
        self.grid = grid
        self._a = np.linspace(-0.5, 0.5, grid)

    def __call__(self, z, a):
        z = float(np.asarray(z).reshape(-1)[0])
        a = float(np.asarray(a).reshape(-1)[0])
        return self.base(np.array([z, a]))

    def contexts(self, seed: int):
        rng = np.random.default_rng(seed)
        return lambda t: np.array([rng.uniform(-0.5, 0.5)])

    def best(self, z) -> float:
        """Per-context optimum: grid scan polished by a bounded 1-D search."""
        return self.best_arm(z)[1]

    def best_arm(self, z) -> tuple[float, float]:
        z = float(np.asarray(z).reshape(-1)[0])
        vals = self.base(np.column_stack([np.full(self.grid, z), self._a]))
        k = int(np.argmax(vals))
        h = self._a[1] - self._a[0]
        lo, hi = max(-0.5, self._a[k] - h), min(0.5, self._a[k] + h)
        res = optimize.minimize_scalar(
            lambda a: -self.base(np.array([z, a])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -res.fun > vals[k]:
            return float(res.x), float(-res.fun)
        return float(self._a[k]), float(vals[k])


def contextual_wrap(objective: Objective, grid: int = 4096) -> ContextualObjective:
    return ContextualObjective(objective, grid)


# -- regret ---------------------------------------------------------------


@dataclass
class RegretTrace:
    instantaneous: np.ndarray
    cumulative: np.ndarray = field(init=False)
    average: np.ndarray = field(init=False)
    best_so_far: np.ndarray
    optimum: float = 1.0

    def __post_init__(self):
        self.instantaneous = np.asarray(self.instantaneous, dtype=float)
        self.cumulative = np.cumsum(self.instantaneous)
        self.average = self.cumulative / np.arange(1, self.instantaneous.size + 1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "inst_regret", "cum_regret", "avg_regret", "best_so_far"])
            for t in range(self.instantaneous.size):
                w.writerow(
                    [
                        t + 1,
                        repr(float(self.instantaneous[t])),
                        repr(float(self.cumulative[t])),
                        repr(float(self.average[t])),
                        repr(float(self.best_so_far[t])),
                    ]
                )


def regret_accumulate(values, optima) -> RegretTrace:
    """Regret from noiseless values of the played arms.

    ``optima`` is the (per-round, for contextual runs) optimal value; a scalar
    is broadcast.
    """
    values = np.asarray(values, dtype=float)
    optima = np.broadcast_to(np.asarray(optima, dtype=float), values.shape)
    return RegretTrace(
        optima - values,
        best_so_far=np.maximum.accumulate(values) if values.size else values,
        optimum=float(optima.max()) if optima.size else 1.0,
    )


def uniform_play(objective: Callable, rounds: int, seed: int, dims: int = 2) -> np.ndarray:
    """Noiseless values of ``rounds`` uniformly random arms on [-0.5, 0.5]^d."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(rounds, dims))
    return np.asarray(objective(x), dtype=float)


def lipschitz_linf(objective: Objective, grid_n: int = 513) -> float:
    """Grid estimate of the Lipschitz constant w.r.t. the L-infinity metric.

    That constant is the supremum of the gradient's L1 norm; central
    differences on a fine grid plus a 5% margin.
    """
    g = np.linspace(-0.5, 0.5, grid_n)
    h = g[1] - g[0]
    X, Y = np.meshgrid(g, g, indexing="ij")
    v = objective(np.stack([X, Y], axis=-1))
    gx, gy = np.gradient(v, h, h)
    return 1.05 * float(np.max(np.abs(gx) + np.abs(gy)))
