"""Numeric solvers for the single-band minimum-MSE problem.

    minimize    sum_k w_k (1 - v_k)^2 s_k
    subject to  sum_k w_k v_k^2 s_k >= n * t,   v_k >= 1

These do not use the closed-form gain.  ``solve_numeric`` bisects on the
Lagrange multiplier of the power constraint and minimizes the Lagrangian
separately for every bin; ``grid_check`` searches a gain grid exhaustively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAMBDA_EPS = 1e-12
MAX_ITER = 200


@dataclass(frozen=True)
class BandInstance:
    weights: np.ndarray
    speech_power: np.ndarray
    noise_band_power: float
    snr_target: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.speech_power, dtype=float)
        if w.shape != s.shape or w.ndim != 1:
            raise ValueError("weights and speech_power must be equal-length vectors")
        if np.any(w < 0) or np.any(s < 0):
            raise ValueError("weights and powers must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "speech_power", s)

    @property
    def required(self) -> float:
        return self.noise_band_power * self.snr_target

    @property
    def band_power(self) -> float:
        return float(np.sum(self.weights * self.speech_power))

    def penalty(self, gains) -> np.ndarray:
        """MSE penalty; ``gains`` may carry leading batch axes."""
        return np.sum(self.weights * self.speech_power * (1.0 - gains) ** 2, axis=-1)

    def processed_power(self, gains) -> np.ndarray:
        return np.sum(self.weights * self.speech_power * gains**2, axis=-1)


def random_instance(rng: np.random.Generator, max_bins: int = 8) -> BandInstance:
    """Log-uniform powers over six decades, 1..max_bins bins, target in [1e-3, 1e3]."""
    size = int(rng.integers(1, max_bins + 1))
    return BandInstance(
        weights=rng.uniform(0.05, 1.0, size),
        speech_power=10.0 ** rng.uniform(-3, 3, size),
        noise_band_power=float(10.0 ** rng.uniform(-3, 3)),
        snr_target=float(10.0 ** rng.uniform(-3, 3)),
    )


def _bin_minimizers(a: np.ndarray, lam: float) -> np.ndarray:
    # per-bin Lagrangian a*(1-v)^2 - lam*a*v^2 is a convex quadratic for lam < 1;
    # minimize each over v >= 1 on its own
    v = np.ones_like(a)
    curv = a * (1.0 - lam)
    live = a > 0
    v[live] = np.maximum(1.0, a[live] / curv[live])
    return v


def solve_numeric(instance: BandInstance, tol: float = 1e-13) -> np.ndarray:
    """Per-bin gains from bisection on the multiplier in [0, 1 - 1e-12]."""
    if instance.required <= instance.band_power:
        return np.ones_like(instance.weights)
    a = instance.weights * instance.speech_power
    if not np.any(a > 0):
        raise ValueError("infeasible instance: no speech power in band")

    def residual(lam):
        return instance.processed_power(_bin_minimizers(a, lam)) - instance.required

    lo, hi = 0.0, 1.0 - LAMBDA_EPS
    if residual(hi) < 0:
        raise ValueError("infeasible instance: target beyond bisection bracket")
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * (1.0 - hi):
            break
    return _bin_minimizers(a, hi)


@dataclass(frozen=True)
class GridResult:
    gains: np.ndarray | None
    penalty: float
    feasible: bool
    boundary_hit: bool
    step: float


DEFAULT_RESOLUTION = {1: 20001, 2: 801, 3: 101}


def grid_check(instance: BandInstance, resolution: int | None = None,
               upper: float | None = None) -> GridResult:
    """Best feasible point on a uniform grid over ``[1, upper]**n``.

    ``boundary_hit`` is set when no grid point is feasible or the best point
    touches the upper edge, meaning the grid may be too small.
    """
    n = len(instance.weights)
    if n > 3:
        raise ValueError(f"band too large for exhaustive search ({n} bins > 3)")
    resolution = resolution or DEFAULT_RESOLUTION[n]
    if upper is None:
        upper = 2.0 * max(1.0, np.sqrt(instance.required / max(instance.band_power, 1e-300)))
    axis = np.linspace(1.0, upper, resolution)
    step = float(axis[1] - axis[0]) if resolution > 1 else 0.0
    grid = np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1).reshape(-1, n)
    ok = instance.processed_power(grid) >= instance.required
    if not np.any(ok):
        return GridResult(None, float("inf"), False, True, step)
    penalties = np.where(ok, instance.penalty(grid), np.inf)
    best = int(np.argmin(penalties))
    gains = grid[best]
    return GridResult(gains, float(penalties[best]), True,
                      bool(np.any(gains >= upper)), step)
