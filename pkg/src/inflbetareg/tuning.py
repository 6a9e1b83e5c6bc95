"""Data-driven selection of the robustness tuning constants.

The selector walks an equally spaced grid of candidate tuning constants,
standardizes the estimates at each grid point, and measures the jump
between consecutive points with the standardized quadratic variation
(SQV).  It prefers the smallest constant at which the estimates have
stopped moving: full efficiency when the data are clean, robustness when
they are not.

Selection runs separately for the discrete and continuous model parts,
each with its own grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "TuningGrid",
    "TuningTrace",
    "NonConvergenceError",
    "sqv",
    "standardized_estimates",
    "default_grids",
    "select_alpha",
]


class NonConvergenceError(RuntimeError):
    """Raised by fit callables when an estimate is unavailable."""


@dataclass(frozen=True)
class TuningGrid:
    """Grid geometry and stability thresholds for the selector.

    Phase one scans ``start`` to ``first_phase_end``; follow-up windows
    hold ``m + 1`` points and may extend to ``alpha_max``.  ``L`` is the
    SQV stability threshold.
    """

    start: float
    first_phase_end: float
    spacing: float
    alpha_max: float
    L: float = 0.02
    m: int = 3

    def __post_init__(self):
        if not 0.0 <= self.start < self.first_phase_end <= self.alpha_max:
            raise ValueError("need 0 <= start < first_phase_end <= alpha_max")
        if self.spacing <= 0 or self.L <= 0:
            raise ValueError("spacing and L must be positive")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    def points(self, lo: float, hi: float) -> list[float]:
        count = int(round((hi - lo) / self.spacing))
        return [round(lo + k * self.spacing, 10) for k in range(count + 1)]


@dataclass
class TuningTrace:
    """Record of a selector run: what was evaluated and what was chosen."""

    evaluated_alphas: list = field(default_factory=list)
    sqv_values: list = field(default_factory=list)  # (alpha_k, alpha_k+1, sqv or None)
    chosen_alpha: float = 0.0
    fallback_to_zero: bool = False
    failed_alphas: list = field(default_factory=list)


def sqv(z_k, z_k1) -> float:
    """Standardized quadratic variation between two standardized estimates."""
    z_k = np.asarray(z_k, dtype=float)
    z_k1 = np.asarray(z_k1, dtype=float)
    if z_k.shape != z_k1.shape or z_k.ndim != 1 or z_k.size < 1:
        raise ValueError("inputs must be vectors of identical length")
    return float(np.linalg.norm(z_k - z_k1) / z_k.size)


def standardized_estimates(estimates, ses, n: int) -> np.ndarray:
    """Coordinate-wise estimate / (sqrt(n) * se)."""
    estimates = np.asarray(estimates, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if np.any(ses <= 0.0) or not np.all(np.isfinite(ses)):
        raise ValueError("standard errors must be positive and finite")
    return estimates / (np.sqrt(float(n)) * ses)


def default_grids() -> tuple:
    """Recommended grids: ``(continuous, discrete)``."""
    continuous = TuningGrid(start=0.0, first_phase_end=0.2, spacing=0.02, alpha_max=0.5)
    discrete = TuningGrid(start=0.0, first_phase_end=0.5, spacing=0.05, alpha_max=1.0)
    return continuous, discrete


def select_alpha(
    part: str,
    fit: Callable,
    grid: Optional[TuningGrid],
    n_obs: int,
    smallest_failing: bool = True,
) -> TuningTrace:
    """Run the grid-stability selection for one model part.

    ``fit(alpha)`` must return ``(estimates, ses)`` and may raise
    :class:`NonConvergenceError`; a failed fit makes both neighbouring
    stability conditions fail.  Phase one scans the long grid; if any
    consecutive pair jumps by ``L`` or more, scanning restarts on short
    windows of ``m + 1`` points placed after the failing pair (the first
    failing pair by default, the last with ``smallest_failing=False``).
    A window that fits entirely below ``alpha_max`` and is stable
    everywhere selects its left endpoint.  Running out of grid triggers
    one restart from zero, and a second exhaustion falls back to zero.
    """
    if grid is None:
        grid = default_grids()[0 if part == "continuous" else 1]
    trace = TuningTrace()
    z_cache: dict = {}

    def z_at(alpha: float):
        if alpha not in z_cache:
            trace.evaluated_alphas.append(alpha)
            try:
                estimates, ses = fit(alpha)
                z_cache[alpha] = standardized_estimates(estimates, ses, n_obs)
            except NonConvergenceError:
                z_cache[alpha] = None
                trace.failed_alphas.append(alpha)
        return z_cache[alpha]

    def scan(points: Sequence[float]):
        """Return the first (or last) failing pair, or None when all stable."""
        failing = None
        for a_lo, a_hi in zip(points[:-1], points[1:]):
            z_lo, z_hi = z_at(a_lo), z_at(a_hi)
            value = None if (z_lo is None or z_hi is None) else sqv(z_lo, z_hi)
            trace.sqv_values.append((a_lo, a_hi, value))
            if value is None or value >= grid.L:
                failing = (a_lo, a_hi)
                if smallest_failing:
                    return failing
        return failing

    phase1 = grid.points(grid.start, grid.first_phase_end)
    failing = scan(phase1)
    if failing is None:
        trace.chosen_alpha = grid.start
        return trace

    alpha_start = round(failing[1] + grid.spacing, 10)
    restarted = False
    while True:
        window_end = round(alpha_start + grid.m * grid.spacing, 10)
        if window_end > grid.alpha_max + 1e-12:
            if not restarted:
                restarted = True
                alpha_start = 0.0
                continue
            trace.chosen_alpha = 0.0
            trace.fallback_to_zero = True
            return trace
        failing = scan(grid.points(alpha_start, window_end))
        if failing is None:
            trace.chosen_alpha = alpha_start
            return trace
        alpha_start = round(failing[1] + grid.spacing, 10)
