"""Closed-form sample-size, design-effect and complexity calculators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .errors import GridTooSmall, ValidationError

# Fraction of cells shared by two 3x3 windows shifted (i, j) cells apart.
WINDOW_OVERLAP = {
    (i, j): Fraction((3 - i) * (3 - j), 9) for i in range(3) for j in range(3)
}

LOG10_2 = math.log10(2.0)


def effective_samples(n_rows: int, n_cols: int, T: int) -> int:
    """Pooled LENS length ``T * (n_rows - 2) * (n_cols - 2)``."""
    if n_rows < 3 or n_cols < 3:
        raise GridTooSmall(f"grid {n_rows}x{n_cols} has no interior window")
    if T < 1:
        raise ValidationError("T must be >= 1")
    return T * (n_rows - 2) * (n_cols - 2)


def design_effect_1d(rho) -> float:
    """``1 + 2 * sum(rho_k)`` truncated at the length of ``rho``."""
    rho = [float(r) for r in rho]
    if not all(math.isfinite(r) for r in rho):
        raise ValidationError("lag correlations must be finite")
    de = 1.0 + 2.0 * math.fsum(rho)
    if de <= 0:
        warnings.warn(f"design effect {de:.4g} <= 0: inadmissible correlation sequence",
                      RuntimeWarning, stacklevel=2)
    return de


def variance_inflation_factor(rho, n_rep: int) -> float:
    """Finite-sample form ``1 + 2 * sum_k rho_k * (1 - k / n_rep)``.

    ``rho[k-1]`` is the lag-k correlation; lags are used up to ``len(rho)``.
    """
    if n_rep < 1:
        raise ValidationError("n_rep must be >= 1")
    return 1.0 + 2.0 * math.fsum(
        float(r) * (1.0 - k / n_rep) for k, r in enumerate(rho, start=1)
    )


def design_effect_window(nx: int, ny: int) -> float:
    """Design effect of overlapping 3x3 windows on an ``nx`` by ``ny`` window lattice.

    Sums the overlap table over the quadrant ``i, j >= 0`` (excluding the
    zero shift) with finite-lattice weights ``(1 - i/nx) * (1 - j/ny)``.
    """
    if nx < 1 or ny < 1:
        raise ValidationError("window counts must be >= 1")
    total = Fraction(0)
    for (i, j), rho in WINDOW_OVERLAP.items():
        if (i, j) == (0, 0):
            continue
        wx = max(Fraction(0), 1 - Fraction(i, nx))
        wy = max(Fraction(0), 1 - Fraction(j, ny))
        total += rho * wx * wy
    return float(1 + 2 * total)


def design_effect_window_limit() -> float:
    """Infinite-lattice limit of :func:`design_effect_window`."""
    return float(1 + 2 * sum(r for k, r in WINDOW_OVERLAP.items() if k != (0, 0)))


def effective_samples_dependent(n_rows: int, n_cols: int, T: int) -> float:
    """``L / DE`` with the sliding-window design effect."""
    L = effective_samples(n_rows, n_cols, T)
    return L / design_effect_window(n_rows - 2, n_cols - 2)


def error_reduction(N: int, T: int) -> float:
    """Per-edge standard-error reduction ``sqrt(L_eff / T)`` on an N x N grid."""
    return math.sqrt(effective_samples_dependent(N, N, T) / T)


@dataclass(frozen=True)
class Complexity:
    naive_log10_cost: float
    castle_log10_cost: float
    naive_exponent: int  # parent-set search space is 2**naive_exponent
    castle_exponent: int
    log10_search_ratio: float


def complexity_compare(N: int, V: int, T: int = 1) -> Complexity:
    """Worst-case PC costs for the flattened grid versus the LENS problem.

    Costs are ``T N^6 V^3 2^(N^2 V)`` and ``T N^2 V^3 2^(9V)``, evaluated in
    log10 so they never overflow.
    """
    if N < 1 or V < 1 or T < 1:
        raise ValidationError("N, V, T must be >= 1")
    p_naive = N * N * V
    p_castle = 9 * V
    naive = math.log10(T) + 6 * math.log10(N) + 3 * math.log10(V) + p_naive * LOG10_2
    castle = math.log10(T) + 2 * math.log10(N) + 3 * math.log10(V) + p_castle * LOG10_2
    return Complexity(naive, castle, p_naive, p_castle, (p_naive - p_castle) * LOG10_2)
