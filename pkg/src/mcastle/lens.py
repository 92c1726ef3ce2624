"""Locally encoded neighborhood structure (LENS).

Every interior Moore window of the grid is treated as a replicate of the same
local mechanism. Its 3x3xV block of time series is appended to a shared bank,
so the LENS is a pure re-indexing of the input (nothing is averaged away).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import GridTensor
from .errors import GridTooSmall, TooFewSamples


@dataclass(frozen=True, eq=False)
class LensTensor:
    """Pooled replicate bank indexed ``[dr + 1, dc + 1, v, l]``.

    Sample ``l`` comes from window ``l // T`` (interior cells in row-major
    order) at time ``l % T``.
    """

    values: np.ndarray
    T: int
    n_rep: int
    n_rows: int
    n_cols: int

    @property
    def V(self) -> int:
        return self.values.shape[2]

    @property
    def L(self) -> int:
        return self.values.shape[3]

    @property
    def usable_rows(self) -> int:
        return self.n_rep * (self.T - 1)

    def window_of(self, l: int) -> tuple[int, int, int]:
        """Grid cell ``(i, j)`` at the window center and time ``t`` of sample ``l``."""
        w, t = divmod(int(l), self.T)
        wi, wj = divmod(w, self.n_cols - 2)
        return wi + 1, wj + 1, t

    def window_index_map(self) -> np.ndarray:
        """``(L, 3)`` array of ``(i, j, t)`` for every sample."""
        l = np.arange(self.L)
        w, t = np.divmod(l, self.T)
        wi, wj = np.divmod(w, self.n_cols - 2)
        return np.stack([wi + 1, wj + 1, t], axis=1)


@dataclass(frozen=True, eq=False)
class LaggedDesign:
    """Row-aligned lag-1 regression design built from a LENS.

    ``X[:, c]`` is candidate ``c = position_index(dr, dc) * V + u`` at time
    ``t - 1`` and ``Y[:, v]`` is center variable ``v`` at time ``t``.
    """

    X: np.ndarray
    Y: np.ndarray
    V: int
    n_rep: int
    T: int

    @property
    def n(self) -> int:
        return self.X.shape[0]


def build_lens(x: GridTensor) -> LensTensor:
    n_rows, n_cols, V, T = x.shape
    if n_rows < 3 or n_cols < 3:
        raise GridTooSmall(f"grid {n_rows}x{n_cols} cannot hold a 3x3 Moore window")
    if T < 2:
        raise TooFewSamples(f"need T >= 2 for lag-1 pairs, got T={T}")
    # (n_rows-2, n_cols-2, V, T, 3, 3)
    win = sliding_window_view(x.values, (3, 3), axis=(0, 1))
    n_rep = (n_rows - 2) * (n_cols - 2)
    values = np.ascontiguousarray(win.transpose(4, 5, 2, 0, 1, 3)).reshape(3, 3, V, n_rep * T)
    values.setflags(write=False)
    return LensTensor(values, T, n_rep, n_rows, n_cols)


def lens_lagged_view(lens: LensTensor) -> LaggedDesign:
    """Pair candidates at ``t - 1`` with centers at ``t`` inside each window.

    The first time step of every window block is dropped rather than lagged
    across the seam with the previous window, giving ``n_rep * (T - 1)`` rows.
    """
    V, T, n_rep = lens.V, lens.T, lens.n_rep
    blocks = lens.values.reshape(3, 3, V, n_rep, T)
    X = blocks[..., :-1].transpose(3, 4, 0, 1, 2).reshape(n_rep * (T - 1), 9 * V)
    Y = blocks[1, 1, :, :, 1:].transpose(1, 2, 0).reshape(n_rep * (T - 1), V)
    return LaggedDesign(np.ascontiguousarray(X), np.ascontiguousarray(Y), V, n_rep, T)
