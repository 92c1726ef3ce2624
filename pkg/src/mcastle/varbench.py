"""Spatial VAR(1) benchmark systems with known ground-truth stencils.

A neighborhood dynamics matrix (NDM) holds one 3x3 coefficient block per
(target variable, source variable) pair. Tiling it over a toroidal grid gives
the global transition matrix ``A`` of size ``V*N*N``; state vectors are
ordered ``v * N*N + i * N + j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .core import COEFFICIENT, Edge, GridTensor, StencilGraph, derive_seed, make_rng
from .errors import (
    ConfigError,
    GenerationExhausted,
    GridTooSmall,
    Instability,
    NonConvergence,
    ValidationError,
)


@dataclass(frozen=True, eq=False)
class NDM:
    """``blocks[v, u, dr + 1, dc + 1]``: effect of variable ``u`` at offset
    ``(dr, dc)`` from the center on center variable ``v`` one step later."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=np.float64, copy=True)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2:] != (3, 3):
            raise ValidationError(f"NDM blocks must be (V, V, 3, 3), got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValidationError("NDM coefficients must be finite")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def V(self) -> int:
        return self.blocks.shape[0]

    @classmethod
    def zeros(cls, V: int) -> "NDM":
        return cls(np.zeros((V, V, 3, 3)))

    def nonzero_magnitudes(self) -> np.ndarray:
        b = np.abs(self.blocks)
        return b[b != 0]

    def to_dict(self) -> dict:
        return {"V": self.V, "blocks": self.blocks.tolist()}


@dataclass(frozen=True)
class GenSpec:
    N: int = 4
    V: int = 1
    E: int = 1
    s_star: float = 0.1
    rho_target: float = 0.95
    T: int = 1000
    noise_sigma: float = 0.1
    seed: int = 0
    max_attempts: int = 1000
    burn_in: int = 200

    def __post_init__(self):
        if self.V < 1 or self.N < 3:
            raise ConfigError("GenSpec needs V >= 1 and N >= 3")
        if not 1 <= self.E <= 9 * self.V ** 2:
            raise ConfigError(f"E must be in [1, 9V^2 = {9 * self.V ** 2}]")
        if self.s_star < 0 or not 0 < self.rho_target < 1:
            raise ConfigError("need s_star >= 0 and rho_target in (0, 1)")
        if self.noise_sigma <= 0 or self.T < 1 or self.max_attempts < 1 or self.burn_in < 0:
            raise ConfigError("need noise_sigma > 0, T >= 1, max_attempts >= 1, burn_in >= 0")

    @property
    def density(self) -> float:
        return self.E / (9 * self.V ** 2)

    def replicate(self, index: int) -> "GenSpec":
        """Spec for replicate ``index`` with its own derived seed."""
        return _replace(self, seed=derive_seed(self.seed, index))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown GenSpec fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "GenSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"spec is not valid JSON: {exc}") from exc


def _replace(spec, **kw):
    d = spec.to_dict()
    d.update(kw)
    return type(spec)(**d)


def expand_to_global(ndm: NDM, N: int, M: int | None = None) -> np.ndarray:
    """Tile the NDM over a toroidal ``N x M`` grid."""
    M = N if M is None else M
    if N < 3 or M < 3:
        raise GridTooSmall("toroidal grids smaller than 3 alias Moore neighbors")
    V = ndm.V
    NM = N * M
    A = np.zeros((V * NM, V * NM))
    ii, jj = np.meshgrid(np.arange(N), np.arange(M), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    for v, u, r, c in zip(*np.nonzero(ndm.blocks)):
        dr, dc = r - 1, c - 1
        rows = v * NM + ii * M + jj
        cols = u * NM + ((ii + dr) % N) * M + (jj + dc) % M
        A[rows, cols] = ndm.blocks[v, u, r, c]
    return A


def spectral_radius(A, tol: float = 1e-13, max_iter: int = 100_000) -> float:
    """Largest eigenvalue modulus by the power method on the matrix itself.

    Uses ``rho = lim |A^k|^(1/k)`` with ``k`` doubling each step (repeated
    squaring with renormalization). Working on whole matrix powers rather than
    a single vector makes complex-conjugate and other equal-modulus dominant
    eigenvalues harmless: they only make ``|A^k| / rho^k`` oscillate within
    bounds, which the ``1/k`` root then averages away.
    """
    B = np.array(A, dtype=np.float64, copy=True)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"spectral_radius needs a square matrix, got {B.shape}")
    if B.size == 0:
        return 0.0
    nrm = np.linalg.norm(B)
    if nrm == 0:
        return 0.0
    B /= nrm
    log_sum = math.log(nrm)  # log of the scale carried outside B; A^k = e^log_sum * B
    k = 1.0
    prev = log_sum
    settled = 0
    for _ in range(min(max_iter, 1000)):
        B = B @ B
        k *= 2.0
        log_sum *= 2.0
        nrm = np.linalg.norm(B)
        if nrm == 0:
            return 0.0
        B /= nrm
        log_sum += math.log(nrm)
        est = log_sum / k
        settled = settled + 1 if abs(est - prev) < tol else 0
        if settled >= 2:
            return math.exp(est)
        prev = est
    raise NonConvergence("spectral radius iteration did not settle")


def ground_truth_graph(ndm: NDM) -> StencilGraph:
    edges = [
        Edge(int(r) - 1, int(c) - 1, int(u), int(v), float(ndm.blocks[v, u, r, c]), None)
        for v, u, r, c in zip(*np.nonzero(ndm.blocks))
    ]
    return StencilGraph(ndm.V, tuple(edges), COEFFICIENT)


def _draw_ndm(spec: GenSpec, rng: np.random.Generator) -> np.ndarray:
    V, E = spec.V, spec.E
    n_slots = 9 * V * V
    # slot s encodes (v, u, position) as ((v * V) + u) * 9 + position
    forced = [(v * V + v) * 9 + 4 for v in range(V)] if E >= V else []
    rest = np.setdiff1d(np.arange(n_slots), forced)
    chosen = np.concatenate([forced, rng.choice(rest, size=E - len(forced), replace=False)])
    mags = rng.uniform(spec.s_star, 1.0, size=E)
    signs = rng.choice([-1.0, 1.0], size=E)
    blocks = np.zeros(n_slots)
    blocks[chosen.astype(int)] = mags * signs
    return blocks.reshape(V, V, 3, 3)


def generate_system(spec: GenSpec) -> tuple[NDM, np.ndarray]:
    """Accept-reject sampling of a stable NDM with E active links.

    Each attempt draws link slots (every variable's own center slot is always
    active when E >= V), magnitudes uniform in ``[s_star, 1]`` with random
    sign, rescales to ``rho_target`` when the spectral radius reaches it, and
    rejects when rescaling pushed any coefficient below ``s_star``.
    """
    rng = make_rng(derive_seed(spec.seed, 0))
    for _ in range(spec.max_attempts):
        blocks = _draw_ndm(spec, rng)
        A = expand_to_global(NDM(blocks), spec.N)
        rho = spectral_radius(A)
        if rho >= spec.rho_target:
            factor = spec.rho_target / rho
            blocks = blocks * factor
            A = A * factor
        mags = np.abs(blocks[blocks != 0])
        if mags.min() >= spec.s_star:
            return NDM(blocks), A
    raise GenerationExhausted(
        f"no stable system with V={spec.V}, E={spec.E} after {spec.max_attempts} attempts",
        attempts=spec.max_attempts,
    )


def simulate(A, spec: GenSpec, *, max_abs: float = 1e10) -> GridTensor:
    """Run ``x_t = A x_{t-1} + eps_t`` and return the last ``spec.T`` states.

    ``x_0`` and the innovations are i.i.d. N(0, noise_sigma^2); the first
    ``burn_in`` steps are discarded.
    """
    A = np.asarray(A, dtype=np.float64)
    N, V, T = spec.N, spec.V, spec.T
    n = V * N * N
    if A.shape != (n, n):
        raise ValidationError(f"A has shape {A.shape}, expected {(n, n)}")
    rng = make_rng(derive_seed(spec.seed, 1))
    steps = spec.burn_in + T
    x = rng.normal(0.0, spec.noise_sigma, size=n)
    eps = rng.normal(0.0, spec.noise_sigma, size=(steps, n))
    At = A.T.copy()
    out = np.empty((T, n))
    for t in range(steps):
        x = x @ At + eps[t]
        if not np.all(np.abs(x) <= max_abs):
            raise Instability(f"state exceeded {max_abs:g} at step {t}")
        if t >= spec.burn_in:
            out[t - spec.burn_in] = x
    return GridTensor(out.reshape(T, V, N, N).transpose(2, 3, 1, 0))


def generate_chain_system(V: int, coefficient: float, seed: int, N: int = 4) -> tuple[NDM, np.ndarray]:
    """Chain ``0 -> 1 -> ... -> V-1``: each variable's center has exactly one
    parent, variable ``v - 1`` at a random Moore position."""
    if V < 2:
        raise ValidationError("a chain needs V >= 2")
    rng = make_rng(derive_seed(seed, 2))
    blocks = np.zeros((V, V, 3, 3))
    positions = rng.integers(0, 9, size=V - 1)
    for v in range(1, V):
        r, c = divmod(int(positions[v - 1]), 3)
        blocks[v, v - 1, r, c] = coefficient
    ndm = NDM(blocks)
    return ndm, expand_to_global(ndm, N)


