"""Parent identification on the LENS.

Only the V center variables may receive edges; the 9V lag-1 neighborhood
variables are the candidates. Two backends are provided:

* ``ci_pc_stable``: PC-stable skeleton search with partial-correlation tests
  restricted to center targets, followed by Benjamini-Hochberg control.
* ``lasso``: per-target L1-regularized least squares by coordinate descent.
  With lag-1 links only, the acyclicity constraint of score-based structure
  learners is vacuous and the problem separates per target.

The generic routines :func:`ci_select` and :func:`lasso_select` work on any
lag-1 design and are reused by the baselines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from itertools import combinations

import numpy as np
from scipy import stats

from .core import (
    CORRELATION,
    REGRESSION,
    Edge,
    GridTensor,
    LinkAssumptions,
    StencilGraph,
    candidate_of,
)
from .errors import ConfigError, InsufficientSamples, NonConvergence, SingularDesign
from .lens import LaggedDesign, LensTensor, build_lens, lens_lagged_view
from .theory import design_effect_window

BACKENDS = ("ci_pc_stable", "lasso")
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class PipConfig:
    backend: str = "ci_pc_stable"
    alpha: float = 0.01
    graph_alpha: float | None = 0.01
    max_cond_size: int = 3
    lambda_w: float = 0.01
    w_threshold: float = 0.01
    coeff_threshold: float = 0.0
    assumptions: LinkAssumptions = field(default_factory=LinkAssumptions)
    deflate_dof: bool = False
    lasso_tol: float = 1e-8
    lasso_max_sweeps: int = 10_000

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.graph_alpha is not None and not 0 < self.graph_alpha < 1:
            raise ConfigError("graph_alpha must lie in (0, 1) or be null")
        if self.max_cond_size < 0:
            raise ConfigError("max_cond_size must be >= 0")
        for name in ("lambda_w", "w_threshold", "coeff_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if isinstance(self.assumptions, dict):
            object.__setattr__(self, "assumptions", LinkAssumptions.from_dict(self.assumptions))

    def check(self, V: int) -> None:
        if self.max_cond_size > 9 * V - 1:
            raise ConfigError(f"max_cond_size {self.max_cond_size} exceeds 9V-1 = {9 * V - 1}")
        self.assumptions.check(V)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["assumptions"] = self.assumptions.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown PipConfig fields: {sorted(unknown)}")
        d = dict(d)
        if "assumptions" in d:
            try:
                d["assumptions"] = LinkAssumptions.from_dict(d["assumptions"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "PipConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def with_(self, **kw) -> "PipConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    dof: int


def _student_p(r, dof):
    r = np.clip(np.asarray(r, dtype=np.float64), -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = np.abs(r) * np.sqrt(dof / np.maximum(1.0 - r * r, 0.0))
    return np.where(np.abs(r) >= 1.0, 0.0, 2.0 * stats.t.sf(t, dof))


def partial_correlation_test(a, y, Z=None) -> CiResult:
    """Partial correlation of ``a`` and ``y`` given the columns of ``Z``.

    Both series are regressed on ``Z`` (with intercept) by least squares and
    the residuals are correlated; the p-value is two-sided Student-t with
    ``n - |Z| - 2`` degrees of freedom.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n = a.size
    Z = np.zeros((n, 0)) if Z is None else np.asarray(Z, dtype=np.float64).reshape(n, -1)
    k = Z.shape[1]
    dof = n - k - 2
    if dof <= 0:
        raise InsufficientSamples(f"{n} rows cannot support a test with |Z| = {k}")
    ra, ry = a - a.mean(), y - y.mean()
    if k:
        Zc = Z - Z.mean(axis=0)
        sv = np.linalg.svd(Zc, compute_uv=False)
        if sv[0] == 0 or sv[-1] / sv[0] < SINGULAR_TOL:
            raise SingularDesign("conditioning set is rank deficient", range(k))
        beta, *_ = np.linalg.lstsq(Zc, np.column_stack([ra, ry]), rcond=None)
        ra = ra - Zc @ beta[:, 0]
        ry = ry - Zc @ beta[:, 1]
    denom = math.sqrt(float(ra @ ra) * float(ry @ ry))
    r = 0.0 if denom == 0 else float(np.clip(ra @ ry / denom, -1.0, 1.0))
    return CiResult(r, float(_student_p(r, dof)), dof)


def _nonconstant(D: np.ndarray, sd: np.ndarray) -> np.ndarray:
    """Columns whose spread is above rounding noise of their own magnitude.

    The test is per column: a design may mix columns whose scales differ by
    many orders of magnitude.
    """
    return sd > 1e-12 * np.abs(D).max(axis=0, initial=0.0)


def _correlation_matrix(D: np.ndarray):
    """Correlation matrix of the columns of ``D`` plus a mask of non-constant columns."""
    Dc = D - D.mean(axis=0)
    C = Dc.T @ Dc
    sd = np.sqrt(np.diag(C))
    ok = _nonconstant(D, sd / math.sqrt(max(D.shape[0], 1)))
    safe = np.where(ok, sd, 1.0)
    R = C / np.outer(safe, safe)
    np.fill_diagonal(R, 1.0)
    return R, ok


def _batch_partial(R, a, y, subsets):
    """Partial correlations of ``a`` and ``y`` given each row of ``subsets``."""
    K, s = subsets.shape
    if s == 0:
        return np.array([R[a, y]])
    S_block = R[subsets[:, :, None], subsets[:, None, :]]
    if np.min(np.linalg.eigvalsh(S_block)) < SINGULAR_TOL:
        bad = np.argmin(np.linalg.eigvalsh(S_block).min(axis=1))
        raise SingularDesign("collinear conditioning set", subsets[bad].tolist())
    idx = np.concatenate([np.full((K, 1), a), np.full((K, 1), y), subsets], axis=1)
    M = R[idx[:, :, None], idx[:, None, :]]
    P = np.linalg.inv(M)
    return np.clip(-P[:, 0, 1] / np.sqrt(P[:, 0, 0] * P[:, 1, 1]), -1.0, 1.0)


def _final_weights(R, parents, y):
    """Partial correlation of each parent with ``y`` given the other parents."""
    if not parents:
        return {}
    idx = list(parents) + [y]
    P = np.linalg.inv(R[np.ix_(idx, idx)])
    k = len(parents)
    w = -P[:k, k] / np.sqrt(np.diag(P)[:k] * P[k, k])
    return {c: float(np.clip(wi, -1.0, 1.0)) for c, wi in zip(parents, w)}


def benjamini_hochberg(p_values) -> np.ndarray:
    """BH-adjusted p-values (q-values)."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return p
    return stats.false_discovery_control(p, method="bh")


def ci_select(X, Y, allowed, required=None, *, alpha=0.01, graph_alpha=0.01,
              max_cond_size=3, coeff_threshold=0.0, design_effect=1.0):
    """PC-stable parent search for each column of ``Y`` among columns of ``X``.

    ``allowed[j, k]`` says whether candidate ``j`` may be a parent of target
    ``k``; ``required[j, k]`` candidates are never pruned. Candidates are
    visited in column order and conditioning subsets in lexicographic order;
    adjacency sets are frozen within each level, so the result does not depend
    on visiting order.

    Returns ``{(j, k): (weight, p_max)}`` where ``p_max`` is the largest
    p-value seen for that link across all its tests.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, p = X.shape
    m = Y.shape[1]
    allowed = np.asarray(allowed, dtype=bool)
    required = np.zeros((p, m), bool) if required is None else np.asarray(required, dtype=bool)
    R, ok = _correlation_matrix(np.hstack([X, Y]))

    survivors = {}
    for k in range(m):
        ycol = p + k
        parents = [j for j in range(p) if ok[j] and (allowed[j, k] or required[j, k])]
        if not ok[ycol]:
            parents = [j for j in parents if required[j, k]]
        pmax = {j: 0.0 for j in parents}
        for s in range(max_cond_size + 1):
            if len(parents) - 1 < s:
                break
            dof = (n - s - 2) / design_effect
            if dof <= 0:
                raise InsufficientSamples(f"{n} rows cannot support conditioning sets of size {s}")
            removed = set()
            for a in parents:
                if required[a, k] or not ok[ycol]:
                    continue
                others = [b for b in parents if b != a]
                if s == 0:
                    subsets = np.empty((1, 0), dtype=np.intp)
                else:
                    subsets = np.array(list(combinations(others, s)), dtype=np.intp)
                r = _batch_partial(R, a, ycol, subsets)
                pv = _student_p(r, dof)
                hit = np.flatnonzero(pv > alpha)
                upto = pv[: hit[0] + 1] if hit.size else pv
                pmax[a] = max(pmax[a], float(upto.max()))
                if hit.size:
                    removed.add(a)
            parents = [a for a in parents if a not in removed]
        for a in parents:
            survivors[(a, k)] = pmax[a]

    if graph_alpha is not None and survivors:
        keys = sorted(survivors)
        q = benjamini_hochberg([survivors[key] for key in keys])
        survivors = {key: survivors[key] for key, qi in zip(keys, q)
                     if qi <= graph_alpha or required[key]}

    result = {}
    for k in range(m):
        parents = sorted(j for (j, kk) in survivors if kk == k)
        if not ok[p + k]:
            weights = {j: 0.0 for j in parents}
        else:
            weights = _final_weights(R, parents, p + k)
        for j in parents:
            w = weights[j]
            if abs(w) < coeff_threshold and not required[j, k]:
                continue
            result[(j, k)] = (w, survivors[(j, k)])
    return result


def _lasso_gram(G, c, yy, lam, tol, max_sweeps):
    """Coordinate descent for ``min |y - W b|^2 / 2n + lam |b|_1`` in Gram form.

    ``G = W'W/n``, ``c = W'y/n`` and ``yy = y'y/n``. Stops on a duality gap
    below ``tol * yy``.
    """
    p = c.size
    beta = np.zeros(p)
    if p == 0 or yy == 0:
        return beta, 0.0
    if lam == 0:
        # the dual is degenerate without a penalty; plain least squares
        return np.linalg.lstsq(G, c, rcond=None)[0], 0.0
    q = np.zeros(p)  # G @ beta
    diag = np.diag(G).copy()

    def gap():
        grad = c - q  # W'r / n
        bGb = float(beta @ q)
        cb = float(c @ beta)
        primal = 0.5 * (yy - 2 * cb + bGb) + lam * np.abs(beta).sum()
        gmax = np.abs(grad).max()
        s = 1.0 if gmax <= lam else lam / gmax
        # |y - s r|^2 / n with r = y - W beta
        dual_res = (1 - s) ** 2 * yy + 2 * s * (1 - s) * cb + s * s * bGb
        dual = 0.5 * (yy - dual_res)
        return primal - dual

    def sweep(coords):
        delta_max = 0.0
        for j in coords:
            old = beta[j]
            z = c[j] - q[j] + diag[j] * old
            new = math.copysign(max(abs(z) - lam, 0.0), z) / diag[j]
            if new != old:
                q[:] += G[:, j] * (new - old)
                beta[j] = new
                delta_max = max(delta_max, abs(new - old))
        return delta_max

    full = range(p)
    g = gap()
    for it in range(max_sweeps):
        sweep(full)
        active = np.flatnonzero(beta)
        # inner passes over the active set only
        for _ in range(100):
            if sweep(active) < 1e-12:
                break
        g = gap()
        if g <= tol * yy:
            return beta, g
    raise NonConvergence(f"lasso did not converge in {max_sweeps} sweeps (gap {g:.3e})", gap=g)


def lasso_select(X, Y, allowed, required=None, *, lambda_w=0.01, w_threshold=0.0,
                 tol=1e-8, max_sweeps=10_000):
    """Per-target lasso on standardized candidates and centered targets.

    Returns ``{(j, k): coefficient}`` for coefficients with magnitude at least
    ``w_threshold`` (required links are always reported).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, p = X.shape
    allowed = np.asarray(allowed, dtype=bool)
    required = np.zeros(allowed.shape, bool) if required is None else np.asarray(required, dtype=bool)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    ok = _nonconstant(X, sd)
    W = np.where(ok, (X - mu) / np.where(ok, sd, 1.0), 0.0)
    G_full = (W.T @ W) / n
    Yc = Y - Y.mean(axis=0)
    C_full = (W.T @ Yc) / n
    result = {}
    for k in range(Y.shape[1]):
        cols = np.flatnonzero(ok & (allowed[:, k] | required[:, k]))
        yy = float(Yc[:, k] @ Yc[:, k]) / n
        beta, _ = _lasso_gram(G_full[np.ix_(cols, cols)], C_full[cols, k], yy,
                              lambda_w, tol, max_sweeps)
        for j, b in zip(cols, beta):
            if (b != 0 and abs(b) >= w_threshold) or required[j, k]:
                result[(int(j), k)] = float(b)
    return result


# --------------------------------------------------------------------------
# LENS-level entry points


def _lens_masks(V: int, assumptions: LinkAssumptions):
    allowed = np.zeros((9 * V, V), bool)
    required = np.zeros((9 * V, V), bool)
    for j in range(9 * V):
        dr, dc, u = candidate_of(j, V)
        for v in range(V):
            allowed[j, v] = assumptions.allows(u, v)
            required[j, v] = assumptions.requires(dr, dc, u, v)
    return allowed, required


def _as_design(l) -> LaggedDesign:
    return l if isinstance(l, LaggedDesign) else lens_lagged_view(l)


def pip_ci(l: LensTensor | LaggedDesign, cfg: PipConfig, design_effect: float | None = None) -> StencilGraph:
    """Center-target PC-stable search with partial-correlation tests."""
    d = _as_design(l)
    V = d.V
    cfg.check(V)
    need = 9 * V + cfg.max_cond_size + 3
    if d.n < need:
        raise InsufficientSamples(f"{d.n} usable rows < 9V + max_cond_size + 3 = {need}")
    if design_effect is None:
        design_effect = 1.0
        if cfg.deflate_dof and isinstance(l, LensTensor):
            design_effect = design_effect_window(l.n_rows - 2, l.n_cols - 2)
    allowed, required = _lens_masks(V, cfg.assumptions)
    found = ci_select(
        d.X, d.Y, allowed, required,
        alpha=cfg.alpha, graph_alpha=cfg.graph_alpha, max_cond_size=cfg.max_cond_size,
        coeff_threshold=cfg.coeff_threshold, design_effect=design_effect,
    )
    edges = [Edge(*candidate_of(j, V), v, w, p) for (j, v), (w, p) in found.items()]
    return StencilGraph(V, tuple(edges), CORRELATION)


def pip_lasso(l: LensTensor | LaggedDesign, cfg: PipConfig) -> StencilGraph:
    """Per-target L1-regularized regression on the lagged LENS design.

    Coefficients are per standard deviation of the candidate, in the units of
    the (centered, unscaled) target.
    """
    d = _as_design(l)
    V = d.V
    cfg.check(V)
    if d.n < 2:
        raise InsufficientSamples(f"lasso needs at least 2 usable rows, got {d.n}")
    allowed, required = _lens_masks(V, cfg.assumptions)
    found = lasso_select(d.X, d.Y, allowed, required, lambda_w=cfg.lambda_w,
                         w_threshold=cfg.w_threshold, tol=cfg.lasso_tol,
                         max_sweeps=cfg.lasso_max_sweeps)
    edges = []
    for (j, v), b in found.items():
        if abs(b) < cfg.coeff_threshold and not required[j, v]:
            continue
        edges.append(Edge(*candidate_of(j, V), v, b, None))
    return StencilGraph(V, tuple(edges), REGRESSION)


def run_pip(l, cfg: PipConfig) -> StencilGraph:
    if cfg.backend == "lasso":
        return pip_lasso(l, cfg)
    return pip_ci(l, cfg)


def discover(x: GridTensor, cfg: PipConfig) -> StencilGraph:
    """Build the LENS of ``x`` and identify the parents of every center variable."""
    lens = build_lens(x)
    if cfg.backend == "lasso":
        return pip_lasso(lens, cfg)
    return pip_ci(lens, cfg)
