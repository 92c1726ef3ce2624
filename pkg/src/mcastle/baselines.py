"""Comparison methods: direct discovery on the flattened grid, and the
Cartesian ablation that glues per-variable stencils to a non-spatial
inter-variable graph estimated from spatial means."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .analysis import GraphMetrics, metrics_from_counts
from .core import CORRELATION, REGRESSION, Edge, GridTensor, LinkAssumptions, StencilGraph
from .errors import InsufficientSamples, ResourceLimit
from .pip import PipConfig, ci_select, discover, lasso_select

MAX_DIRECT_NODES = 256


@dataclass(frozen=True)
class FlatGraph:
    """Lag-1 graph over every (variable, cell) node of the grid.

    Node ``v * n_rows * n_cols + i * n_cols + j`` is variable ``v`` at cell
    ``(i, j)``, the same ordering as the global VAR state vector.
    """

    n_rows: int
    n_cols: int
    V: int
    edges: dict = field(default_factory=dict)  # (src node, dst node) -> (w, p)
    scale: str = CORRELATION

    def node(self, k: int) -> tuple[int, int, int]:
        """``(v, i, j)`` of node ``k``."""
        v, rest = divmod(k, self.n_rows * self.n_cols)
        i, j = divmod(rest, self.n_cols)
        return v, i, j

    def to_json(self) -> str:
        d = {
            "n_rows": self.n_rows, "n_cols": self.n_cols, "V": self.V, "scale": self.scale,
            "edges": [{"src": s, "dst": t, "w": w, "p": p}
                      for (s, t), (w, p) in sorted(self.edges.items())],
        }
        return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _flatten(x: GridTensor) -> np.ndarray:
    """``(T, V * n_rows * n_cols)`` matrix in node order."""
    n_rows, n_cols, V, T = x.shape
    return x.values.transpose(3, 2, 0, 1).reshape(T, V * n_rows * n_cols)


def direct_discover(x: GridTensor, cfg: PipConfig) -> FlatGraph:
    """Run the backend on the raw grid with every node a candidate for every node."""
    n_rows, n_cols, V, T = x.shape
    p = n_rows * n_cols * V
    if p > MAX_DIRECT_NODES:
        raise ResourceLimit(f"direct discovery refuses {p} nodes (limit {MAX_DIRECT_NODES})")
    cfg.assumptions.check(V)
    if cfg.backend == "ci_pc_stable" and T < p + 3:
        raise InsufficientSamples(f"direct CI discovery needs T >= {p + 3}, got T={T}")
    flat = _flatten(x)
    X, Y = flat[:-1], flat[1:]
    cells = n_rows * n_cols
    var_of = np.arange(p) // cells
    allowed = np.array([[cfg.assumptions.allows(var_of[a], var_of[b]) for b in range(p)]
                        for a in range(p)])
    if cfg.backend == "ci_pc_stable":
        found = ci_select(X, Y, allowed, alpha=cfg.alpha, graph_alpha=cfg.graph_alpha,
                          max_cond_size=cfg.max_cond_size, coeff_threshold=cfg.coeff_threshold)
        return FlatGraph(n_rows, n_cols, V, dict(found), CORRELATION)
    found = lasso_select(X, Y, allowed, lambda_w=cfg.lambda_w, w_threshold=cfg.w_threshold,
                         tol=cfg.lasso_tol, max_sweeps=cfg.lasso_max_sweeps)
    found = {k: (w, None) for k, w in found.items() if abs(w) >= cfg.coeff_threshold}
    return FlatGraph(n_rows, n_cols, V, found, REGRESSION)


def _offset(d: int, n: int, toroidal: bool) -> int:
    if toroidal:
        d %= n
        if d > n // 2:
            d -= n
    return d


def flat_to_stencil_key(g: FlatGraph, src: int, dst: int, toroidal: bool = True):
    """Stencil edge key ``(dr, dc, u, v)`` of a flat edge, or None when the
    source lies outside the destination's Moore neighborhood."""
    u, i1, j1 = g.node(src)
    v, i0, j0 = g.node(dst)
    dr = _offset(i1 - i0, g.n_rows, toroidal)
    dc = _offset(j1 - j0, g.n_cols, toroidal)
    if abs(dr) > 1 or abs(dc) > 1:
        return None
    return (dr, dc, u, v)


def direct_stencil_edges(g: FlatGraph, toroidal: bool = True) -> tuple[frozenset, int]:
    """Stencil keys hit by any flat edge, and the count of off-stencil edges."""
    keys, off = set(), 0
    for src, dst in g.edges:
        k = flat_to_stencil_key(g, src, dst, toroidal)
        if k is None:
            off += 1
        else:
            keys.add(k)
    return frozenset(keys), off


def direct_metrics(g: FlatGraph, truth: StencilGraph, toroidal: bool = True) -> GraphMetrics:
    """Score a flat graph against the stencil truth.

    Each flat edge is mapped to its stencil offset and the resulting set of
    stencil edges is compared with the truth, so the score is in the same
    units as a discovered stencil. Every flat edge whose source lies outside
    the destination's Moore neighborhood adds one false positive.
    """
    keys, off = direct_stencil_edges(g, toroidal)
    t = truth.edge_set()
    tp = len(keys & t)
    return metrics_from_counts(tp, len(keys) - tp + off, len(t) - tp)


def cartesian_discover(x: GridTensor, cfg: PipConfig) -> StencilGraph:
    """Per-variable univariate stencils plus center-to-center cross links.

    Cross-variable links come from running the backend on the spatial-mean
    series of each variable, so they can never sit at a non-center position.
    """
    V = x.V
    cfg.check(V)
    A = cfg.assumptions
    edges = []
    for v in range(V):
        if not A.allows(v, v):
            continue
        req = {(dr, dc, 0, 0) for dr, dc, s, d in A.required_edges if s == d == v}
        sub = cfg.with_(assumptions=LinkAssumptions(required_edges=frozenset(req)))
        g = discover(x.variable(v), sub)
        edges += [e._replace(src=v, dst=v) for e in g.edges]
    scale = REGRESSION if cfg.backend == "lasso" else CORRELATION
    if V > 1:
        means = x.values.mean(axis=(0, 1)).T  # (T, V)
        X, Y = means[:-1], means[1:]
        allowed = np.array([[u != v and A.allows(u, v) for v in range(V)] for u in range(V)])
        required = np.array([[A.requires(0, 0, u, v) and u != v for v in range(V)] for u in range(V)])
        if cfg.backend == "lasso":
            found = lasso_select(X, Y, allowed, required, lambda_w=cfg.lambda_w,
                                 w_threshold=cfg.w_threshold, tol=cfg.lasso_tol,
                                 max_sweeps=cfg.lasso_max_sweeps)
            cross = {k: (w, None) for k, w in found.items()}
        else:
            if X.shape[0] < V + cfg.max_cond_size + 3:
                raise InsufficientSamples("too few time steps for the aggregate-series stage")
            cross = ci_select(X, Y, allowed, required, alpha=cfg.alpha,
                              graph_alpha=cfg.graph_alpha, max_cond_size=cfg.max_cond_size,
                              coeff_threshold=0.0)
        for (u, v), (w, p) in cross.items():
            if abs(w) < cfg.coeff_threshold and not required[u, v]:
                continue
            edges.append(Edge(0, 0, u, v, w, p))
    return StencilGraph(V, tuple(edges), scale)
