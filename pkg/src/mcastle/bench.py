"""Benchmark drivers: VAR method comparison, chain recall and the ADR sweep."""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import binomtest, spearmanr

from .adr import AdrSpec, run_adr_experiment
from .analysis import graph_f1
from .baselines import cartesian_discover, direct_discover, direct_metrics
from .errors import GenerationExhausted, InsufficientSamples, ResourceLimit
from .pip import PipConfig, discover
from .varbench import GenSpec, generate_chain_system, generate_system, ground_truth_graph, simulate

METHODS = ("mcastle", "cartesian", "direct")
BACKENDS = ("ci_pc_stable", "lasso")

# E per V chosen so every V sees densities 1/9, 2/9 and 1/3
DEFAULT_EDGES = {1: (1, 2, 3), 2: (4, 8, 12), 3: (9, 18, 27), 4: (16, 32, 48)}


def _parallel(fn, items, jobs: int) -> list:
    if jobs <= 1:
        return [fn(*it) for it in items]
    return Parallel(n_jobs=jobs)(delayed(fn)(*it) for it in items)


def run_method(method: str, x, cfg: PipConfig, truth):
    """Discover with one method and score it; returns GraphMetrics."""
    if method == "mcastle":
        return graph_f1(discover(x, cfg), truth)
    if method == "cartesian":
        return graph_f1(cartesian_discover(x, cfg), truth)
    if method == "direct":
        return direct_metrics(direct_discover(x, cfg), truth)
    raise ValueError(f"unknown method {method!r}")


def _var_replicate(spec: GenSpec, replicate: int, methods, backends) -> list[dict] | None:
    rspec = spec.replicate(replicate)
    try:
        ndm, A = generate_system(rspec)
    except GenerationExhausted:
        return None
    x = simulate(A, rspec)
    truth = ground_truth_graph(ndm)
    rows = []
    for backend in backends:
        cfg = PipConfig(backend=backend)
        for method in methods:
            t0 = time.perf_counter()
            try:
                m = run_method(method, x, cfg, truth)
            except (InsufficientSamples, ResourceLimit):
                continue
            rows.append({
                "V": spec.V, "E": spec.E, "density": spec.density, "replicate": replicate,
                "seed": rspec.seed, "method": method, "backend": backend,
                "tp": m.tp, "fp": m.fp, "fn": m.fn,
                "precision": m.precision, "recall": m.recall, "f1": m.f1,
                "seconds": time.perf_counter() - t0,
            })
    return rows


@dataclass
class VarSweep:
    rows: list
    dropped: list  # (V, E) points with fewer accepted replicates than requested


def var_sweep(Vs=(1, 2, 3), edges=None, replicates: int = 20, *, N: int = 4, T: int = 1000,
              seed: int = 0, methods=METHODS, backends=("ci_pc_stable",), jobs: int = 1,
              max_draws: int | None = None) -> VarSweep:
    """Method comparison on generated spatial VAR systems.

    For every (V, E) point replicates are drawn with derived seeds until
    ``replicates`` systems were accepted or ``max_draws`` seeds were tried;
    points falling short are dropped whole.
    """
    edges = DEFAULT_EDGES if edges is None else edges
    max_draws = 3 * replicates if max_draws is None else max_draws
    rows, dropped = [], []
    for V in Vs:
        for E in edges[V]:
            if E > 9 * V * V:
                continue
            spec = GenSpec(N=N, V=V, E=E, T=T, seed=seed)
            point, accepted, start = [], 0, 0
            while accepted < replicates and start < max_draws:
                batch = range(start, min(start + replicates - accepted, max_draws))
                start = batch.stop
                for res in _parallel(_var_replicate, [(spec, r, methods, backends) for r in batch], jobs):
                    if res is not None:
                        point += res
                        accepted += 1
            if accepted < replicates:
                dropped.append((V, E))
            else:
                rows += point
    return VarSweep(rows, dropped)


def summarize(rows, keys=("V", "method", "backend"), metrics=("precision", "recall", "f1")) -> list[dict]:
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(r[k] for k in keys)].append(r)
    out = []
    for key, rs in sorted(groups.items()):
        d = dict(zip(keys, key))
        d["n"] = len(rs)
        for m in metrics:
            d[m] = float(np.mean([r[m] for r in rs]))
        out.append(d)
    return out


def sign_test(a, b) -> float:
    """One-sided paired sign test p-value for ``a > b``; ties are dropped."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    wins, losses = int(np.sum(d > 0)), int(np.sum(d < 0))
    if wins + losses == 0:
        return 1.0
    return float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def paired_f1(rows, method_a: str, method_b: str, backend: str = "ci_pc_stable", V=None):
    """Aligned F1 arrays of two methods over shared (V, E, replicate) keys."""
    f = defaultdict(dict)
    for r in rows:
        if r["backend"] == backend and (V is None or r["V"] == V):
            f[(r["V"], r["E"], r["replicate"])][r["method"]] = r["f1"]
    keys = [k for k in sorted(f) if method_a in f[k] and method_b in f[k]]
    return np.array([f[k][method_a] for k in keys]), np.array([f[k][method_b] for k in keys])


def trend(x, y) -> float:
    """Spearman rank correlation, 0 when either input is constant."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    return float(spearmanr(x, y)[0])


def _chain_point(V, coefficient, seed, N, T, cfg) -> dict:
    ndm, A = generate_chain_system(V, coefficient, seed, N=N)
    spec = GenSpec(N=N, V=V, E=max(V - 1, 1), T=T, seed=seed)
    # the chain is nilpotent, so it is stable at any coefficient, but the
    # scale grows like coefficient**depth
    x = simulate(A, spec, max_abs=np.inf)
    m = graph_f1(discover(x, cfg), ground_truth_graph(ndm))
    return {"V": V, "coefficient": coefficient, "seed": seed, "recall": m.recall,
            "precision": m.precision, "f1": m.f1}


def chain_recall(Vs=(10, 50), coefficients=(0.01, 0.1, 0.5, 1.0, 2.0), seeds=(0,), *, N: int = 4,
                 T: int = 1000, cfg: PipConfig | None = None, jobs: int = 1) -> list[dict]:
    """Recall of the chain ``0 -> 1 -> ... -> V-1`` against its coefficient."""
    cfg = PipConfig(backend="lasso") if cfg is None else cfg
    items = [(V, c, s, N, T, cfg) for V in Vs for c in coefficients for s in seeds]
    return _parallel(_chain_point, items, jobs)


DEFAULT_ADR_SWEEP = {
    "D": [0.005, 0.05, 0.2, 0.4],
    "v": [1.0, 2.0, 3.0],
    "theta": [0.0, 30.0, 60.0, 90.0],
    "seeds": [0, 1, 2],
}


def _adr_point(eid: str, spec: AdrSpec, cfg: PipConfig) -> dict:
    row = run_adr_experiment(spec, cfg, eid).row
    return {**row, "D": spec.D1, "v": spec.v}


def adr_sweep(points, cfg: PipConfig | None = None, jobs: int = 1) -> list[dict]:
    cfg = PipConfig() if cfg is None else cfg
    return _parallel(_adr_point, [(eid, spec, cfg) for eid, spec in points], jobs)
