import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.linear_model import Lasso

from mcastle.analysis import graph_f1
from mcastle.core import GridTensor, LinkAssumptions
from mcastle.errors import ConfigError, InsufficientSamples
from mcastle.lens import build_lens, lens_lagged_view
from mcastle.pip import (
    PipConfig,
    benjamini_hochberg,
    discover,
    lasso_select,
    partial_correlation_test,
    pip_ci,
)
from mcastle.varbench import GenSpec, generate_chain_system, generate_system, ground_truth_graph, simulate


def ar_grid(phi, shape=(4, 4, 1, 500), seed=0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(shape)
    x = np.empty(shape)
    x[..., 0] = e[..., 0]
    for t in range(1, shape[-1]):
        x[..., t] = phi * x[..., t - 1] + e[..., t]
    return GridTensor(x)


# --- partial correlation test ------------------------------------------------


def test_identical_series_has_unit_statistic():
    a = np.random.default_rng(0).standard_normal(100)
    r = partial_correlation_test(a, a)
    assert r.statistic == pytest.approx(1.0) and r.p_value == 0.0 and r.dof == 98


def test_independent_series_mostly_accepted():
    rng = np.random.default_rng(1)
    accepted = sum(
        partial_correlation_test(rng.standard_normal(10_000), rng.standard_normal(10_000)).p_value > 0.01
        for _ in range(200)
    )
    assert accepted >= 0.97 * 200


def test_common_cause_is_explained_away():
    rng = np.random.default_rng(2)
    marg, cond = 0, 0
    for _ in range(100):
        z = rng.standard_normal(5000)
        a = z + rng.standard_normal(5000)
        y = z + rng.standard_normal(5000)
        marg += partial_correlation_test(a, y).p_value < 0.01
        cond += partial_correlation_test(a, y, z[:, None]).p_value > 0.05
    assert marg == 100
    assert cond >= 90


def test_partial_correlation_matches_residual_oracle():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((300, 3))
    a = Z @ [1.0, -2.0, 0.5] + rng.standard_normal(300)
    y = Z @ [0.3, 0.0, 1.0] + 0.4 * a + rng.standard_normal(300)
    D = np.column_stack([np.ones(300), Z])
    ra = a - D @ np.linalg.lstsq(D, a, rcond=None)[0]
    ry = y - D @ np.linalg.lstsq(D, y, rcond=None)[0]
    expected = np.corrcoef(ra, ry)[0, 1]
    r = partial_correlation_test(a, y, Z)
    assert r.statistic == pytest.approx(expected, abs=1e-10)
    assert r.dof == 300 - 3 - 2


def test_partial_correlation_dof_exhausted():
    with pytest.raises(InsufficientSamples):
        partial_correlation_test(np.arange(4.0), np.arange(4.0) ** 2, np.ones((4, 2)))


def test_benjamini_hochberg_oracle():
    # q_i = min over p_j >= p_i of p_j m / rank_j
    p = np.random.default_rng(0).uniform(size=30) ** 3
    m = p.size
    rank = np.argsort(np.argsort(p)) + 1
    oracle = [min(1.0, min(p[j] * m / rank[j] for j in range(m) if p[j] >= p[i])) for i in range(m)]
    np.testing.assert_allclose(benjamini_hochberg(p), oracle)
    np.testing.assert_allclose(benjamini_hochberg([0.01, 0.04, 0.03, 0.2]), [0.04, 0.16 / 3, 0.16 / 3, 0.2])
    assert benjamini_hochberg([]).size == 0


# --- lasso --------------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.001, 0.01, 0.05, 0.2])
def test_lasso_matches_sklearn(lam):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((400, 8)) * rng.uniform(0.5, 3.0, 8) + 1.0
    y = X[:, 0] - 0.5 * X[:, 3] + 0.2 * X[:, 5] + rng.standard_normal(400)
    W = (X - X.mean(0)) / X.std(0)
    ref = Lasso(alpha=lam, fit_intercept=False, tol=1e-12, max_iter=100_000).fit(W, y - y.mean()).coef_
    got = lasso_select(X, y[:, None], np.ones((8, 1), bool), lambda_w=lam, tol=1e-14)
    mine = np.zeros(8)
    for (j, _), b in got.items():
        mine[j] = b
    np.testing.assert_allclose(mine, ref, atol=1e-6)


def test_lasso_lambda_zero_is_least_squares():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((200, 4))
    y = X @ [1.0, 0.0, -1.0, 0.5] + 0.1 * rng.standard_normal(200)
    got = lasso_select(X, y[:, None], np.ones((4, 1), bool), lambda_w=0.0)
    W = (X - X.mean(0)) / X.std(0)
    ols = np.linalg.lstsq(W, y - y.mean(), rcond=None)[0]
    np.testing.assert_allclose([got.get((j, 0), 0.0) for j in range(4)], ols, atol=1e-8)


def test_lasso_above_lambda_max_is_empty_and_sparsity_is_monotone():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((300, 10))
    y = X[:, :4] @ [2.0, 1.0, 0.5, 0.25] + rng.standard_normal(300)
    W = (X - X.mean(0)) / X.std(0)
    lam_max = np.max(np.abs(W.T @ (y - y.mean()))) / 300
    allowed = np.ones((10, 1), bool)
    assert lasso_select(X, y[:, None], allowed, lambda_w=lam_max * 1.0001) == {}
    sizes = [len(lasso_select(X, y[:, None], allowed, lambda_w=f * lam_max))
             for f in (0.001, 0.01, 0.1, 0.3, 0.6, 0.9)]
    assert sizes == sorted(sizes, reverse=True)


def test_lasso_constant_column_is_skipped():
    rng = np.random.default_rng(7)
    X = np.column_stack([rng.standard_normal(100), np.full(100, 5.0)])
    y = X[:, 0] + 0.1 * rng.standard_normal(100)
    got = lasso_select(X, y[:, None], np.ones((2, 1), bool), lambda_w=0.0)
    assert set(got) == {(0, 0)}


# --- LENS-level behavior ------------------------------------------------------


def test_ar_process_gives_center_self_loop():
    hits = 0
    for seed in range(20):
        g = discover(ar_grid(0.9, seed=seed), PipConfig())
        hits += g.edge_set() == {(0, 0, 0, 0)}
    assert hits >= 19


def test_ar_process_lasso_gives_center_self_loop():
    g = discover(ar_grid(0.9, seed=0), PipConfig(backend="lasso", w_threshold=0.1))
    assert g.edge_set() == {(0, 0, 0, 0)}


def test_white_noise_mostly_empty():
    empty = sum(not discover(ar_grid(0.0, (4, 4, 2, 500), seed=s), PipConfig()).edges for s in range(10))
    assert empty > 5


def test_insufficient_samples_boundary():
    cfg = PipConfig()  # 3x3, V=1 needs 9 + 3 + 3 = 15 usable rows
    with pytest.raises(InsufficientSamples):
        discover(ar_grid(0.5, (3, 3, 1, 15)), cfg)
    discover(ar_grid(0.5, (3, 3, 1, 16)), cfg)


def test_discover_is_deterministic():
    x = ar_grid(0.5, (5, 5, 2, 200), seed=3)
    for backend in ("ci_pc_stable", "lasso"):
        cfg = PipConfig(backend=backend)
        assert discover(x, cfg) == discover(x, cfg)


def test_recovers_three_link_system():
    spec = GenSpec(N=4, V=3, E=3, s_star=0.3, T=1000, seed=0)
    f1s = []
    for r in range(20):
        rs = spec.replicate(r)
        ndm, A = generate_system(rs)
        f1s.append(graph_f1(discover(simulate(A, rs), PipConfig()), ground_truth_graph(ndm)).f1)
    assert np.mean(f1s) >= 0.9


@pytest.mark.parametrize("coefficient,recall", [(1.0, 1.0), (0.01, 0.0)])
def test_chain_recall_extremes(coefficient, recall):
    ndm, A = generate_chain_system(10, coefficient, seed=0)
    x = simulate(A, GenSpec(N=4, V=10, E=9, seed=0), max_abs=np.inf)
    m = graph_f1(discover(x, PipConfig(backend="lasso")), ground_truth_graph(ndm))
    assert m.recall == recall


def _var_grid(V, seed, T=300, N=5):
    spec = GenSpec(N=N, V=V, E=V * V, T=T, seed=seed)
    ndm, A = generate_system(spec)
    return simulate(A, spec)


@pytest.mark.parametrize("backend", ["ci_pc_stable", "lasso"])
def test_variable_permutation_equivariance(backend):
    x = _var_grid(3, 1)
    perm = [2, 0, 1]
    xp = np.empty_like(x.values)
    for v, pv in enumerate(perm):
        xp[:, :, pv] = x.values[:, :, v]
    cfg = PipConfig(backend=backend)
    assert discover(GridTensor(xp), cfg).edge_set() == discover(x, cfg).permute(perm).edge_set()


@pytest.mark.parametrize("shift", [(1, 0), (2, 3), (4, 1)])
def test_toroidal_shift_invariance(shift):
    x = _var_grid(2, 2)
    shifted = GridTensor(np.roll(x.values, shift, axis=(0, 1)))
    # the window multiset changes under a shift, so only the edge set is compared
    a = discover(x, PipConfig()).edge_set()
    b = discover(shifted, PipConfig()).edge_set()
    assert len(a ^ b) <= 1


@settings(max_examples=1000, deadline=None)
@given(st.data())
def test_assumptions_are_honored(data):
    V = 2
    var = st.integers(0, V - 1)
    off = st.integers(-1, 1)
    forbidden_sources = data.draw(st.sets(var, max_size=1))
    forbidden_edges = data.draw(st.sets(st.tuples(var, var), max_size=2))
    required = data.draw(st.sets(st.tuples(off, off, var, var), max_size=2))
    required = {k for k in required if k[2] not in forbidden_sources and (k[2], k[3]) not in forbidden_edges}
    a = LinkAssumptions(forbidden_sources, forbidden_edges, required)
    backend = data.draw(st.sampled_from(["ci_pc_stable", "lasso"]))
    g = pip_ci(_SMALL_DESIGN, PipConfig(assumptions=a)) if backend == "ci_pc_stable" else \
        discover(_SMALL_GRID, PipConfig(backend="lasso", assumptions=a))
    keys = g.edge_set()
    assert set(a.required_edges) <= keys
    for dr, dc, u, v in keys:
        assert u not in forbidden_sources and (u, v) not in forbidden_edges


_SMALL_GRID = ar_grid(0.6, (3, 4, 2, 40), seed=9)
_SMALL_DESIGN = lens_lagged_view(build_lens(_SMALL_GRID))


def test_config_strictness():
    with pytest.raises(ConfigError):
        PipConfig.from_dict({"backend": "lasso", "bogus": 1})
    with pytest.raises(ConfigError):
        PipConfig(backend="magic")
    with pytest.raises(ConfigError):
        PipConfig(alpha=1.5)
    with pytest.raises(ConfigError):
        PipConfig(max_cond_size=9).check(1)
    with pytest.raises(ConfigError):
        PipConfig.from_json("{")
    cfg = PipConfig(backend="lasso", assumptions=LinkAssumptions({1}))
    assert PipConfig.from_dict(cfg.to_dict()) == cfg
