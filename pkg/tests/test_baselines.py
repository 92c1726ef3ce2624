import numpy as np
import pytest

from mcastle.analysis import graph_f1
from mcastle.baselines import (
    FlatGraph,
    cartesian_discover,
    direct_discover,
    direct_metrics,
    flat_to_stencil_key,
)
from mcastle.core import Edge, GridTensor, LinkAssumptions, StencilGraph
from mcastle.errors import InsufficientSamples, ResourceLimit
from mcastle.pip import PipConfig, discover
from mcastle.varbench import NDM, GenSpec, expand_to_global, ground_truth_graph, simulate


def system(entries, V, N=4, T=1000, seed=0):
    b = np.zeros((V, V, 3, 3))
    for (v, u, dr, dc), w in entries.items():
        b[v, u, dr + 1, dc + 1] = w
    ndm = NDM(b)
    x = simulate(expand_to_global(ndm, N), GenSpec(N=N, V=V, E=max(len(entries), 1), T=T, seed=seed))
    return x, ground_truth_graph(ndm)


def test_cartesian_equals_mcastle_for_one_variable():
    x, _ = system({(0, 0, 0, 0): 0.5, (0, 0, 0, -1): 0.3}, V=1)
    for backend in ("ci_pc_stable", "lasso"):
        cfg = PipConfig(backend=backend)
        assert cartesian_discover(x, cfg) == discover(x, cfg)


def test_cartesian_cross_links_only_at_center():
    x, truth = system({(0, 0, 0, 0): 0.5, (1, 1, 0, 0): 0.5, (1, 0, -1, 1): 0.4}, V=2)
    g = cartesian_discover(x, PipConfig())
    assert all(e.dr == e.dc == 0 for e in g.edges if e.src != e.dst)
    # the off-center cross link is out of its reach, M-CaStLe finds it
    assert (-1, 1, 0, 1) not in g.edge_set()
    assert (-1, 1, 0, 1) in discover(x, PipConfig()).edge_set()
    assert graph_f1(discover(x, PipConfig()), truth).f1 == 1.0


def test_cartesian_center_cross_link_from_spatial_means():
    x, _ = system({(0, 0, 0, 0): 0.6, (1, 1, 0, 0): 0.3, (1, 0, 0, 0): 0.5}, V=2, T=2000)
    assert (0, 0, 0, 1) in cartesian_discover(x, PipConfig()).edge_set()


def test_cartesian_honors_assumptions():
    x, _ = system({(0, 0, 0, 0): 0.6, (1, 1, 0, 0): 0.3, (1, 0, 0, 0): 0.5}, V=2, T=2000)
    cfg = PipConfig(assumptions=LinkAssumptions(forbidden_edges={(0, 1)}))
    assert all((e.src, e.dst) != (0, 1) for e in cartesian_discover(x, cfg).edges)


def test_cartesian_insufficient_aggregate_samples():
    x = GridTensor(np.random.default_rng(0).standard_normal((5, 5, 3, 6)))
    with pytest.raises(InsufficientSamples):
        cartesian_discover(x, PipConfig(max_cond_size=0))


def test_direct_refuses_large_grids():
    x = GridTensor(np.zeros((10, 10, 3, 5)))
    with pytest.raises(ResourceLimit):
        direct_discover(x, PipConfig())


def test_direct_needs_samples_beyond_node_count():
    x = GridTensor(np.random.default_rng(1).standard_normal((4, 4, 2, 30)))
    with pytest.raises(InsufficientSamples):
        direct_discover(x, PipConfig())


def test_flat_key_wraps_on_the_torus():
    g = FlatGraph(4, 4, 1)
    # source (0, 3) feeding destination (0, 0) is the west neighbor across the seam
    assert flat_to_stencil_key(g, 3, 0) == (0, -1, 0, 0)
    assert flat_to_stencil_key(g, 3, 0, toroidal=False) is None
    assert flat_to_stencil_key(g, 10, 0) is None  # (2, 2) is two cells away
    assert FlatGraph(4, 4, 2).node(21) == (1, 1, 1)


def test_direct_recovers_a_single_offset_link():
    x, truth = system({(0, 0, 0, 0): 0.5, (0, 0, 0, -1): 0.4}, V=1, T=1500)
    g = direct_discover(x, PipConfig())
    m = direct_metrics(g, truth)
    assert m.recall == 1.0
    hits = sum(flat_to_stencil_key(g, s, t) == (0, -1, 0, 0) for s, t in g.edges)
    assert hits >= 12  # most of the 16 cells see their western neighbor


def test_direct_metrics_counts_off_stencil_edges():
    truth = StencilGraph(1, (Edge(0, 0, 0, 0, 0.5),))
    g = FlatGraph(5, 5, 1, {(0, 0): (0.5, 0.0), (6, 6): (0.5, 0.0), (12, 0): (0.1, 0.0)})
    m = direct_metrics(g, truth)
    assert (m.tp, m.fp, m.fn) == (1, 1, 0)
