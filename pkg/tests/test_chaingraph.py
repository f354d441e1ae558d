import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scrl.chaingraph import (build_chain_graph, compute_cr, compute_scr,
                             export_graph_csv, graph_from_edges, import_graph_csv,
                             min_return_cost, min_return_cost_all, omega_budget)
from scrl.flows import build_transition, make_flow
from scrl.space import build_grid

from oracles import (chain_enumeration_oracle, cr_oracle, min_return_cost_oracle,
                     omega_oracle, random_digraph)


@pytest.fixture(scope="module")
def identity_circle8():
    s = build_grid("circle", 8)
    f = make_flow("identity")
    tr = build_transition(f, s, 1.0, 1)
    return s, f, tr, build_chain_graph(s, tr, f, 0.2)


def _quiet_scr(g, eps, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return compute_scr(g, eps, **kw)


# -- synthetic graphs ------------------------------------------------------


SYNTH = [(0, 1, 0.1), (1, 2, 0.2), (2, 0, 0.3), (2, 3, 0.05), (3, 2, 0.05)]


def test_min_return_cost_synthetic():
    g = graph_from_edges(4, SYNTH)
    # frozen values, cross-checked against the brute-force reference below
    assert min_return_cost(g, 0) == pytest.approx(0.6)
    assert min_return_cost(g, 3) == pytest.approx(0.1)
    assert np.allclose(min_return_cost_all(g), min_return_cost_oracle(4, SYNTH))


def test_no_cycle_is_unreachable():
    g = graph_from_edges(3, [(0, 1, 0.5), (1, 2, 0.5)])
    assert np.isinf(min_return_cost(g, 0))


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        graph_from_edges(2, [(0, 1, -0.1)])


def test_oracle_equivalence_random_graphs():
    rng = np.random.default_rng(42)
    for _ in range(30):
        n, edges = random_digraph(rng, max_nodes=40)
        g = graph_from_edges(n, edges)
        assert np.array_equal(min_return_cost_all(g), min_return_cost_oracle(n, edges))
        eps = float(rng.uniform(0.2, 2.0))
        Y = sorted(set(rng.integers(0, n, 3).tolist()))
        assert np.array_equal(omega_budget(g, Y, eps), omega_oracle(n, edges, Y, eps))
        assert np.array_equal(omega_budget(g, Y, eps, closed=True),
                              omega_oracle(n, edges, Y, eps, closed=True))


def test_cr_against_scc_oracle():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n, edges = random_digraph(rng, max_nodes=40)
        g = graph_from_edges(n, edges)
        eps = float(rng.uniform(0.2, 1.0))
        assert np.array_equal(compute_cr(g, eps), cr_oracle(n, edges, eps))


@settings(max_examples=30, deadline=None, derandomize=True)
@given(st.integers(0, 10 ** 6), st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_epsilon_monotone_and_scr_in_cr(seed, e1, e2):
    rng = np.random.default_rng(seed)
    n, edges = random_digraph(rng, max_nodes=30)
    g = graph_from_edges(n, edges)
    lo, hi = sorted((e1, e2))
    small = set(_quiet_scr(g, lo).members.tolist())
    big = set(_quiet_scr(g, hi).members.tolist())
    assert small <= big
    assert small <= set(compute_cr(g, lo).tolist())
    y = int(rng.integers(0, n))
    assert set(omega_budget(g, [y], lo).tolist()) <= set(omega_budget(g, [y], hi).tolist())


# -- grid-backed graphs ----------------------------------------------------


def test_identity_circle_edges(identity_circle8):
    s, f, tr, g = identity_circle8
    sel = g.edge_u == 0
    got = sorted(zip(g.edge_v[sel].tolist(), g.edge_w[sel].tolist()))
    assert got == [(0, 0.0), (1, pytest.approx(0.125)), (7, pytest.approx(0.125))]
    # nearest-image edge has zero weight at every node
    for u in range(8):
        sel = (g.edge_u == u) & (g.edge_v == tr.image[u])
        assert g.edge_w[sel].min() == 0.0


def test_identity_scr_cr_all_nodes(identity_circle8):
    _, _, _, g = identity_circle8
    res = _quiet_scr(g, 0.05)
    assert np.array_equal(res.members, np.arange(8))
    assert np.array_equal(compute_cr(g, 0.05), np.arange(8))
    assert np.all(res.min_return_cost == 0)


def test_identity_omega_is_metric_ball(identity_circle8):
    s, _, _, g = identity_circle8
    got = omega_budget(g, [0], 0.3)
    d = s.dist_coords_to_subset(s.points, [0])
    assert np.array_equal(got, np.nonzero(d < 0.3)[0])


def test_forward_image_inclusion(identity_circle8):
    s, f, tr, g = identity_circle8
    Y = [2, 5]
    got = set(omega_budget(g, Y, 2 * s.resolution).tolist())
    for y in Y:
        assert tr.image[y] in got


def test_square_transition_edge_south():
    s = build_grid("unit-square", 16)
    f = make_flow("square")
    tr = build_transition(f, s, 1.0, 1)
    g = build_chain_graph(s, tr, f, 10 * s.resolution)
    u = int(s.nearest(np.array([[0.5, 0.5]]))[0])
    img = tr.image[u]
    assert s.points[img, 1] < s.points[u, 1]          # image lies south
    sel = (g.edge_u == u) & (g.edge_v == img)
    assert g.edge_w[sel].min() <= s.resolution


def test_square_16_scr_hugs_fixed_segments():
    s = build_grid("unit-square", 16)
    f = make_flow("square")
    tr = build_transition(f, s, 1.0, 4)
    g = build_chain_graph(s, tr, f, 10 * s.resolution)
    res = _quiet_scr(g, 0.1)
    ys = s.points[res.members, 1]
    # collar width at budget 0.1: a row returns in one jump of about
    # y - y(1), so membership stops near eps / (1 - 1/e) ~ 0.16
    assert np.all((ys <= 0.2) | (ys >= 0.8))
    assert 0 < len(res.members) < s.n
    # interior rows need a jump comparable to their height to return
    edges = list(zip(g.edge_u.tolist(), g.edge_v.tolist(), g.edge_w.tolist()))
    oracle = min_return_cost_oracle(s.n, edges)
    interior = np.nonzero((s.points[:, 1] > 0.25) & (s.points[:, 1] < 0.75))[0]
    assert np.all(oracle[interior] > 0.1)
    got = min_return_cost_all(g)
    assert np.allclose(got, oracle, rtol=0, atol=1e-12, equal_nan=True)


def test_omega_budget_vs_chain_enumeration():
    s = build_grid("unit-square", 8)
    f = make_flow("square")
    tr = build_transition(f, s, 1.0, 4)
    g = build_chain_graph(s, tr, f, 10 * s.resolution)
    edges = list(zip(g.edge_u.tolist(), g.edge_v.tolist(), g.edge_w.tolist()))
    Y = [int(s.nearest(np.array([[0.4, 0.0]]))[0])]
    eps = 0.08
    got = set(omega_budget(g, Y, eps).tolist())
    # chains of up to 4 jumps reach a subset of the full budgeted set
    four = set(chain_enumeration_oracle(s.n, edges, Y, eps, 4).tolist())
    assert four <= got
    full = set(omega_oracle(s.n, edges, Y, eps).tolist())
    assert got == full


def test_scr_cost_limited_matches_exact():
    s = build_grid("unit-square", 12)
    f = make_flow("square")
    tr = build_transition(f, s, 1.0, 2)
    g = build_chain_graph(s, tr, f, 10 * s.resolution)
    full = _quiet_scr(g, 0.1)
    limited = _quiet_scr(g, 0.1, cost_limit=0.1 + 10 * s.resolution)
    assert np.array_equal(full.members, limited.members)
    assert np.array_equal(full.band, limited.band)


def test_guards():
    s = build_grid("circle", 8)
    f = make_flow("identity")
    tr = build_transition(f, s, 1.0, 1)
    with pytest.raises(ValueError):
        build_chain_graph(s, tr, f, 2 * s.resolution)   # below 3 * resolution
    g = build_chain_graph(s, tr, f, 0.2)
    with pytest.raises(ValueError):
        compute_scr(g, 0.0)
    with pytest.raises(ValueError):
        compute_cr(g, -1.0)
    with pytest.raises(ValueError):
        omega_budget(g, [], 0.1)
    with pytest.raises(IndexError):
        min_return_cost(g, 99)


def test_scr_warns_near_noise_floor(identity_circle8):
    _, _, _, g = identity_circle8
    with pytest.warns(UserWarning, match="noise floor"):
        compute_scr(g, 3 * g.resolution / 2)
    with pytest.warns(UserWarning, match="resolution-limited"):
        compute_scr(g, 5 * g.resolution)


def test_band_flags_threshold_nodes():
    g = graph_from_edges(3, [(0, 0, 0.1), (1, 1, 0.5), (2, 2, 0.101)],
                         resolution=0.001)
    res = _quiet_scr(g, 0.1)
    assert res.members.tolist() == []
    assert res.band.tolist() == [0, 2]


def test_determinism(identity_circle8):
    s, f, tr, _ = identity_circle8
    g1 = build_chain_graph(s, tr, f, 0.2)
    g2 = build_chain_graph(s, tr, f, 0.2)
    assert np.array_equal(g1.edge_u, g2.edge_u)
    assert np.array_equal(g1.edge_v, g2.edge_v)
    assert np.array_equal(g1.edge_w, g2.edge_w)


def test_export_import_round_trip(tmp_path, identity_circle8):
    _, _, _, g = identity_circle8
    path = tmp_path / "graph.csv"
    export_graph_csv(g, path)
    g2 = import_graph_csv(path, g.n, resolution=g.resolution)
    assert np.array_equal(g.edge_u, g2.edge_u)
    assert np.array_equal(g.edge_v, g2.edge_v)
    assert np.array_equal(g.edge_m, g2.edge_m)
    assert np.array_equal(g.edge_w, g2.edge_w)


def test_custom_sampled_weights_carry_padding():
    s = build_grid("circle", 8)
    f = make_flow("circle")
    tr = build_transition(f, s, 1.0, 1)
    from scrl.flows import FlowModel, GridTransition
    sampled = GridTransition(T=1.0, m_max=1, images=tr.images.copy(), exact_images=None)
    g_exact = build_chain_graph(s, tr, f, 0.3)
    g_pad = build_chain_graph(s, sampled, FlowModel("custom-sampled", "circle"), 0.3)
    # padded self-image edge weight equals the resolution exactly
    for u in range(8):
        sel = (g_pad.edge_u == u) & (g_pad.edge_v == sampled.images[0, u])
        assert g_pad.edge_w[sel].min() == pytest.approx(s.resolution)
