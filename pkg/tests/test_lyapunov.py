import numpy as np
import pytest

from scrl.chaingraph import build_chain_graph
from scrl.flows import build_transition, make_flow
from scrl.lyapunov import (combine_pairs, combined_at_shift, discounted_integral,
                           level_function, sup_along_orbit, verify_lyapunov)
from scrl.orbits import build_orbit_data
from scrl.space import build_grid, circle_gap
from scrl.stablesets import (StablePair, avoidance_profile, complementary,
                             find_eta0_and_bstar, nested_neighborhoods,
                             omega_limits_all)

S_MAX = 20.0


@pytest.fixture(scope="module")
def circle_system():
    s = build_grid("circle", 128)
    f = make_flow("circle")
    tr = build_transition(f, s, 1.0, 4)
    orbit = build_orbit_data(f, s, 1.0, fine_horizon=S_MAX + 4.0,
                             horizon=200.0, t_steps=200)
    return s, f, tr, orbit


@pytest.fixture(scope="module")
def matched_pair(circle_system):
    """The fixed-arc pair at the level scale matched to the arc gap."""
    s, f, tr, orbit = circle_system
    theta = s.points[:, 0]
    B = np.nonzero((theta >= 0.875 - 1e-12) & (theta <= 0.9375 + 1e-12))[0]
    cells, flags = omega_limits_all(orbit)
    Bb = complementary(s, tr, B, cells, flags)
    R = 0.5
    nn = nested_neighborhoods(s, tr, B, R, list(np.geomspace(0.02, 0.125, 6)),
                              t_cap_steps=200)
    assert not nn["failures"]
    prof = avoidance_profile(s, orbit, B)
    eta0, B_star, _ = find_eta0_and_bstar(s, B, Bb, nn["T_table"], R, prof)
    return StablePair(B=B, B_bullet=Bb, R=R, eta0=eta0,
                      T_table=nn["T_table"], B_star=B_star)


@pytest.fixture(scope="module")
def matched_field(matched_pair, circle_system):
    s, f, tr, orbit = circle_system
    return sup_along_orbit(matched_pair, s, orbit, s_max=S_MAX)


# -- level function ----------------------------------------------------------


def test_level_zero_on_core_one_on_avoiders(matched_pair, circle_system):
    s = circle_system[0]
    l = level_function(matched_pair, s)
    assert np.all(l[matched_pair.B] == 0)
    assert np.all(l[matched_pair.B_star] == 1)
    assert np.all((0 <= l) & (l <= 1))


def test_level_linear_in_distance(matched_pair, circle_system):
    s = circle_system[0]
    l = level_function(matched_pair, s)
    scale = matched_pair.R * matched_pair.eta0
    d = s.dist_coords_to_subset(s.points, matched_pair.B)
    mid = np.nonzero(np.isclose(d, scale / 2))[0]
    assert mid.size > 0
    assert np.allclose(l[mid], 0.5)


# -- orbit supremum ------------------------------------------------------------


def test_k_zero_on_core_one_on_avoiders(matched_field, matched_pair):
    assert np.all(matched_field.k_values[matched_pair.B] == 0)
    assert np.all(matched_field.k_values[matched_pair.B_star] == 1)


def test_k_between_level_and_one(matched_field):
    assert np.all(matched_field.l_values <= matched_field.k_values + 1e-12)
    assert np.all(matched_field.k_values <= 1.0)


def test_k_monotone_along_flow(matched_field, circle_system):
    # one lattice step along the orbit can never raise the supremum
    orbit = circle_system[3]
    k = matched_field.k_series
    assert np.all(k[1] <= k[0] + 1e-12)
    shift = orbit.index_at(orbit.T / 4)
    assert np.all(k[shift] <= k[0] + 1e-12)


def test_k_matches_brute_force_supremum(circle_system):
    # independent check: dense orbit sampling of the level values for a
    # pair built around the attractor-side arc on a fiber-draining flow
    s, f, tr, orbit = circle_system
    theta = s.points[:, 0]
    B = np.nonzero((theta >= 0.875 - 1e-12) & (theta <= 0.9375 + 1e-12))[0]
    pair = StablePair(B=B, B_bullet=np.empty(0, dtype=np.int64), R=0.5,
                      eta0=0.125, T_table={0.125: 1.0},
                      B_star=np.empty(0, dtype=np.int64))
    fld = sup_along_orbit(pair, s, orbit, s_max=S_MAX)
    rng = np.random.default_rng(2)
    for p in rng.integers(0, s.n, 12):
        ts = np.linspace(0, 60, 6001)
        pos = np.concatenate([f.evaluate(s.points[[p]], t) for t in ts])
        d = s.dist_coords_to_subset(pos, B)
        brute = np.minimum(d / (0.5 * 0.125), 1.0).max()
        assert fld.k_values[p] == pytest.approx(brute, abs=5e-3)


def test_uncertified_points_flagged():
    # roof strip points orbit forever; without an avoider level that
    # certifies truncation they carry the full slack bound
    s = build_grid("roof", 12)
    f = make_flow("roof")
    tr = build_transition(f, s, 1.0, 2)
    orbit = build_orbit_data(f, s, 1.0, fine_horizon=S_MAX + 4.0,
                             horizon=60.0, t_steps=60)
    strip = np.nonzero(np.abs(s.points[:, 0] - 0.5) <= 0.1)[0]
    pair = StablePair(B=strip, B_bullet=np.empty(0, dtype=np.int64),
                      R=1.0, eta0=None, T_table={}, B_star=np.empty(0, dtype=np.int64))
    fld = sup_along_orbit(pair, s, orbit, s_max=S_MAX)
    assert not np.any(fld.certified)
    assert np.all(fld.tail_slack >= 0)
    assert np.all(fld.tail_slack <= 1)


# -- discounted integral -------------------------------------------------------


def test_h_zero_on_core(matched_field, matched_pair):
    assert np.max(np.abs(matched_field.h_values[matched_pair.B])) <= 1e-6


def test_h_one_on_avoiders(matched_field, matched_pair):
    gap = np.abs(1.0 - matched_field.h_values[matched_pair.B_star])
    assert gap.max() <= np.exp(-S_MAX) + 1e-6


def test_h_equals_constant_k_exactly(matched_field, matched_pair, circle_system):
    # fixed points have constant k along the orbit, so the exponentially
    # weighted rule integrates them exactly
    s = circle_system[0]
    theta = s.points[:, 0]
    fixed = np.nonzero((theta > 0.9375 + 1e-9) | np.isclose(theta, 0.375)
                       | np.isclose(theta, 0.625))[0]
    k = matched_field.k_values[fixed]
    assert np.allclose(matched_field.h_values[fixed], k, atol=1e-12)


def test_h_tracks_closed_form_on_outflow_arc(matched_field, circle_system):
    # along the fixed arc between the avoider gap, the summand equals
    # gap-fraction interpolation between the arc ends exactly
    s = circle_system[0]
    theta = s.points[:, 0]
    arc = np.nonzero((theta > 0.9375 + 1e-12))[0]
    h = matched_field.h_values[arc]
    dE = circle_gap(theta[arc], 0.9375)
    dB = circle_gap(theta[arc], 0.0)
    assert np.allclose(h, dE / (dE + dB), atol=1e-9)
    assert np.all(np.diff(h) > 0)


def test_h_in_unit_interval(matched_field):
    assert np.all(matched_field.h_values >= 0)
    assert np.all(matched_field.h_values <= 1.0 + 1e-12)


def test_quadrature_self_consistency(matched_pair, circle_system):
    # halving the quadrature step moves h by less than the advertised bound
    s, f, tr, _ = circle_system
    fine = build_orbit_data(f, s, 1.0, fine_horizon=S_MAX + 4.0,
                            horizon=200.0, t_steps=200, fine_divisor=16)
    coarse = build_orbit_data(f, s, 1.0, fine_horizon=S_MAX + 4.0,
                              horizon=200.0, t_steps=200, fine_divisor=8)
    f_half = sup_along_orbit(matched_pair, s, fine, s_max=S_MAX)
    f_full = sup_along_orbit(matched_pair, s, coarse, s_max=S_MAX)
    change = np.abs(f_half.h_values - f_full.h_values)
    assert np.all(change < f_full.quad_bound + 1e-15)


def test_truncation_soundness(matched_pair, circle_system):
    # doubling the integration horizon moves h by at most exp(-S_max)
    s, f, tr, _ = circle_system
    orbit = build_orbit_data(f, s, 1.0, fine_horizon=2 * S_MAX + 4.0,
                             horizon=200.0, t_steps=200)
    f_short = sup_along_orbit(matched_pair, s, orbit, s_max=S_MAX)
    f_long = sup_along_orbit(matched_pair, s, orbit, s_max=2 * S_MAX)
    assert np.max(np.abs(f_long.h_values - f_short.h_values)) <= np.exp(-S_MAX)


# -- combination ----------------------------------------------------------------


def test_combine_trivial_cases(matched_field):
    zero = combine_pairs([])
    assert zero.n_pairs == 0 and zero.tail_bound == pytest.approx(1.5)
    one = combine_pairs([matched_field])
    assert np.array_equal(one.H_values, matched_field.h_values)
    assert one.tail_bound == pytest.approx(0.5)


def test_combine_same_field_twice(matched_field):
    both = combine_pairs([matched_field, matched_field])
    assert np.allclose(both.H_values, (4.0 / 3.0) * matched_field.h_values, atol=1e-15)


def test_combined_bounded(matched_field):
    both = combine_pairs([matched_field, matched_field])
    assert np.all(both.H_values <= 1.5)


# -- verification -----------------------------------------------------------------


def test_verify_constant_h_identity_clean():
    s = build_grid("circle", 16)
    f = make_flow("identity")
    tr = build_transition(f, s, 1.0, 1)
    g = build_chain_graph(s, tr, f, 0.3)
    orbit = build_orbit_data(f, s, 1.0, fine_horizon=S_MAX + 4.0,
                             horizon=50.0, t_steps=50)
    from scrl.chaingraph import compute_scr
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scr = compute_scr(g, 0.1)
    report = verify_lyapunov([], [], s, orbit, scr, t_probe=1.0, margin=1e-4)
    assert report["monotonicity_violations"] == []
    assert report["strict_failures"] == []
    assert report["n_strict_universe"] == 0


def test_verify_flags_constant_h_off_recurrent(matched_field, circle_system):
    # a constant summand cannot strictly decrease anywhere
    s, f, tr, orbit = circle_system
    from scrl.lyapunov import LyapunovField
    const = LyapunovField(
        pair_index=0,
        l_values=np.full(s.n, 0.5), k_values=np.full(s.n, 0.5),
        h_values=np.full(s.n, 0.5), tail_slack=np.zeros(s.n),
        certified=np.ones(s.n, dtype=bool), quad_bound=np.zeros(s.n),
        k_series=np.full((orbit.times.size, s.n), 0.5), s_max=S_MAX)

    class FakeScr:
        members = np.arange(0)
        band = np.arange(0)

    report = verify_lyapunov([const], [], s, orbit, FakeScr(), t_probe=1.0,
                             margin=1e-4)
    assert report["monotonicity_violations"] == []
    assert len(report["strict_failures"]) == report["n_strict_universe"] == s.n


def test_verify_monotone_via_shifts(matched_field, matched_pair, circle_system):
    s, f, tr, orbit = circle_system
    h_now = matched_field.h_values
    h_then = combined_at_shift([matched_field], orbit, 2.0)
    assert np.all(h_then <= h_now + 1e-12)


def test_verify_requires_probe_at_least_T(matched_field, matched_pair, circle_system):
    s, f, tr, orbit = circle_system

    class FakeScr:
        members = np.arange(0)
        band = np.arange(0)

    with pytest.raises(ValueError):
        verify_lyapunov([matched_field], [matched_pair], s, orbit, FakeScr(),
                        t_probe=0.25, margin=1e-4)
