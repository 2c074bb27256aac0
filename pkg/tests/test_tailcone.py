import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hilbert_ot.errors import PreconditionError
from hilbert_ot.sampling import sample_F, sample_G
from hilbert_ot.space import DiscreteMeasure, tail_mass, truncated_gaussian
from hilbert_ot.tailcone import (
    ConeSpec,
    ExponentialGrowth,
    ExponentialTail,
    GrowthEnvelope,
    SqrtTail,
    StepFunction,
    TabulatedTail,
    ZeroTail,
    beta_pair,
    check_tail_bounds,
    is_in_F,
    is_in_G,
    log_xi_transform,
    multiply_cone_map,
    tail_from_dict,
    xi_transform,
)

from conftest import t3_cone

# xi for alpha = exp(-r^2), kappa = exp(r) at r = 2, from 30-digit mpmath quadrature, frozen
XI_GOLDEN = 0.17390552158356470


def ten_atom_cone():
    m = truncated_gaussian(10, sigma=0.5, radius=2.0, seed=4)
    return ConeSpec(m, ExponentialTail(2.0), ExponentialTail(2.0), 0.6, 0.8)


def cone_family():
    m20 = truncated_gaussian(20, sigma=0.75, radius=3.75, seed=0)
    return [
        t3_cone(),
        ten_atom_cone(),
        ConeSpec(m20, ExponentialTail(1.5), ExponentialTail(1.25), 1.0, 2.0),
        ConeSpec(m20, SqrtTail(m20), SqrtTail(m20), 1.5, 1.5),
        ConeSpec(m20, ExponentialTail(1.0), ZeroTail(), 0.5, 0.5),
    ]


# -- membership -----------------------------------------------------------


def test_is_in_F_examples(t3):
    assert is_in_F(t3, [1, 1, 0])
    rep = is_in_F(t3, [0, 0, 1])
    assert not rep
    assert rep.violations[0]["kind"] == "positive-tail"
    # f+ tail mass 1/3 against e^-2 / 3
    assert rep.violations[0]["slack"] == pytest.approx(math.exp(-2) / 3 - 1 / 3)
    assert is_in_F(t3, [1, 1, -0.1])


def test_is_in_G_examples(t3):
    assert is_in_G(t3, [1, 1, 1])
    rep = is_in_G(t3, [-1, 0, 0])
    assert not rep
    assert is_in_F(t3, rep.witness)
    assert float(np.sum(rep.witness * np.array([-1, 0, 0])) / 3) < 0
    # the explicit violating test function
    assert is_in_F(t3, [1, 0, 0]) and -1.0 * 1 / 3 < 0
    rep = is_in_G(t3, [1, 1, -1])
    assert rep and rep.value > 0


def test_length_mismatch_rejected(t3):
    with pytest.raises(ValueError):
        is_in_F(t3, [1, 1])
    with pytest.raises(ValueError):
        is_in_G(t3, [1, 1, 1, 1])


def test_cone_construction_errors():
    m = truncated_gaussian(10, seed=1)
    with pytest.raises(ValueError):
        ConeSpec(m, ExponentialTail(1.0), ExponentialTail(1.0), 2.0, 1.0)
    with pytest.raises(ValueError):
        ConeSpec(m, ZeroTail(), ExponentialTail(1.0), 1.0, 1.0)
    far = DiscreteMeasure.from_radii([2.0, 3.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        ConeSpec(far, ExponentialTail(1.0), ExponentialTail(1.0), 1.0, 1.0)


def test_rows_one_per_breakpoint():
    c = t3_cone()
    assert list(c.pos_breaks) == [2.0] and list(c.neg_breaks) == [2.0]
    assert c.pos_coef[0] == pytest.approx(math.exp(-2))
    z = ConeSpec(c.measure, ExponentialTail(1.0), ZeroTail(), 0.5, 0.5)
    assert z.neg_breaks.size == 0 and np.all(z.sign_region)


def test_non_decaying_alpha_warns():
    m = t3_cone().measure
    flat = TabulatedTail([0.0, 100.0], [1.0, 0.99], extrapolate="hold")
    with pytest.warns(UserWarning, match="decay"):
        ConeSpec(m, flat, flat, 1.0, 1.0)


def test_tail_from_dict_round_trip():
    m = truncated_gaussian(10, seed=1)
    for d in ({"family": "exp", "p": 2.0, "scale": 0.5}, {"family": "zero"}, {"family": "sqrt_tail"}):
        t = tail_from_dict(d, m)
        assert t.to_dict()["family"] == d["family"] or d["family"] == "sqrt_tail"


def test_tail_functions_non_increasing_and_positive():
    m = truncated_gaussian(15, seed=2)
    grid = np.linspace(0, 10, 2001)
    for t in (ExponentialTail(1.5), SqrtTail(m), TabulatedTail([0, 1, 2], [1.0, 0.5, 0.1])):
        v = np.asarray(t(grid))
        assert np.all(np.diff(v) <= 1e-15) and np.all(v > 0)


def test_sqrt_tail_dominates_sqrt_of_tail_mass():
    m = truncated_gaussian(15, seed=2)
    s = SqrtTail(m)
    grid = np.linspace(0, 4, 4001)
    assert np.all(np.asarray(s(grid)) >= np.sqrt(tail_mass(m, grid)) - 1e-15)


# -- cone axioms and duality -----------------------------------------------


@pytest.mark.parametrize("idx", range(5))
def test_cone_axioms(idx):
    cone = cone_family()[idx]
    rng = np.random.default_rng(idx)
    for _ in range(40):
        f1, f2 = sample_F(cone, rng), sample_F(cone, rng)
        lam = float(rng.uniform(1e-3, 10))
        assert is_in_F(cone, f1 + f2) and is_in_F(cone, lam * f1)
        if np.abs(f1).max() > 1e-9:
            assert not is_in_F(cone, -f1)
    for _ in range(15):
        g1, g2 = sample_G(cone, rng), sample_G(cone, rng)
        lam = float(rng.uniform(1e-3, 10))
        assert is_in_G(cone, g1 + g2) and is_in_G(cone, lam * g1)
        if np.abs(g1).max() > 1e-9:
            assert not is_in_G(cone, -g1)


@pytest.mark.parametrize("idx", range(5))
def test_duality_direction(idx):
    cone = cone_family()[idx]
    rng = np.random.default_rng(50 + idx)
    w = cone.measure.weights
    for _ in range(100):
        f, g = sample_F(cone, rng), sample_G(cone, rng)
        assert float(np.sum(f * g * w)) >= -1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=3, max_size=3))
def test_G_membership_matches_pairing_with_F_vertices(g):
    # the slice of F is the convex hull of its vertices, so G is decided by the vertices
    from fractions import Fraction

    from hilbert_ot.hilbert import enumerate_slice_vertices

    cone = t3_cone()
    verts = enumerate_slice_vertices(cone)
    w = [Fraction(1, 3)] * 3
    min_pair = min(float(sum(Fraction(fi) * Fraction(gi) * wi for fi, gi, wi in zip(v, g, w))) for v in verts)
    scale = max(1.0, max(abs(x) for x in g))
    rep = is_in_G(cone, g)
    if min_pair < -1e-7 * scale:
        assert not rep
    elif min_pair > 1e-7 * scale:
        assert rep


# -- tail controls ------------------------------------------------------------


def test_beta_values_on_t3(t3):
    bp = beta_pair(t3)
    assert float(bp.beta_tilde(1.0)) == pytest.approx(math.exp(2) / 2, rel=1e-14)
    assert float(bp.beta(1.0)) == pytest.approx((math.exp(2) + 1) / 2, rel=1e-14)
    assert float(bp.beta_tilde(2.0)) == 0.0


def test_beta_vanishes_with_empty_tails():
    m = t3_cone().measure
    cone = ConeSpec(m, ExponentialTail(1.0), ExponentialTail(1.0), 2.0, 2.0)
    bp = beta_pair(cone)
    assert float(bp.beta_tilde(2.0)) == 0.0 and float(bp.beta(2.0)) == 0.0


def _brute_beta(cone, r, tilde):
    """Dense-grid evaluation of the defining suprema, approaching each breakpoint from the left."""
    mu = cone.measure
    radii = np.unique(mu.dist_from_base)
    edges = np.concatenate([[r], radii[radii > r]])
    best = 0.0
    inner = mu.ball_mass(cone.m1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        gaps = (hi - lo) * np.geomspace(1.0, 1e-15, 1000)
        grid = np.append(hi - gaps, np.nextafter(hi, -np.inf))
        grid = grid[grid >= lo]
        t = tail_mass(mu, grid)
        a = np.asarray(cone.alpha(grid) if tilde else cone.alpha_tilde(grid))
        vals = t / np.minimum(a, 1.0) if tilde else t / a
        best = max(best, float(np.max(vals)))
    return best / inner if tilde else (best + tail_mass(mu, r)) / inner


@pytest.mark.parametrize("idx", [0, 1, 2])
def test_beta_matches_brute_force(idx):
    cone = cone_family()[idx]
    bp = beta_pair(cone)
    radii = np.unique(cone.measure.dist_from_base)
    for r in np.concatenate([[cone.m2], radii[radii > cone.m2]]):
        bt = float(bp.beta_tilde(r))
        b = float(bp.beta(r))
        assert bt == pytest.approx(_brute_beta(cone, r, True), rel=1e-12, abs=1e-300)
        assert b == pytest.approx(_brute_beta(cone, r, False), rel=1e-12, abs=1e-300)


def test_beta_monotone():
    cone = cone_family()[2]
    bp = beta_pair(cone)
    grid = np.linspace(cone.m2, 5, 500)
    assert np.all(np.diff(np.asarray(bp.beta_tilde(grid))) <= 1e-15)
    assert np.all(np.diff(np.asarray(bp.beta(grid))) <= 1e-12)


def test_tail_bound_examples(t3):
    rep = check_tail_bounds(t3, f_samples=[np.array([1.0, 1.0, 0.0])])
    assert rep.ok and rep.per_inequality["tailbound1"] <= 0
    rep = check_tail_bounds(t3, g_samples=[np.ones(3)])
    assert rep.skipped["tailbound3"] == "precondition-unmet"
    assert rep.skipped["tailbound4"] == "precondition-unmet"


def test_tail_bounds_on_light_tail_instance():
    cone = ten_atom_cone()
    assert float(beta_pair(cone).beta_tilde(cone.m1)) < 1
    rng = np.random.default_rng(3)
    fs = [sample_F(cone, rng) for _ in range(100)]
    gs = [sample_G(cone, rng) for _ in range(100)]
    rep = check_tail_bounds(cone, fs, gs)
    assert rep.ok
    assert set(rep.per_inequality) == {"tailneg", "tailpos", "tailbound1", "tailbound2", "tailbound3", "tailbound4"}


def test_tail_bounds_reject_non_member(t3):
    with pytest.raises(ValueError):
        check_tail_bounds(t3, f_samples=[np.array([0.0, 0.0, 1.0])])


# -- multiplication maps -------------------------------------------------------


def test_case_ii_identity_envelope():
    m = t3_cone().measure
    cone = ConeSpec(m, ExponentialTail(1.0), ExponentialTail(1.0), 3.0, 3.0)
    # alpha(m2) = e^-3 is not zero; use a cone whose tails vanish at m2 via a tabulated tail
    zero_at = TabulatedTail([0.0, 2.5, 3.0], [1.0, 1e-300, 1e-300], extrapolate="hold")
    cone = ConeSpec(m, zero_at, zero_at, 3.0, 3.0)
    env = GrowthEnvelope(StepFunction.constant(1.0), StepFunction.constant(1.0))
    out = multiply_cone_map(cone, env, "ii")
    grid = np.linspace(0, 6, 50)
    np.testing.assert_allclose(out.alpha(grid), cone.alpha(grid), rtol=1e-12)
    np.testing.assert_allclose(out.alpha_tilde(grid), cone.alpha_tilde(grid), rtol=1e-12)


def test_case_i_constant_multiplier():
    cone = ten_atom_cone()
    env = GrowthEnvelope(StepFunction.constant(1.0), StepFunction.constant(1.0))
    out = multiply_cone_map(cone, env, "i")
    grid = np.linspace(cone.m2, 3, 40)
    at = float(cone.alpha_tilde(cone.m2))
    np.testing.assert_allclose(out.alpha(grid), np.asarray(cone.alpha(grid)) / (1 - at), rtol=1e-10)
    np.testing.assert_allclose(out.alpha_tilde(grid), np.asarray(cone.alpha_tilde(grid)) / (1 - at), rtol=1e-10)


def test_case_ii_preconditions_named():
    cone = t3_cone()
    env = GrowthEnvelope(StepFunction.constant(0.01), StepFunction.constant(1.0))
    with pytest.raises(PreconditionError) as exc:
        multiply_cone_map(cone, env, "ii")
    assert exc.value.code == "lemma-inapplicable"
    assert "inequality" in exc.value.details


def test_case_i_precondition_named():
    cone = t3_cone()  # alpha_tilde(1) = e^-1, kappa = 3 gives xi_tilde(1) > 1
    env = GrowthEnvelope(StepFunction.constant(1.0), StepFunction.constant(3.0))
    with pytest.raises(PreconditionError) as exc:
        multiply_cone_map(cone, env, "i")
    assert exc.value.details["inequality"] == "xi_tilde(m2) < 1"


def _random_h(rng, lower, upper):
    u = rng.random(lower.size)
    return np.exp(np.log(lower) + u * (np.log(upper) - np.log(lower)))


@pytest.mark.parametrize("case", ["i", "ii"])
def test_multiplication_soundness(case):
    m = truncated_gaussian(20, sigma=0.75, radius=3.0, seed=5)
    cone = ConeSpec(m, ExponentialTail(2.5), ExponentialTail(2.5), 1.2, 1.2)
    d = m.dist_from_base
    if case == "i":
        kappa = StepFunction.from_values(np.unique(d), np.exp(0.3 * np.unique(d)), 1.0)
        env = GrowthEnvelope(StepFunction.constant(1.0), kappa)
    else:
        lower = StepFunction.from_values(np.unique(d), np.exp(-0.3 * np.unique(d)), 1.0)
        env = GrowthEnvelope(lower, StepFunction.constant(1.0))
    target = multiply_cone_map(cone, env, case)
    lo, up = env.bounds_at(d)
    rng = np.random.default_rng(9)
    for _ in range(100):
        f = sample_F(cone, rng)
        h = _random_h(rng, lo, up)
        assert is_in_F(target, f * h)


# -- xi transform --------------------------------------------------------------


def test_xi_constant_growth_is_identity():
    a = ExponentialTail(2.0)
    for r in (0.5, 1.0, 2.0):
        assert xi_transform(a, StepFunction.constant(1.0), r) == pytest.approx(float(a(r)), rel=1e-14)


def test_xi_golden_against_high_precision_quadrature():
    mp.mp.dps = 30
    r = mp.mpf(2)
    oracle = mp.e**r * mp.e ** (-(r**2)) + mp.quad(lambda s: mp.e ** (-(mp.log(s) ** 2)), [mp.e**r, mp.inf])
    assert float(oracle) == pytest.approx(XI_GOLDEN, rel=1e-14)
    assert xi_transform(ExponentialTail(2.0), ExponentialGrowth(1.0), 2.0) == pytest.approx(XI_GOLDEN, rel=1e-10)


@pytest.mark.parametrize("p1,p2,r", [(2.5, 2.25, 1.5), (2.0, 1.0, 3.0), (3.0, 2.0, 1.2)])
def test_xi_matches_quadrature_oracle(p1, p2, r):
    mp.mp.dps = 30
    r_ = mp.mpf(r)
    k = mp.e ** (r_**p2)
    tail = mp.quad(lambda s: mp.e ** (-(mp.log(s) ** (mp.mpf(p1) / p2))), [k, 2 * k, mp.inf])
    oracle = k * mp.e ** (-(r_**p1)) + tail
    assert xi_transform(ExponentialTail(p1), ExponentialGrowth(p2), r) == pytest.approx(float(oracle), rel=1e-9)


def test_xi_bound_for_large_radius():
    a, k = ExponentialTail(2.5), ExponentialGrowth(2.25)
    for r in (17.0, 18.0, 20.0):
        assert log_xi_transform(a, k, r) <= math.log(0.8) - r**2.25


def test_growth_example_holds_only_for_large_radius():
    # with kappa = exp(r^2.25), alpha = exp(-r^2.5) the bound xi(r) <= exp(-r^2.25)
    # fails at r = 3 and holds from about r = 17 onwards
    a, k = ExponentialTail(2.5), ExponentialGrowth(2.25)
    assert log_xi_transform(a, k, 3.0) > -(3.0**2.25)
    for r in np.linspace(17.0, 25.0, 17):
        assert log_xi_transform(a, k, r) <= -(r**2.25)


def test_case_i_exponential_growth_gate():
    m = DiscreteMeasure.from_radii(np.linspace(0, 24, 25), np.full(25, 1 / 25))
    cone = ConeSpec(m, ExponentialTail(2.5), ExponentialTail(2.5), 17.0, 17.0)
    env = GrowthEnvelope(StepFunction.constant(1.0), ExponentialGrowth(2.25))
    out = multiply_cone_map(cone, env, "i")
    b = out.pos_breaks
    assert b.size > 0
    assert np.all(np.asarray(out.alpha.log(b)) <= -(b**2.25))
    assert np.all(np.asarray(out.alpha_tilde.log(b)) <= -(b**2.25))


def test_xi_divergent():
    with pytest.raises(PreconditionError) as exc:
        xi_transform(ExponentialTail(1.0), ExponentialGrowth(2.0), 1.0)
    assert exc.value.code == "xi-divergent"


def test_xi_divergent_flat_integrand():
    with pytest.raises(PreconditionError):
        xi_transform(ExponentialTail(1.0), ExponentialGrowth(1.0), 1.0)
