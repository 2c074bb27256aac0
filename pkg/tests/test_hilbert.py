import math

import numpy as np
import pytest

from hilbert_ot.errors import NotInConeError, PreconditionError
from hilbert_ot.hilbert import (
    classic_hilbert_distance,
    enumerate_slice_vertices,
    hilbert_distance,
    l1_bound_from_hilbert,
    oracle_hilbert_distance,
    supnorm_bound_diagnostic,
)
from hilbert_ot.sampling import sample_G
from hilbert_ot.space import DiscreteMeasure, truncated_gaussian
from hilbert_ot.tailcone import ConeSpec, ExponentialTail, TabulatedTail, ZeroTail

from conftest import t3_cone

# distance on T3 between (1,1,1) and (1,1,2), from the exact rational oracle, frozen
T3_GOLDEN = 0.27234146891183175


def small_cones():
    """Assorted instances with at most four atoms."""
    out = [t3_cone()]
    out.append(ConeSpec(DiscreteMeasure.from_radii([0.0, 1.0, 2.0, 3.0], [0.4, 0.3, 0.2, 0.1]), ExponentialTail(1.0), ExponentialTail(1.0), 0.5, 1.5))
    out.append(ConeSpec(DiscreteMeasure.from_radii([0.0, 0.5, 1.5, 2.5], [0.25] * 4), ExponentialTail(2.0), ExponentialTail(0.5), 0.5, 0.5))
    out.append(ConeSpec(DiscreteMeasure.from_radii([0.2, 1.0, 3.0], [0.5, 0.3, 0.2]), ExponentialTail(1.0), ZeroTail(), 0.5, 0.5))
    return out


def test_examples(t3):
    g = np.array([1.0, 1.0, 2.0])
    assert hilbert_distance(t3, g, g) == 0.0
    assert hilbert_distance(t3, g, 7 * g) == pytest.approx(0.0, abs=1e-12)
    assert hilbert_distance(t3, np.ones(3), g) == pytest.approx(T3_GOLDEN, abs=1e-10)
    assert oracle_hilbert_distance(t3, np.ones(3), g) == pytest.approx(T3_GOLDEN, abs=1e-15)


def test_non_member_rejected(t3):
    with pytest.raises(NotInConeError):
        hilbert_distance(t3, [-1.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        hilbert_distance(t3, [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


def test_classic_examples():
    assert classic_hilbert_distance([1, 2], [2, 1]) == pytest.approx(math.log(4))
    assert classic_hilbert_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert classic_hilbert_distance([1, 2, 1], [1, 1, 1]) == pytest.approx(math.log(2))
    d, flag = classic_hilbert_distance([1, 0], [1, 1], return_flag=True)
    assert d == math.inf and flag is False


def test_slice_vertices_of_t3():
    assert len(enumerate_slice_vertices(t3_cone())) == 6


@pytest.mark.parametrize("idx", range(4))
def test_matches_exact_oracle(idx):
    cone = small_cones()[idx]
    verts = enumerate_slice_vertices(cone)
    rng = np.random.default_rng(idx)
    for _ in range(50):
        g, h = sample_G(cone, rng), sample_G(cone, rng)
        d = hilbert_distance(cone, g, h)
        o = oracle_hilbert_distance(cone, g, h, vertices=verts)
        if math.isinf(o):
            assert math.isinf(d)
        else:
            assert abs(d - o) <= 1e-8


def test_oracle_projective_exactly(t3):
    up, down = oracle_hilbert_distance(t3, [1, 2, 3], [3, 6, 9], exact=True)
    assert up * down == 1


def classic_cone(n=5, seed=0):
    rng = np.random.default_rng(seed)
    radii = np.sort(rng.uniform(0, 3, n))
    m = DiscreteMeasure.from_radii(radii, np.full(n, 1.0 / n))
    huge = TabulatedTail([0.0, 10.0], [1e6, 1e6], extrapolate="hold")
    return ConeSpec(m, huge, ExponentialTail(1.0), float(radii.max()), float(radii.max()))


@pytest.mark.parametrize("seed", range(5))
def test_classic_reduction(seed):
    cone = classic_cone(seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        g, h = rng.uniform(0.1, 5, 5), rng.uniform(0.1, 5, 5)
        assert hilbert_distance(cone, g, h) == pytest.approx(classic_hilbert_distance(g, h), abs=1e-9)


def test_metric_axioms():
    cone = ConeSpec(truncated_gaussian(12, 0.75, 3.0, seed=1), ExponentialTail(1.5), ExponentialTail(1.5), 1.0, 1.5)
    rng = np.random.default_rng(2)
    for _ in range(40):
        a, b, c = (sample_G(cone, rng) for _ in range(3))
        dab, dba = hilbert_distance(cone, a, b), hilbert_distance(cone, b, a)
        dbc, dac = hilbert_distance(cone, b, c), hilbert_distance(cone, a, c)
        if math.isfinite(dab):
            assert abs(dab - dba) <= 1e-9
        if math.isfinite(dab) and math.isfinite(dbc):
            assert dac <= dab + dbc + 1e-8
        for lam in (1e-3, 1.0, 1e3):
            assert hilbert_distance(cone, a, lam * a) <= 1e-9


def l1_cone():
    m = DiscreteMeasure.from_radii([0.0, 1.0, 2.0, 3.0, 4.0], [0.4, 0.3, 0.2, 0.07, 0.03])
    alpha = TabulatedTail([0.0, 2.0, 3.0, 4.0, 8.0], [1.0, 0.7, 0.3, 0.1, 1e-8])
    return ConeSpec(m, alpha, alpha, 1.5, 1.5)


def test_l1_bound_examples():
    cone = l1_cone()
    g = sample_G(cone, np.random.default_rng(0), nonnegative=True)
    nb = l1_bound_from_hilbert(cone, g, g)
    assert nb.bound == 0.0 and nb.actual == 0.0
    m = DiscreteMeasure.from_radii([0.0, 5.0], [0.5, 0.5])
    cone2 = ConeSpec(m, TabulatedTail([0.0, 10.0], [1.0, 1.0], extrapolate="hold"), ZeroTail(), 6.0, 6.0)
    nb = l1_bound_from_hilbert(cone2, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert nb.bound == math.inf and nb.holds


def test_l1_bound_property():
    cone = l1_cone()
    rng = np.random.default_rng(4)
    for _ in range(100):
        g, h = sample_G(cone, rng, nonnegative=True), sample_G(cone, rng, nonnegative=True)
        nb = l1_bound_from_hilbert(cone, g, h)
        assert nb.actual <= nb.bound + 1e-9


def test_l1_precondition(t3):
    with pytest.raises(PreconditionError) as exc:
        l1_bound_from_hilbert(t3, np.ones(3), np.ones(3))
    assert exc.value.code == "proposition-inapplicable"


def test_supnorm_diagnostic():
    m = DiscreteMeasure.from_radii([0.0, 0.5, 1.0, 3.0], [0.4, 0.3, 0.2, 0.1])
    cone = ConeSpec(m, ExponentialTail(1.0), ExponentialTail(1.0), 1.0, 1.0)
    g = np.array([1.0, 0.5, 0.8, 0.3])
    nb = supnorm_bound_diagnostic(cone, g, g)
    assert nb.diagnostic and nb.bound == 0.0 and nb.actual == 0.0
    h = g.copy()
    h[3] = 0.31
    if hilbert_distance(cone, g, h) < math.inf:
        nb = supnorm_bound_diagnostic(cone, g, h)
        assert nb.actual == 0.0 and nb.holds
    with pytest.raises(ValueError):
        supnorm_bound_diagnostic(cone, 2 * g, g)
