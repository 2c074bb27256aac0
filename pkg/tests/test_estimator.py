import numpy as np
import pytest
from sklearn.base import clone

from hilbert_ot.estimator import ContractionCertifier, SinkhornTransport
from hilbert_ot.sinkhorn import EotProblem, eot_objective, primal_plan, run_sinkhorn
from hilbert_ot.space import CostSpec, truncated_gaussian

from conftest import FROZEN_EPS, gaussian_pair


def clouds():
    mu, nu = gaussian_pair()
    return mu.points, nu.points, {"source_weights": mu.weights, "target_weights": nu.weights}


def test_transport_matches_functional_core():
    X, Y, kw = clouds()
    est = SinkhornTransport(epsilon=FROZEN_EPS, exponent=1.0).fit(X, target=Y, **kw)
    mu, nu = gaussian_pair()
    prob = EotProblem.from_cost(mu, nu, CostSpec("power_distance", 1.0, 1.0), FROZEN_EPS)
    g1, g2, _ = run_sinkhorn(prob, 500, 1e-10, track=False)
    np.testing.assert_allclose(est.plan_, primal_plan(prob, g1, g2), rtol=1e-12)
    assert est.score() == pytest.approx(-eot_objective(prob, est.plan_), rel=1e-14)
    assert est.report_.converged and est.certificate_ is None


def test_transform_barycentric_map():
    X, Y, kw = clouds()
    est = SinkhornTransport(epsilon=5.0, exponent=2.0)
    T = est.fit_transform(X, Y, **kw)
    w, v = est.problem_.mu.weights, est.problem_.nu.weights
    expected = np.array([sum(est.plan_[i, j] * v[j] * Y[j] for j in range(len(Y))) for i in range(len(X))])
    np.testing.assert_allclose(T, expected, rtol=1e-12)
    # the plan's mu-marginal density is one, so the map averages target atoms
    np.testing.assert_allclose(w @ T, v @ Y, atol=1e-9)
    with pytest.raises(ValueError):
        est.transform(X[:3])


def test_transport_certify_and_clone():
    X, Y, kw = clouds()
    est = SinkhornTransport(epsilon=FROZEN_EPS, exponent=1.0, certify=True).fit(X, target=Y, **kw)
    assert est.certificate_ is not None and est.certificate_.valid
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "plan_")


def test_contraction_certifier():
    mu = truncated_gaussian(20, 0.25, 0.75, seed=0)
    cc = ContractionCertifier(epsilon=1.0, exponent=2.0).fit(mu.points, sample_weight=mu.weights)
    assert cc.certificate_.valid and 0 < cc.kappa_ < 1
    assert cc.m_ == pytest.approx(0.7469481797841181, rel=1e-14)
    assert cc.sweep_[-1][2]
