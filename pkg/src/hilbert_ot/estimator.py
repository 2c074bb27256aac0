"""Estimator-style wrappers around the functional core."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .kernelop import KernelSpec, auto_cone
from .sinkhorn import EotProblem, primal_plan, run_sinkhorn, select_ladder_m
from .space import CostSpec, DiscreteMeasure, cost_matrix

__all__ = ["SinkhornTransport", "ContractionCertifier"]


def _measure(X, weights, base_point):
    X = check_array(X, ensure_2d=True, dtype=float)
    w = np.full(X.shape[0], 1.0 / X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    base = np.zeros(X.shape[1]) if base_point is None else np.asarray(base_point, dtype=float).ravel()
    return DiscreteMeasure(weights=w, points=X, base_point=base)


class SinkhornTransport(BaseEstimator):
    """Entropic transport between two point clouds with cost ``scale * |x - y|**exponent``.

    Parameters
    ----------
    epsilon : float
        Entropic regularization.
    exponent, scale : float
        Cost ``scale * |x - y|**exponent``.
    max_iters : int
        Iteration cap.
    marginal_tol : float
        Stop once the ``L1`` marginal error is at most this.
    certify : bool
        Also search for a full-step contraction certificate.
    delta : float
        Ladder width used by the certificate search.
    base_point : array-like or None
        Center of the balls defining the tails (origin by default).

    Attributes
    ----------
    plan_ : ndarray of shape (n_source, n_target)
        Plan density relative to the product of the marginals.
    potentials_ : tuple of ndarray
        Multiplicative potentials on source and target.
    report_ : ConvergenceReport
    certificate_ : SinkhornCertificate or None
    n_iter_ : int
    """

    def __init__(
        self,
        epsilon=1.0,
        exponent=2.0,
        scale=1.0,
        max_iters=500,
        marginal_tol=1e-10,
        certify=False,
        delta=1.0,
        base_point=None,
    ):
        self.epsilon = epsilon
        self.exponent = exponent
        self.scale = scale
        self.max_iters = max_iters
        self.marginal_tol = marginal_tol
        self.certify = certify
        self.delta = delta
        self.base_point = base_point

    def fit(self, X, y=None, *, target=None, source_weights=None, target_weights=None):
        """Solve the problem from ``X`` (source atoms) to ``target`` (defaults to ``X``)."""
        if y is not None and target is None:
            target = y
        mu = _measure(X, source_weights, self.base_point)
        nu = mu if target is None else _measure(target, target_weights, self.base_point)
        cost = CostSpec("power_distance", float(self.exponent), float(self.scale))
        prob = EotProblem.from_cost(mu, nu, cost, float(self.epsilon))
        g1, g2, rep = run_sinkhorn(prob, self.max_iters, self.marginal_tol, reference=None)
        self.problem_ = prob
        self.potentials_ = (g1, g2)
        self.plan_ = primal_plan(prob, g1, g2)
        self.report_ = rep
        self.n_iter_ = rep.n_iter
        self.certificate_ = None
        if self.certify:
            try:
                _, self.certificate_, _ = select_ladder_m(prob, float(self.exponent), float(self.delta))
            except ValueError:
                self.certificate_ = None
        return self

    def transform(self, X=None):
        """Barycentric image of the fitted source atoms: ``sum_j D_ij v_j y_j``."""
        check_is_fitted(self, "plan_")
        prob = self.problem_
        if X is not None:
            X = check_array(X, dtype=float)
            if X.shape != prob.mu.points.shape or not np.allclose(X, prob.mu.points):
                raise ValueError("transform is defined on the fitted source atoms only")
        return (self.plan_ * prob.nu.weights[None, :]) @ prob.nu.points

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform()

    def score(self, X=None, y=None):
        """Negative regularized transport cost of the fitted plan."""
        from .sinkhorn import eot_objective

        check_is_fitted(self, "plan_")
        return -eot_objective(self.problem_, self.plan_)


class ContractionCertifier(BaseEstimator):
    """Search for a square-root-tail cone on which the kernel of a point cloud contracts.

    Parameters
    ----------
    epsilon, exponent, scale : float
        Kernel ``exp(-scale * |x - y|**exponent / epsilon)``.
    base_point : array-like or None

    Attributes
    ----------
    cone_ : ConeSpec
    certificate_ : Certificate
    kappa_ : float
    m_ : float
    sweep_ : list of (m, kappa, valid)
    """

    def __init__(self, epsilon=1.0, exponent=2.0, scale=1.0, base_point=None):
        self.epsilon = epsilon
        self.exponent = exponent
        self.scale = scale
        self.base_point = base_point

    def fit(self, X, y=None, sample_weight=None):
        mu = _measure(X, sample_weight, self.base_point)
        C = cost_matrix(CostSpec("power_distance", float(self.exponent), float(self.scale)), mu, mu)
        k = KernelSpec(C, float(self.epsilon), mu, mu)
        self.cone_, self.certificate_, self.sweep_ = auto_cone(mu, k)
        self.kappa_ = self.certificate_.kappa
        self.m_ = self.certificate_.extras["m"]
        return self
