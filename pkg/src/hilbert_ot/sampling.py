"""Random members of the test-function cone and of its dual."""

from __future__ import annotations

import numpy as np

from .tailcone import ConeSpec

__all__ = ["sample_F", "sample_G", "g_bounds"]


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_F(cone: ConeSpec, rng=None, boundary_prob=0.25):
    """One member of ``F``: a positive part on ``B_{m1}`` plus a scaled signed tail.

    ``f = p + t h`` with ``p >= 0`` supported in ``B_{m1}`` and ``h`` supported
    outside it (nonnegative on the sign region). Each row is linear in ``t``,
    so the largest admissible ``t`` is explicit; ``t`` is drawn below it, or
    set equal to it with probability ``boundary_prob`` to land on a face.
    """
    rng = _rng(rng)
    mu = cone.measure
    d, w = mu.dist_from_base, mu.weights
    inner = d <= cone.m1
    p = np.where(inner, rng.exponential(1.0, mu.n) * (rng.random(mu.n) < 0.8), 0.0)
    if not np.any(p > 0):
        p[np.flatnonzero(inner)[rng.integers(inner.sum())]] = 1.0
    h = np.where(inner, 0.0, rng.standard_normal(mu.n) * rng.exponential(1.0, mu.n))
    h = np.where(cone.sign_region, np.abs(h), h)
    if not np.any(h):
        return p
    mass_p = float(p @ w)
    mass_h = float(h @ w)
    hp, hm = np.maximum(h, 0.0) * w, np.maximum(-h, 0.0) * w
    # row: t * (tail(h+/-) - c * mass_h) <= c * mass_p
    lhs = [cone.pos_masks @ hp - cone.pos_coef * mass_h, cone.neg_masks @ hm - cone.neg_coef * mass_h]
    rhs = [cone.pos_coef * mass_p, cone.neg_coef * mass_p]
    a = np.concatenate(lhs)
    c = np.concatenate(rhs)
    pos = a > 0
    tmax = float(np.min(c[pos] / a[pos])) if np.any(pos) else 10.0
    tmax = min(tmax, 10.0)
    t = tmax if rng.random() < boundary_prob else tmax * rng.random()
    return p + t * h


def g_bounds(cone: ConeSpec, lam, rho):
    """Pointwise bounds ``(lower, upper)`` certifying membership in ``G``.

    With multipliers ``lam >= 0`` on the positive-tail rows and ``rho >= 0``
    on the negative-tail rows, any ``g`` with ``g >= lower`` everywhere and
    ``g <= upper`` outside the sign region pairs nonnegatively with every
    member of ``F`` (a nonnegative combination of the defining inequalities).
    """
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    base = float(lam @ cone.pos_coef) + float(rho @ cone.neg_coef)
    lower = base - lam @ cone.pos_masks.astype(float)
    upper = base + rho @ cone.neg_masks.astype(float)
    upper = np.where(cone.sign_region, np.inf, upper)
    return lower, upper


def sample_G(cone: ConeSpec, rng=None, nonnegative=False, scale=None):
    """One member of ``G`` built from random dual multipliers.

    Multipliers are sparse exponentials of a random log-uniform scale;
    ``g`` is drawn between the resulting bounds (exponential excess above
    ``lower`` where there is no upper bound). ``nonnegative`` clips the
    lower bound at zero, which keeps the bounds consistent since ``upper >= 0``.
    """
    rng = _rng(rng)
    n_pos, n_neg = cone.pos_breaks.size, cone.neg_breaks.size
    s = 10.0 ** rng.uniform(-2, 2) if scale is None else float(scale)
    lam = rng.exponential(s, n_pos) * (rng.random(n_pos) < 0.6)
    rho = rng.exponential(s, n_neg) * (rng.random(n_neg) < 0.6)
    lower, upper = g_bounds(cone, lam, rho)
    if nonnegative:
        lower = np.maximum(lower, 0.0)
    n = cone.measure.n
    excess = rng.exponential(1.0, n) * (rng.random(n) < 0.7)
    g = lower + excess
    bounded = np.isfinite(upper)
    if np.any(bounded):
        u = rng.random(n)
        g = np.where(bounded, lower + u * (upper - lower), g)
    if not np.any(g):
        g = np.ones(n) if nonnegative else g + 1.0
    return g
