"""Hilbert projective distance on the dual cone, its exact oracle and norm comparisons."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NotInConeError, PreconditionError
from .lp import lifted_system, maximize_ratio
from .space import tail_mass_ge
from .tailcone import is_in_G

__all__ = [
    "hilbert_distance",
    "classic_hilbert_distance",
    "oracle_hilbert_distance",
    "enumerate_slice_vertices",
    "NormBound",
    "l1_bound_from_hilbert",
    "supnorm_bound_diagnostic",
]

_CLAMP = 1e-9
_ROUNDOFF = Fraction(1, 10**12)


def _require_member(cone, g, name):
    g = np.asarray(g, dtype=float).ravel()
    if not np.any(g):
        raise ValueError(f"{name} is identically zero")
    rep = is_in_G(cone, g)
    if not rep:
        raise NotInConeError(f"{name} is not in the dual cone", rep)
    return g


def _combine(up, down):
    if math.isinf(up) or math.isinf(down) or up <= 0 or down <= 0:
        return math.inf
    d = math.log(up) + math.log(down)
    if d < 0:
        # a ratio sup below its reciprocal's inverse is LP round-off
        d = 0.0 if d >= -_CLAMP else d
    return max(d, 0.0)


def hilbert_distance(cone, g, g_tilde, check=True):
    """Projective distance between two dual-cone members.

    ``log sup_F (int f g / int f g~) + log sup_F (int f g~ / int f g)`` with
    ``0/0 = 0`` and ``a/0 = inf``; ``inf`` if either supremum is infinite or
    zero. Tiny negative round-off is clamped to zero.
    """
    if check:
        g = _require_member(cone, g, "g")
        g_tilde = _require_member(cone, g_tilde, "g_tilde")
    # the distance is projective: fixing the scale keeps LP tolerances scale-free
    g = np.asarray(g, dtype=float).ravel()
    g_tilde = np.asarray(g_tilde, dtype=float).ravel()
    for v in (g, g_tilde):
        if not np.any(v):
            raise ValueError("arguments must not be identically zero")
    g = g / np.abs(g).max()
    g_tilde = g_tilde / np.abs(g_tilde).max()
    up = maximize_ratio(cone, g, g_tilde, check=False)
    if math.isinf(up) or up <= 0:
        return math.inf
    down = maximize_ratio(cone, g_tilde, g, check=False)
    return _combine(up, down)


def classic_hilbert_distance(g, g_tilde, return_flag=False):
    """``log max(g/g~) + log max(g~/g)`` for strictly positive vectors.

    A nonpositive entry gives ``inf``; with ``return_flag`` the pair
    ``(value, dominated)`` is returned, ``dominated`` being False in that case.
    """
    g = np.asarray(g, dtype=float).ravel()
    gt = np.asarray(g_tilde, dtype=float).ravel()
    if g.shape != gt.shape:
        raise ValueError("vectors differ in length")
    if np.any(g <= 0) or np.any(gt <= 0):
        return (math.inf, False) if return_flag else math.inf
    val = float(np.log(np.max(g / gt)) + np.log(np.max(gt / g)))
    val = max(val, 0.0)
    return (val, True) if return_flag else val


# --------------------------------------------------------------------------
# exact oracle


def _solve_exact(A, b):
    """Solve a square system in rationals; ``None`` if singular."""
    n = len(A)
    M = [list(row) + [bi] for row, bi in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [x / p for x in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                fac = M[r][col]
                M[r] = [x - fac * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def enumerate_slice_vertices(cone, max_atoms=4):
    """All vertices of ``{z >= 0, G z <= 0, sum f w = 1}`` in exact rationals.

    ``z = (u, v)`` are the lifted coordinates and ``f = u - v``. Every float
    datum (weights, tail coefficients) is converted exactly to a fraction, so
    the enumeration involves no rounding. Returns a list of ``f`` vectors as
    tuples of fractions.
    """
    n = cone.measure.n
    if n > max_atoms:
        raise ValueError(f"exact enumeration is limited to {max_atoms} atoms")
    G, _, _, v_idx = lifted_system(cone)
    w = [Fraction(float(x)) for x in cone.measure.weights]
    # rebuild the rows exactly from the cone data instead of the float matrix
    nv = len(v_idx)
    N = n + nv
    rows = []
    total = w + [-w[i] for i in v_idx]
    for coef, mask in zip(cone.pos_coef, cone.pos_masks):
        c = Fraction(float(coef))
        rows.append([(w[i] if mask[i] else 0) - c * total[i] for i in range(n)] + [-c * total[n + k] for k in range(nv)])
    for coef, mask in zip(cone.neg_coef, cone.neg_masks):
        c = Fraction(float(coef))
        rows.append(
            [-c * total[i] for i in range(n)]
            + [(w[i] if mask[i] else 0) - c * total[n + k] for k, i in enumerate(v_idx)]
        )
    assert len(rows) == G.shape[0]
    ineq = [(r, Fraction(0)) for r in rows]
    for j in range(N):
        e = [Fraction(0)] * N
        e[j] = Fraction(-1)
        ineq.append((e, Fraction(0)))
    eq_row = total
    verts = set()
    for combo in itertools.combinations(range(len(ineq)), N - 1):
        A = [ineq[k][0] for k in combo] + [eq_row]
        b = [ineq[k][1] for k in combo] + [Fraction(1)]
        z = _solve_exact(A, b)
        if z is None:
            continue
        if all(sum(a * x for a, x in zip(r, z)) <= rhs for r, rhs in ineq):
            f = [z[i] for i in range(n)]
            for k, i in enumerate(v_idx):
                f[i] -= z[n + k]
            verts.add(tuple(f))
    return sorted(verts)


def _oracle_sup(verts, w, num, den):
    best = Fraction(0)
    saw_positive_den = False
    for f in verts:
        a = sum(fi * gi * wi for fi, gi, wi in zip(f, num, w))
        b = sum(fi * gi * wi for fi, gi, wi in zip(f, den, w))
        if abs(b) <= _ROUNDOFF * sum(abs(fi * gi * wi) for fi, gi, wi in zip(f, den, w)):
            # float inputs cannot resolve a pairing this small: treat it as a face
            b = Fraction(0)
        if b == 0:
            if a > 0:
                return math.inf
            continue
        if b < 0:
            raise ValueError("denominator vector is not in the dual cone")
        saw_positive_den = True
        best = max(best, a / b)
    return best if saw_positive_den else Fraction(0)


def oracle_hilbert_distance(cone, g, g_tilde, vertices=None, exact=False):
    """Exact-arithmetic counterpart of :func:`hilbert_distance` for at most 4 atoms.

    The ratio of two linear forms, with a denominator that is nonnegative on
    the slice, attains its supremum at a vertex (``0/0`` vertices only ever
    interpolate between positive-denominator vertices). With ``exact`` the
    pair of suprema is returned as fractions.
    """
    verts = enumerate_slice_vertices(cone) if vertices is None else vertices
    w = [Fraction(float(x)) for x in cone.measure.weights]
    gq = [Fraction(float(x)) for x in np.asarray(g, dtype=float).ravel()]
    tq = [Fraction(float(x)) for x in np.asarray(g_tilde, dtype=float).ravel()]
    up = _oracle_sup(verts, w, gq, tq)
    down = _oracle_sup(verts, w, tq, gq)
    if exact:
        return up, down
    if up == math.inf or down == math.inf or up == 0 or down == 0:
        return math.inf
    if up * down == 1:
        return 0.0
    return max(math.log(up) + math.log(down), 0.0)


# --------------------------------------------------------------------------
# comparisons with ordinary norms


@dataclass(frozen=True)
class NormBound:
    bound: float
    actual: float
    distance: float
    diagnostic: bool = False

    @property
    def holds(self):
        return self.actual <= self.bound + 1e-9

    def to_dict(self):
        return {
            "bound": self.bound,
            "actual": self.actual,
            "distance": self.distance,
            "diagnostic": self.diagnostic,
        }


def _expm1(d):
    return math.inf if math.isinf(d) else math.expm1(d)


def l1_precondition(cone):
    """Smallest slack of ``alpha(b) >= 2 mu({d >= b})`` over breakpoints ``b > m1``.

    On ``[b_prev, b)`` the tail mass is ``mu({d >= b})`` and ``alpha`` is
    smallest at ``b``, so this covers every ``r >= m1``.
    """
    if cone.pos_breaks.size == 0:
        return math.inf
    t = np.atleast_1d(tail_mass_ge(cone.measure, cone.pos_breaks))
    return float(np.min(cone.pos_coef - 2.0 * t))


def l1_bound_from_hilbert(cone, g, g_tilde, check=True):
    """``||g - g~||_{L1} <= 3 (exp(d) - 1)`` for nonnegative unit-mass members.

    Inputs are rescaled to unit ``L1(mu)`` mass (the distance is projective).
    Raises ``"proposition-inapplicable"`` when ``alpha(r) >= 2 mu(B_r^c)``
    fails for some ``r >= m1``.
    """
    slack = l1_precondition(cone)
    if slack < 0:
        raise PreconditionError(
            "proposition-inapplicable",
            "alpha(r) >= 2 mu(B_r^c) fails",
            {"inequality": "alpha(b) >= 2 mu(d >= b)", "slack": slack},
        )
    w = cone.measure.weights
    g = np.asarray(g, dtype=float).ravel()
    gt = np.asarray(g_tilde, dtype=float).ravel()
    if np.any(g < 0) or np.any(gt < 0):
        raise ValueError("the L1 comparison needs nonnegative vectors")
    g = g / float(g @ w)
    gt = gt / float(gt @ w)
    d = hilbert_distance(cone, g, gt, check=check)
    actual = float(np.abs(g - gt) @ w)
    return NormBound(3.0 * _expm1(d), actual, d)


def supnorm_bound_diagnostic(cone, g, g_tilde, check=True):
    """Compare ``max_{B_m} |g - g~|`` with ``exp(d) - 1`` (diagnostic only).

    The underlying comparison needs a measure charging every open subset of
    ``B_m``, which a discrete measure never does; the result is recorded but
    carries ``diagnostic=True``. Requires ``m1 == m2`` and both vectors
    nonnegative with maximum 1 over the atoms in ``B_m``.
    """
    if cone.m1 != cone.m2:
        raise ValueError("the sup-norm comparison needs m1 == m2")
    inside = cone.measure.dist_from_base <= cone.m2
    g = np.asarray(g, dtype=float).ravel()
    gt = np.asarray(g_tilde, dtype=float).ravel()
    if np.any(g < 0) or np.any(gt < 0):
        raise ValueError("the sup-norm comparison needs nonnegative vectors")
    for name, v in (("g", g), ("g_tilde", gt)):
        if abs(float(v[inside].max()) - 1.0) > 1e-9:
            raise ValueError(f"{name} must have maximum 1 on the atoms of B_m")
    d = hilbert_distance(cone, g, gt, check=check)
    actual = float(np.abs(g - gt)[inside].max())
    return NormBound(_expm1(d), actual, d, diagnostic=True)
