"""Dense two-phase primal simplex and the cone ratio maximization built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinearProgram",
    "LPResult",
    "IterationCapError",
    "solve_lp",
    "maximize_ratio",
    "lifted_system",
]

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
INFEASIBLE = "infeasible"

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10
_FEAS_TOL = 1e-9


class IterationCapError(RuntimeError):
    """Raised when the simplex exceeds its pivot budget (a cycling signal)."""


@dataclass(frozen=True)
class LinearProgram:
    """``max`` (or ``min``) ``c @ x`` subject to ``A x (<=|==|>=) b``.

    ``free[j]`` marks variables without the default lower bound 0.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple
    free: np.ndarray | None = None
    maximize: bool = True

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        senses = tuple(self.senses)
        if A.ndim != 2 or A.shape[1] != c.size or A.shape[0] != b.size or len(senses) != b.size:
            raise ValueError("inconsistent linear program dimensions")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("linear program entries must be finite")
        bad = set(senses) - {"<=", "==", ">="}
        if bad:
            raise ValueError(f"unknown row senses {bad}")
        free = np.zeros(c.size, bool) if self.free is None else np.asarray(self.free, bool).ravel()
        if free.size != c.size:
            raise ValueError("free mask has the wrong length")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "free", free)


@dataclass
class LPResult:
    status: str
    value: float
    x: np.ndarray | None
    iterations: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    nz = np.abs(colv) > 0
    if np.any(nz):
        T[nz] -= np.outer(colv[nz], T[row])


def _choose_entering(red, allowed, bland):
    cand = np.flatnonzero((red > _COST_TOL) & allowed)
    if cand.size == 0:
        return -1
    if bland:
        return int(cand[0])
    return int(cand[np.argmax(red[cand])])


def _ratio_test(T, col, basis):
    m = T.shape[0] - 1
    a = T[:m, col]
    pos = np.flatnonzero(a > _PIVOT_TOL)
    if pos.size == 0:
        return -1, False
    ratios = T[pos, -1] / a[pos]
    best = ratios.min()
    ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
    # lowest basic-variable index among ties (Bland)
    row = int(ties[np.argmin(basis[ties])])
    return row, best <= 1e-12


def _run_simplex(T, basis, allowed, cap, rule):
    """Maximize the objective encoded in the last row of ``T`` (reduced costs)."""
    iters = 0
    degenerate_run = 0
    while True:
        red = T[-1, :-1]
        bland = rule == "bland" or degenerate_run >= 50
        col = _choose_entering(red, allowed, bland)
        if col < 0:
            return OPTIMAL, iters
        row, degenerate = _ratio_test(T, col, basis)
        if row < 0:
            return UNBOUNDED, iters
        _pivot(T, row, col)
        basis[row] = col
        iters += 1
        degenerate_run = degenerate_run + 1 if degenerate else 0
        if iters > cap:
            raise IterationCapError(f"simplex exceeded {cap} pivots")


def solve_lp(p, rule="bland"):
    """Solve a :class:`LinearProgram` by the two-phase tableau simplex.

    ``rule="bland"`` uses Bland's lowest-index rule throughout. ``"dantzig"``
    prices by the largest reduced cost and falls back to Bland's rule after a
    streak of degenerate pivots; both are deterministic.
    """
    free = p.free
    # split free variables x = x+ - x-
    n0 = p.c.size
    cols = [p.A]
    cvec = [p.c]
    if np.any(free):
        cols.append(-p.A[:, free])
        cvec.append(-p.c[free])
    A = np.hstack(cols)
    c = np.concatenate(cvec)
    if not p.maximize:
        c = -c
    b = p.b.copy()
    senses = list(p.senses)
    m, n = A.shape
    A = A.copy()
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1
            b[i] *= -1
            senses[i] = {"<=": ">=", ">=": "<=", "==": "=="}[senses[i]]

    n_slack = sum(s != "==" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=np.int64)
    art_cols = []
    s_col = n
    a_col = n + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        elif s == ">=":
            T[i, s_col] = -1.0
            s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            art_cols.append(a_col)
            a_col += 1
        else:
            T[i, a_col] = 1.0
            basis[i] = a_col
            art_cols.append(a_col)
            a_col += 1
    cap = 100 * (width + m + 1)
    iters = 0
    is_art = np.zeros(width, bool)
    is_art[art_cols] = True

    if art_cols:
        # phase 1: maximize -sum(artificials)
        T[-1, :] = 0.0
        art_rows = np.flatnonzero(is_art[basis])
        T[-1, :] = T[art_rows].sum(axis=0)
        T[-1, art_cols] = 0.0
        T[-1, -1] = T[art_rows, -1].sum()
        allowed = ~is_art
        status, it = _run_simplex(T, basis, allowed, cap, rule)
        iters += it
        infeas = T[-1, -1]
        if infeas > _FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LPResult(INFEASIBLE, np.nan, None, iters)
        # drive zero-level artificials out of the basis
        keep = np.ones(m, bool)
        for i in range(m):
            if is_art[basis[i]]:
                row = T[i, :width]
                cand = np.flatnonzero((np.abs(row) > 1e-9) & ~is_art)
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                else:
                    keep[i] = False
        if not np.all(keep):
            T = np.vstack([T[:m][keep], T[-1:]])
            basis = basis[keep]
            m = basis.size
        T = np.delete(T, art_cols, axis=1)
        remap = np.cumsum(~is_art) - 1
        basis = remap[basis]
        width -= len(art_cols)

    # phase 2 objective row: reduced costs c_j - c_B B^-1 A_j, stored so that
    # entering candidates have positive entries
    cfull = np.zeros(width)
    cfull[:n] = c
    T[-1, :] = 0.0
    T[-1, :width] = cfull
    cb = cfull[basis]
    T[-1, :] -= cb @ T[:m]
    allowed = np.ones(width, bool)
    status, it = _run_simplex(T, basis, allowed, cap, rule)
    iters += it
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, np.inf if p.maximize else -np.inf, None, iters)
    xs = np.zeros(width)
    xs[basis] = T[:m, -1]
    x = xs[:n0].copy()
    if np.any(free):
        x[free] -= xs[n0:n]
    value = float(p.c @ x)
    return LPResult(OPTIMAL, value, x, iters)


def lifted_system(cone):
    """Homogeneous inequality system ``G z <= 0`` describing the lifted cone.

    Variables are ``z = (u, v)`` with ``u >= 0`` on every atom and ``v >= 0``
    on the atoms allowed to be negative (outside the sign region); a test
    function is ``f = u - v``. Returns ``(G, weights_u, weights_v, v_index)``
    where ``v_index`` lists the atoms that carry a ``v`` variable.

    Exactness: a feasible ``f`` lifts to ``(f+, f-)``; conversely ``f = u - v``
    has ``f+ <= u`` and ``f- <= v`` pointwise, so every tail row transfers.
    """
    w = cone.measure.weights
    v_idx = np.flatnonzero(~cone.sign_region)
    nu, nv = w.size, v_idx.size
    rows = []
    total_u = w
    total_v = -w[v_idx]
    for coef, mask in zip(cone.pos_coef, cone.pos_masks):
        r = np.zeros(nu + nv)
        r[:nu] = w * mask - coef * total_u
        r[nu:] = -coef * total_v
        rows.append(r)
    for coef, mask in zip(cone.neg_coef, cone.neg_masks):
        r = np.zeros(nu + nv)
        r[:nu] = -coef * total_u
        r[nu:] = w[v_idx] * mask[v_idx] - coef * total_v
        rows.append(r)
    G = np.array(rows).reshape(len(rows), nu + nv)
    return G, w, w[v_idx], v_idx


def _pairing(cone, vec, v_idx):
    """Linear functional ``z -> sum_i (u_i - v_i) vec_i w_i`` in lifted coordinates."""
    w = cone.measure.weights
    return np.concatenate([vec * w, -(vec * w)[v_idx]])


def lifted_optimize(cone, objective, equalities, maximize=True, rule="dantzig"):
    """Optimize ``sum f_i objective_i w_i`` over the lifted cone with extra equalities.

    ``equalities`` is a list of ``(vector, rhs)`` meaning ``sum f_i vector_i w_i = rhs``.
    Returns ``(LPResult, f)`` where ``f`` is the recovered test function.
    """
    G, _, _, v_idx = lifted_system(cone)
    rows = [G]
    rhs = [np.zeros(G.shape[0])]
    senses = ["<="] * G.shape[0]
    for vec, val in equalities:
        rows.append(_pairing(cone, np.asarray(vec, float), v_idx)[None, :])
        rhs.append([val])
        senses.append("==")
    lp = LinearProgram(
        c=_pairing(cone, np.asarray(objective, float), v_idx),
        A=np.vstack(rows),
        b=np.concatenate([np.asarray(r, float) for r in rhs]),
        senses=tuple(senses),
        maximize=maximize,
    )
    res = solve_lp(lp, rule=rule)
    f = None
    if res.x is not None:
        n = cone.measure.n
        f = res.x[:n].copy()
        f[v_idx] -= res.x[n:]
    return res, f


def maximize_ratio(cone, numer, denom, check=True, rule="dantzig"):
    """``sup_{f in F} (sum f g w) / (sum f g~ w)`` with ``0/0 = 0`` and ``a/0 = inf``.

    Charnes--Cooper: fix the denominator to one and maximize the numerator
    over the lifted cone. An unbounded program means ``+inf``. If fixing the
    denominator is infeasible, the denominator vanishes on all of ``F``; the
    ratio is then ``+inf`` when some normalized ``f`` has a positive numerator
    and ``0`` otherwise.
    """
    g = np.asarray(numer, dtype=float).ravel()
    gt = np.asarray(denom, dtype=float).ravel()
    n = cone.measure.n
    if g.size != n or gt.size != n:
        raise ValueError("vector length does not match the number of atoms")
    if not np.any(gt):
        raise ValueError("denominator vector is identically zero")
    if check:
        from .tailcone import is_in_G, NotInConeError

        for name, vec in (("numerator", g), ("denominator", gt)):
            rep = is_in_G(cone, vec)
            if not rep:
                raise NotInConeError(f"{name} is not in the dual cone", rep)
    res, _ = lifted_optimize(cone, g, [(gt, 1.0)], maximize=True, rule=rule)
    if res.status == UNBOUNDED:
        return np.inf
    if res.status == OPTIMAL:
        return max(res.value, 0.0)
    res0, _ = lifted_optimize(cone, g, [(gt, 0.0), (np.ones(n), 1.0)], maximize=True, rule=rule)
    if res0.status == OPTIMAL and res0.value > _FEAS_TOL:
        return np.inf
    if res0.status == UNBOUNDED:
        return np.inf
    return 0.0
