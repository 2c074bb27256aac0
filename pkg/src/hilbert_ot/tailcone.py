"""Tail functions, the test-function cone F and its dual G, tail controls and multiplier maps.

A cone is fixed by a measure, two tail functions ``alpha`` and ``alpha_tilde``
and radii ``0 < m1 <= m2``. Its members ``f`` are nonnegative on the closed
ball ``B_{m2}`` and satisfy, for every radius ``r``, that the positive part
beyond ``r`` (``r >= m1``) and the negative part beyond ``r`` (``r >= m2``)
carry at most ``alpha(r)`` resp. ``alpha_tilde(r)`` times the integral of
``f``. For a discrete measure the continuum of radii reduces to one row per
breakpoint ``b``: on ``[b_prev, b)`` the tail set is ``{d >= b}`` and the
continuous non-increasing tail function is smallest at ``b``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import NotInConeError, PreconditionError
from .space import DiscreteMeasure, breakpoints, tail_mass, tail_mass_ge

__all__ = [
    "TailFunction",
    "ExponentialTail",
    "TabulatedTail",
    "SqrtTail",
    "ZeroTail",
    "ScaledTail",
    "XiTail",
    "tail_from_dict",
    "StepFunction",
    "ExponentialGrowth",
    "GrowthEnvelope",
    "ConeSpec",
    "MembershipReport",
    "is_in_F",
    "is_in_G",
    "BetaPair",
    "beta_pair",
    "TailBoundReport",
    "check_tail_bounds",
    "xi_transform",
    "log_xi_transform",
    "multiply_cone_map",
    "NotInConeError",
]

FLOOR = 1e-300
LOG_FLOOR = math.log(FLOOR)
F_TOL = 1e-12
G_TOL = 1e-9


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# --------------------------------------------------------------------------
# tail functions


class TailFunction:
    """Continuous non-increasing positive function of the radius with limit 0.

    Subclasses implement :meth:`log` (natural log of the exact value, which may
    be far below the floating-point range). Calling the object returns the
    value floored at ``1e-300`` so that cone rows never lose positivity.
    """

    is_zero = False

    def log(self, r):
        raise NotImplementedError

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return _out(np.exp(np.maximum(self.log(r), LOG_FLOOR)))

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialTail(TailFunction):
    """``scale * exp(-r**p)``."""

    p: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.scale > 0):
            raise ValueError("exponential tail needs p > 0 and scale > 0")

    def log(self, r):
        r = np.asarray(r, dtype=float)
        return _out(math.log(self.scale) - np.maximum(r, 0.0) ** self.p)

    def to_dict(self):
        return {"family": "exp", "p": self.p, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class TabulatedTail(TailFunction):
    """Log-linear interpolation through ``(knots, values)``.

    Constant before the first knot. Past the last knot the log-slope of the
    final segment is continued (``extrapolate="slope"``) or the last value is
    held (``extrapolate="hold"``).
    """

    knots: np.ndarray
    values: np.ndarray
    extrapolate: str = "slope"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if k.size == 0 or k.size != v.size:
            raise ValueError("tabulated tail needs matching, non-empty knots and values")
        if np.any(np.diff(k) <= 0) or k[0] < 0:
            raise ValueError("knots must be >= 0 and strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("tabulated values must be finite and positive")
        if np.any(np.diff(v) > 0):
            raise ValueError("tabulated values must be non-increasing")
        if self.extrapolate not in ("slope", "hold"):
            raise ValueError("extrapolate must be 'slope' or 'hold'")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_logv", np.log(v))

    def log(self, r):
        r = np.asarray(r, dtype=float)
        k, lv = self.knots, self._logv
        out = np.interp(r, k, lv)
        if self.extrapolate == "slope" and k.size > 1:
            slope = (lv[-1] - lv[-2]) / (k[-1] - k[-2])
            out = np.where(r > k[-1], lv[-1] + slope * (r - k[-1]), out)
        return _out(out)

    def to_dict(self):
        return {"family": "tabulated", "knots": self.knots.tolist(), "values": self.values.tolist()}


class SqrtTail(TabulatedTail):
    """Continuous upper envelope of ``r -> sqrt(mu(B_r^c))`` for a discrete measure.

    Knots at the distinct radii ``d_k`` carry ``sqrt(mu({d >= d_k}))``; between
    knots the envelope is log-linear, before the first knot it is constant.
    One extra knot a spacing past the last radius carries ``1e-300`` and the
    value is held there. At every radius the envelope dominates
    ``sqrt(mu(B_r^c))``, and at the radii themselves it equals the left limit,
    which is all the breakpoint rows ever see.
    """

    def __init__(self, measure):
        radii = np.asarray(measure.radii, dtype=float)
        vals = np.sqrt(tail_mass_ge(measure, radii))
        gap = float(radii[-1] - radii[-2]) if radii.size > 1 else 1.0
        gap = gap if gap > 0 else 1.0
        knots = np.append(radii, radii[-1] + gap)
        vals = np.append(vals, FLOOR)
        super().__init__(knots=knots, values=vals, extrapolate="hold")

    def to_dict(self):
        return {"family": "sqrt_tail"}


class ZeroTail(TailFunction):
    """Identically zero; allowed only as ``alpha_tilde`` (sign constraint everywhere)."""

    is_zero = True

    def log(self, r):
        r = np.asarray(r, dtype=float)
        return _out(np.full(r.shape, -np.inf))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return _out(np.zeros(r.shape))

    def to_dict(self):
        return {"family": "zero"}


@dataclass(frozen=True, eq=False)
class ScaledTail(TailFunction):
    """``factor * base(r)``."""

    base: TailFunction
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("scale factor must be positive")

    @property
    def is_zero(self):
        return self.base.is_zero

    def log(self, r):
        return _out(np.asarray(self.base.log(r)) + math.log(self.factor))

    def __call__(self, r):
        if self.base.is_zero:
            return self.base(r)
        return super().__call__(r)

    def to_dict(self):
        return {"family": "scaled", "factor": self.factor, "base": self.base.to_dict()}


def tail_from_dict(d, measure=None):
    """Build a tail function from a config fragment."""
    fam = d.get("family", "exp")
    if fam == "exp":
        return ExponentialTail(p=float(d["p"]), scale=float(d.get("scale", 1.0)))
    if fam == "sqrt_tail":
        if measure is None:
            raise ValueError("sqrt_tail needs the measure")
        return SqrtTail(measure)
    if fam == "tabulated":
        return TabulatedTail(knots=d["knots"], values=d["values"], extrapolate=d.get("extrapolate", "slope"))
    if fam == "zero":
        return ZeroTail()
    raise ValueError(f"unknown tail family {fam!r}")


# --------------------------------------------------------------------------
# growth and decay functions


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function of the radius.

    ``base`` on ``[0, knots[0])`` and ``values[k]`` on ``[knots[k], knots[k+1])``.
    Values are held as logs so that very large growth bounds do not overflow.
    """

    knots: np.ndarray
    log_values: np.ndarray
    log_base: float

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float).ravel()
        lv = np.asarray(self.log_values, dtype=float).ravel()
        if k.size != lv.size:
            raise ValueError("knots and values differ in length")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "log_values", lv)
        object.__setattr__(self, "log_base", float(self.log_base))

    @classmethod
    def from_values(cls, knots, values, base):
        return cls(knots, np.log(np.asarray(values, dtype=float)), math.log(base))

    @classmethod
    def constant(cls, value=1.0):
        return cls(np.empty(0), np.empty(0), math.log(value))

    def log(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self.knots, r, side="right")
        table = np.concatenate([[self.log_base], self.log_values])
        return _out(table[idx])

    def __call__(self, r):
        return _out(np.exp(np.asarray(self.log(r))))

    @property
    def is_constant(self):
        return bool(np.all(self.log_values == self.log_base))

    def monotone(self):
        """+1 non-decreasing, -1 non-increasing, 0 constant, None otherwise."""
        seq = np.concatenate([[self.log_base], self.log_values])
        d = np.diff(seq)
        if np.all(d == 0):
            return 0
        if np.all(d >= 0):
            return 1
        if np.all(d <= 0):
            return -1
        return None


@dataclass(frozen=True)
class ExponentialGrowth:
    """``kappa(r) = exp(r**p)`` (non-decreasing, unbounded, ``>= 1``)."""

    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("growth order must be positive")

    def log(self, r):
        r = np.asarray(r, dtype=float)
        return _out(np.maximum(r, 0.0) ** self.p)

    def __call__(self, r):
        return _out(np.exp(np.asarray(self.log(r))))

    def log_derivative(self, a):
        """``log kappa'(a)`` for ``a > 0``."""
        return math.log(self.p) + (self.p - 1.0) * math.log(a) + a ** self.p

    def inverse(self, s):
        """Generalized inverse ``inf{a >= 0 : s <= kappa(a)}``."""
        s = np.asarray(s, dtype=float)
        out = np.where(s <= 1.0, 0.0, np.log(np.maximum(s, 1.0)) ** (1.0 / self.p))
        return _out(out)


@dataclass(frozen=True)
class GrowthEnvelope:
    """Pointwise bounds ``lower(d) <= h <= upper(d)`` on a multiplier ``h``."""

    lower: object
    upper: object
    description: str = ""

    def check(self, radii, tol=1e-12):
        """Verify ``lower <= 1 <= upper`` and the monotonicity on ``radii``."""
        r = np.sort(np.asarray(radii, dtype=float))
        lo = np.asarray(self.lower(r), dtype=float) * np.ones_like(r)
        up = np.asarray(self.upper(r), dtype=float) * np.ones_like(r)
        ok = (
            np.all(lo <= 1 + tol)
            and np.all(up >= 1 - tol)
            and np.all(np.diff(lo) <= tol)
            and np.all(np.diff(up) >= -tol)
            and np.all(lo > 0)
        )
        return bool(ok)

    def bounds_at(self, dist):
        return (
            np.asarray(self.lower(dist), dtype=float) * np.ones(np.shape(dist)),
            np.asarray(self.upper(dist), dtype=float) * np.ones(np.shape(dist)),
        )


# --------------------------------------------------------------------------
# the cone


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """The test-function cone ``F`` (and implicitly its dual ``G``) over a measure.

    Derived on construction: the positive-tail rows (one per breakpoint
    ``b > m1``, coefficient ``alpha(b)``), the negative-tail rows (one per
    breakpoint ``b > m2``, coefficient ``alpha_tilde(b)``) and the sign region
    (atoms in ``B_{m2}``, or all atoms when ``alpha_tilde`` is zero).
    """

    measure: DiscreteMeasure
    alpha: TailFunction
    alpha_tilde: TailFunction
    m1: float
    m2: float
    pos_breaks: np.ndarray = field(init=False, repr=False)
    pos_coef: np.ndarray = field(init=False, repr=False)
    pos_masks: np.ndarray = field(init=False, repr=False)
    neg_breaks: np.ndarray = field(init=False, repr=False)
    neg_coef: np.ndarray = field(init=False, repr=False)
    neg_masks: np.ndarray = field(init=False, repr=False)
    sign_region: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        m1, m2 = float(self.m1), float(self.m2)
        if not (0 < m1 <= m2) or not math.isfinite(m2):
            raise ValueError(f"need 0 < m1 <= m2 < inf, got m1={m1}, m2={m2}")
        set_(self, "m1", m1)
        set_(self, "m2", m2)
        mu = self.measure
        if mu.ball_mass(m1) <= 0:
            raise ValueError("the measure must charge the ball B_{m1}")
        if self.alpha.is_zero:
            raise ValueError("alpha must be strictly positive; only alpha_tilde may be zero")
        d = mu.dist_from_base
        pb = breakpoints(mu, m1)
        pc = np.atleast_1d(np.asarray(self.alpha(pb), dtype=float))
        if np.any(pc <= 0):
            raise ValueError("alpha must be strictly positive")
        if np.any(np.diff(pc) > 1e-15 * np.maximum(1.0, pc[:-1])):
            raise ValueError("alpha is increasing somewhere on the breakpoints")
        set_(self, "pos_breaks", pb)
        set_(self, "pos_coef", pc)
        set_(self, "pos_masks", d[None, :] >= pb[:, None])
        if self.alpha_tilde.is_zero:
            nb = np.empty(0)
            set_(self, "sign_region", np.ones(mu.n, dtype=bool))
        else:
            nb = breakpoints(mu, m2)
            set_(self, "sign_region", d <= m2)
        nc = np.atleast_1d(np.asarray(self.alpha_tilde(nb), dtype=float)) if nb.size else np.empty(0)
        if np.any(np.diff(nc) > 1e-15 * np.maximum(1.0, nc[:-1]) if nc.size > 1 else False):
            raise ValueError("alpha_tilde is increasing somewhere on the breakpoints")
        set_(self, "neg_breaks", nb)
        set_(self, "neg_coef", nc)
        set_(self, "neg_masks", d[None, :] >= nb[:, None])
        for name in ("pos_breaks", "pos_coef", "pos_masks", "neg_breaks", "neg_coef", "neg_masks", "sign_region"):
            getattr(self, name).setflags(write=False)
        far = 10.0 * max(mu.max_radius, m2)
        a_m1 = float(self.alpha(m1))
        if a_m1 > 1e-290 and float(self.alpha(far)) > 1e-6 * a_m1:
            warnings.warn("alpha does not appear to decay to zero", stacklevel=2)

    @property
    def n_rows(self):
        return self.pos_breaks.size + self.neg_breaks.size

    @property
    def is_classic(self):
        """True when every row is implied by nonnegativity: F is the nonnegative orthant."""
        if not np.all(self.sign_region):
            return False
        tails = tail_mass_ge(self.measure, self.pos_breaks) if self.pos_breaks.size else np.empty(0)
        return bool(np.all(np.atleast_1d(tails) <= 0) or np.all(self.pos_coef >= 1.0))

    def with_m(self, m1, m2=None):
        return ConeSpec(self.measure, self.alpha, self.alpha_tilde, m1, m1 if m2 is None else m2)

    def to_dict(self):
        return {
            "alpha": self.alpha.to_dict(),
            "alpha_tilde": self.alpha_tilde.to_dict(),
            "m1": self.m1,
            "m2": self.m2,
        }

    @classmethod
    def from_dict(cls, d, measure):
        alpha = tail_from_dict(d["alpha"], measure)
        at = d.get("alpha_tilde", d["alpha"])
        alpha_tilde = tail_from_dict(at, measure)
        m1 = float(d["m1"])
        m2 = float(d.get("m2", m1))
        return cls(measure, alpha, alpha_tilde, m1, m2)


class MembershipReport:
    """Outcome of a membership test; truthy iff the vector is a member."""

    def __init__(self, member, violations=(), witness=None, value=None):
        self.member = bool(member)
        self.violations = list(violations)
        self.witness = witness
        self.value = value

    def __bool__(self):
        return self.member

    def __repr__(self):
        return f"MembershipReport(member={self.member}, violations={self.violations!r}, value={self.value!r})"

    def to_dict(self):
        out = {"member": self.member, "violations": self.violations}
        if self.value is not None:
            out["min_pairing"] = self.value
        if self.witness is not None:
            out["witness"] = np.asarray(self.witness).tolist()
        return out


def _check_len(cone, vec, name="vector"):
    v = np.asarray(vec, dtype=float).ravel()
    if v.size != cone.measure.n:
        raise ValueError(f"{name} has length {v.size}, expected {cone.measure.n}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def row_slacks(cone, f):
    """Slacks of the sign, positive-tail and negative-tail rows (>= 0 means satisfied)."""
    f = _check_len(cone, f)
    w = cone.measure.weights
    total = float(f @ w)
    fp, fm = np.maximum(f, 0.0), np.maximum(-f, 0.0)
    sign = f[cone.sign_region]
    pos = cone.pos_coef * total - cone.pos_masks.astype(float) @ (w * fp)
    neg = cone.neg_coef * total - cone.neg_masks.astype(float) @ (w * fm)
    return sign, pos, neg, total


def is_in_F(cone, f, tol=F_TOL):
    """Membership of ``f`` in the test-function cone.

    The absolute tolerance ``tol`` is applied to slacks measured relative to
    ``max(1, sum |f| w)`` so that the verdict does not depend on the scale of ``f``.
    """
    f = _check_len(cone, f)
    scale = max(1.0, float(np.abs(f) @ cone.measure.weights))
    sign, pos, neg, _ = row_slacks(cone, f)
    viol = []
    idx = np.flatnonzero(cone.sign_region)
    for i in np.flatnonzero(sign < -tol * scale):
        viol.append({"kind": "sign", "atom": int(idx[i]), "slack": float(sign[i])})
    for k in np.flatnonzero(pos < -tol * scale):
        viol.append({"kind": "positive-tail", "radius": float(cone.pos_breaks[k]), "slack": float(pos[k])})
    for k in np.flatnonzero(neg < -tol * scale):
        viol.append({"kind": "negative-tail", "radius": float(cone.neg_breaks[k]), "slack": float(neg[k])})
    return MembershipReport(not viol, viol)


def is_in_G(cone, g, tol=G_TOL):
    """Membership of ``g`` in the dual cone, decided by a linear program.

    Minimizes ``sum f g w`` over ``f`` in F normalized by ``sum f w = 1`` (a
    bounded slice of the pointed lifted cone), with ``g`` scaled to unit
    sup-norm. Members have minimum ``>= -tol``; otherwise the minimizing
    ``f`` is returned as witness.
    """
    from .lp import OPTIMAL, lifted_optimize

    g = _check_len(cone, g)
    s = float(np.abs(g).max())
    if s == 0:
        return MembershipReport(True, value=0.0)
    res, f = lifted_optimize(cone, g / s, [(np.ones(cone.measure.n), 1.0)], maximize=False)
    if res.status != OPTIMAL:
        raise RuntimeError(f"dual-cone membership program ended with status {res.status}")
    val = float(res.value)
    if val >= -tol:
        return MembershipReport(True, value=val)
    return MembershipReport(False, [{"kind": "dual", "min_pairing": val}], witness=f, value=val)


# --------------------------------------------------------------------------
# tail controls for dual members


@dataclass(frozen=True, eq=False)
class BetaPair:
    """Tail controls ``beta_tilde`` (on ``[m1, inf)``) and ``beta`` (on ``[m2, inf)``).

    ``beta_tilde(r) = sup_{a >= r} mu(B_a^c) / min(alpha(a), 1) / mu(B_{m1})``.
    Between breakpoints the numerator is constant and the continuous
    denominator is smallest at the right end, so the supremum over an
    interval ending at breakpoint ``b`` is ``mu({d >= b}) / min(alpha(b), 1)``;
    the overall supremum is a suffix maximum over breakpoints ``b > r``.
    ``beta`` does the same with ``alpha_tilde`` and adds ``mu(B_r^c)``.
    """

    cone: ConeSpec
    breaks: np.ndarray
    tilde_terms: np.ndarray
    plain_terms: np.ndarray
    inner_mass: float

    @staticmethod
    def _suffix_max(x):
        if x.size == 0:
            return np.zeros(1)
        return np.append(np.maximum.accumulate(x[::-1])[::-1], 0.0)

    def beta_tilde(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.cone.m1 - 1e-15):
            raise ValueError("beta_tilde is defined for r >= m1")
        idx = np.searchsorted(self.breaks, r, side="right")
        return _out(self._suffix_max(self.tilde_terms)[idx] / self.inner_mass)

    def beta(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.cone.m2 - 1e-15):
            raise ValueError("beta is defined for r >= m2")
        idx = np.searchsorted(self.breaks, r, side="right")
        sup = self._suffix_max(self.plain_terms)[idx]
        tm = np.asarray(tail_mass(self.cone.measure, r))
        with np.errstate(invalid="ignore"):
            out = (sup + tm) / self.inner_mass
        return _out(out)


def beta_pair(cone):
    """Exact interval-wise evaluation of the tail controls of the dual cone."""
    mu = cone.measure
    b = breakpoints(mu, cone.m1)
    t = np.atleast_1d(tail_mass_ge(mu, b)) if b.size else np.empty(0)
    a = np.atleast_1d(cone.alpha(b)) if b.size else np.empty(0)
    tilde_terms = t / np.minimum(a, 1.0)
    if cone.alpha_tilde.is_zero:
        plain_terms = np.where(t > 0, np.inf, 0.0)
    else:
        at = np.atleast_1d(cone.alpha_tilde(b)) if b.size else np.empty(0)
        plain_terms = t / at
    return BetaPair(cone, b, tilde_terms, plain_terms, float(mu.ball_mass(cone.m1)))


@dataclass
class TailBoundReport:
    max_relative_violation: float
    per_inequality: dict
    skipped: dict
    n_f: int
    n_g: int

    @property
    def ok(self):
        return self.max_relative_violation <= 1e-9

    def to_dict(self):
        return {
            "max_relative_violation": self.max_relative_violation,
            "per_inequality": self.per_inequality,
            "skipped": self.skipped,
            "n_f": self.n_f,
            "n_g": self.n_g,
        }


def _rel(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(invalid="ignore"):
        v = np.where(np.isinf(rhs) & (rhs > 0), -np.inf, (lhs - rhs) / np.maximum(1.0, np.abs(rhs)))
    return float(np.max(v, initial=-np.inf))


def check_tail_bounds(cone, f_samples=(), g_samples=(), verify_membership=True):
    """Evaluate the tail inequalities for members of F and G at all relevant radii.

    Both sides are piecewise constant (or, for ``alpha``-bounds, worst at the
    left limit of a breakpoint), so the bounds are checked at the range start
    and at every breakpoint past it, which covers every radius. Returns the
    maximum relative violation ``(lhs - rhs) / max(1, |rhs|)``; the two
    normalized ``g`` bounds are skipped (and flagged) when
    ``beta_tilde(m1) >= 1``.
    """
    mu = cone.measure
    w, d = mu.weights, mu.dist_from_base
    bp = beta_pair(cone)
    worst = {}
    skipped = {}

    def record(name, value):
        worst[name] = max(worst.get(name, -np.inf), value)

    b2 = breakpoints(mu, cone.m2)
    b1 = breakpoints(mu, cone.m1)
    r_f = np.concatenate([[cone.m2], b2])
    n_f = 0
    for f in f_samples:
        f = _check_len(cone, f, "f sample")
        if verify_membership and not is_in_F(cone, f):
            raise NotInConeError("f sample is not in F", is_in_F(cone, f))
        total = float(f @ w)
        if total <= 0:
            raise ValueError("f sample must have positive integral")
        f = f / total
        af = np.abs(f) * w
        # point form at m2 with the strict tail, left-limit form at breakpoints
        lhs = [af[d > cone.m2].sum()] + [af[d >= b].sum() for b in b2]
        rhs = [cone.alpha(cone.m2) + cone.alpha_tilde(cone.m2)] + [cone.alpha(b) + cone.alpha_tilde(b) for b in b2]
        record("tailbound1", _rel(lhs, rhs))
        record("tailbound2", _rel(af.sum(), 1 + 2 * cone.alpha_tilde(cone.m2)))
        n_f += 1

    bt_m1 = float(bp.beta_tilde(cone.m1))
    n_g = 0
    r1 = np.concatenate([[cone.m1], b1])
    r2 = np.concatenate([[cone.m2], b2])
    for g in g_samples:
        g = _check_len(cone, g, "g sample")
        if verify_membership and not is_in_G(cone, g):
            raise NotInConeError("g sample is not in G", is_in_G(cone, g))
        gm = np.maximum(-g, 0.0) * w
        gp = np.maximum(g, 0.0) * w
        inner = float((g * w)[d <= cone.m1].sum())
        lhs = [gm[d > r].sum() for r in r1]
        record("tailneg", _rel(lhs, np.asarray(bp.beta_tilde(r1)) * inner))
        lhs = [gp[d > r].sum() for r in r2]
        beta_vals = np.asarray(bp.beta(r2))
        with np.errstate(invalid="ignore"):
            rhs = np.where(np.isinf(beta_vals) & (inner == 0), 0.0, beta_vals * inner)
        record("tailpos", _rel(lhs, rhs))
        total = float(g @ w)
        n_g += 1
        if bt_m1 >= 1:
            skipped["tailbound3"] = skipped["tailbound4"] = "precondition-unmet"
            continue
        if total <= 0:
            skipped["normalized"] = "non-positive integral"
            continue
        ag = np.abs(g / total) * w
        lhs = [ag[d > r].sum() for r in r2]
        rhs = (np.asarray(bp.beta_tilde(r2)) + beta_vals) / (1 - bt_m1)
        record("tailbound3", _rel(lhs, rhs))
        record("tailbound4", _rel(ag.sum(), 1 + 2 * bt_m1 / (1 - bt_m1)))
    mx = max(worst.values(), default=-np.inf)
    return TailBoundReport(float(mx), {k: float(v) for k, v in worst.items()}, skipped, n_f, n_g)


# --------------------------------------------------------------------------
# multiplier maps


def _log_diff(log_hi, log_lo):
    """``log(exp(log_hi) - exp(log_lo))`` for ``log_hi >= log_lo``."""
    if log_lo == -np.inf:
        return log_hi
    if log_hi <= log_lo:
        return -np.inf
    return log_hi + math.log(-math.expm1(log_lo - log_hi))


def _xi_step(alpha, kappa, r):
    terms = [float(kappa.log(r)) + float(alpha.log(r))]
    prev = kappa.log_base
    for a, lv in zip(kappa.knots, kappa.log_values):
        if a > r:
            dl = _log_diff(lv, prev)
            if dl > -np.inf:
                terms.append(float(alpha.log(a)) + dl)
        prev = lv
    return float(logsumexp(terms))


def _xi_analytic(alpha, kappa, r):
    """``kappa(r) alpha(r) + int_r^inf alpha(a) kappa'(a) da`` by adaptive quadrature."""

    def logf(a):
        return float(alpha.log(a)) + kappa.log_derivative(a)

    start = max(r, 1e-300)
    head = float(kappa.log(r)) + float(alpha.log(r))
    h = max(1.0, r) * 0.25
    grid = start + h * np.linspace(0, 8, 33)
    shift = max(logf(a) for a in grid)
    total = 0.0
    lo = start
    width = h
    for _ in range(200):
        hi = lo + width
        end_log = logf(hi) - shift
        if end_log > 700:
            raise PreconditionError("xi-divergent", "the growth integral diverges", {"r": r})
        seg, err = integrate.quad(
            lambda a: math.exp(min(logf(a) - shift, 700.0)), lo, hi, epsabs=0.0, epsrel=1e-12, limit=200
        )
        total += seg
        if total > 0 and seg <= 1e-16 * total and end_log < math.log(total) - 40:
            break
        if total == 0 and end_log < -745:
            break
        lo = hi
        width *= 2.0
        if not math.isfinite(total):
            raise PreconditionError("xi-divergent", "the growth integral diverges", {"r": r})
    else:
        raise PreconditionError("xi-divergent", "the growth integral does not converge", {"r": r})
    if total <= 0:
        return head
    return float(np.logaddexp(head, shift + math.log(total)))


def log_xi_transform(alpha, kappa, r):
    """Natural log of :func:`xi_transform`."""
    if alpha.is_zero:
        return -np.inf
    if isinstance(kappa, StepFunction):
        if kappa.monotone() == -1:
            raise ValueError("growth function must be non-decreasing")
        return _xi_step(alpha, kappa, float(r))
    if hasattr(kappa, "log_derivative"):
        return _xi_analytic(alpha, kappa, float(r))
    raise TypeError("unsupported growth function")


def xi_transform(alpha, kappa, r):
    """``xi(r) = int_0^inf alpha(max(kappa^{-1}(s), r)) ds``.

    Split as ``kappa(r) alpha(r) + int_{(r, inf)} alpha d kappa``. Step growth
    functions give an exact finite sum over their jumps past ``r``; smooth
    growth functions use adaptive quadrature of ``alpha kappa'`` on doubling
    segments, raising ``"xi-divergent"`` when the integrand does not die out.
    No closed form is used for any family.
    """
    rr = np.asarray(r, dtype=float)
    if rr.ndim == 0:
        return float(math.exp(log_xi_transform(alpha, kappa, float(rr))))
    return np.array([math.exp(log_xi_transform(alpha, kappa, float(x))) for x in rr.ravel()]).reshape(rr.shape)


class XiTail(TailFunction):
    """``xi(r) / divisor`` for a base tail function and growth function."""

    def __init__(self, alpha, kappa, divisor):
        if not divisor > 0:
            raise ValueError("divisor must be positive")
        self.alpha = alpha
        self.kappa = kappa
        self.divisor = float(divisor)
        self._cache = {}

    def _log1(self, r):
        key = float(r)
        if key not in self._cache:
            self._cache[key] = log_xi_transform(self.alpha, self.kappa, key) - math.log(self.divisor)
        return self._cache[key]

    def log(self, r):
        r = np.asarray(r, dtype=float)
        if r.ndim == 0:
            return self._log1(float(r))
        return np.array([self._log1(x) for x in r.ravel()]).reshape(r.shape)

    def to_dict(self):
        return {"family": "xi", "divisor": self.divisor, "base": self.alpha.to_dict()}


def multiply_cone_map(cone, env, case):
    """Cone containing ``f h`` for every ``f`` in ``cone`` and every admissible ``h``.

    case ``"i"``: ``1 <= h <= env.upper(d)`` with a non-decreasing growth
    function; the target tails are ``xi / (1 - xi_tilde(m2))`` and require
    ``xi_tilde(m2) < 1``. case ``"ii"``: ``env.lower(d) <= h <= 1`` with a
    non-increasing ``lower``; the target tails are ``alpha / zeta`` with
    ``zeta = l(m2)(1 - alpha(m2)) - alpha_tilde(m2) > 0``. Violated
    preconditions raise ``PreconditionError("lemma-inapplicable")`` naming
    the inequality.
    """
    case = str(case).lower()
    m2 = cone.m2
    if case in ("i", "1"):
        kappa = env.upper
        if isinstance(kappa, StepFunction) and kappa.log_base < -1e-12:
            raise PreconditionError("lemma-inapplicable", "growth function must be >= 1", {"inequality": "kappa >= 1"})
        xt = 0.0 if cone.alpha_tilde.is_zero else math.exp(log_xi_transform(cone.alpha_tilde, kappa, m2))
        if not xt < 1:
            raise PreconditionError(
                "lemma-inapplicable",
                f"xi_tilde(m2) = {xt!r} is not < 1",
                {"inequality": "xi_tilde(m2) < 1", "value": xt},
            )
        denom = 1.0 - xt
        gamma = XiTail(cone.alpha, kappa, denom)
        gamma_t = ZeroTail() if cone.alpha_tilde.is_zero else XiTail(cone.alpha_tilde, kappa, denom)
        return ConeSpec(cone.measure, gamma, gamma_t, cone.m1, cone.m2)
    if case in ("ii", "2"):
        lval = float(env.lower(m2))
        a2 = float(cone.alpha(m2))
        at2 = float(cone.alpha_tilde(m2))
        if not a2 < 1:
            raise PreconditionError(
                "lemma-inapplicable", f"alpha(m2) = {a2!r} is not < 1", {"inequality": "alpha(m2) < 1", "value": a2}
            )
        if not (0 < lval <= 1):
            raise PreconditionError(
                "lemma-inapplicable", f"l(m2) = {lval!r} is not in (0, 1]", {"inequality": "0 < l(m2) <= 1", "value": lval}
            )
        base = lval * (1.0 - a2)
        zeta = base - at2
        if not (1.0 - at2 / base) > 0:
            raise PreconditionError(
                "lemma-inapplicable",
                "1 - alpha_tilde(m2) / (l(m2)(1 - alpha(m2))) is not > 0",
                {"inequality": "1 - alpha_tilde(m2)/(l(m2)(1-alpha(m2))) > 0", "value": 1.0 - at2 / base},
            )
        at = cone.alpha_tilde if cone.alpha_tilde.is_zero else ScaledTail(cone.alpha_tilde, 1.0 / zeta)
        return ConeSpec(cone.measure, ScaledTail(cone.alpha, 1.0 / zeta), at, cone.m1, cone.m2)
    raise ValueError("case must be 'i' or 'ii'")
