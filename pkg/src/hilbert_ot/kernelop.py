"""Kernel integral operators, lower decay, non-expansiveness and contraction certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .space import DiscreteMeasure, tail_mass, tail_mass_ge
from .tailcone import ConeSpec, SqrtTail, StepFunction, beta_pair

__all__ = [
    "KernelSpec",
    "build_kernel",
    "apply_kernel",
    "NonexpansiveCheck",
    "check_nonexpansive",
    "Certificate",
    "contraction_certificate",
    "auto_cone",
    "birkhoff_kappa",
]

MIN_KERNEL = 1e-280


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """``K[i, j] = exp(-C[i, j] / eps)`` between atoms ``i`` of ``mu`` and ``j`` of ``nu``.

    ``lower_decay`` is the exact step function ``l(r) = min K`` over pairs
    with both atoms in the closed ball ``B_r`` (1 when there is no such pair),
    with a step at every radius of either measure.
    """

    cost: np.ndarray
    epsilon: float
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    K: np.ndarray = field(init=False, repr=False)
    lower_decay: StepFunction = field(init=False, repr=False)
    joint_radii: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        C = np.asarray(self.cost, dtype=float)
        if C.shape != (self.mu.n, self.nu.n):
            raise ValueError(f"cost has shape {C.shape}, expected {(self.mu.n, self.nu.n)}")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise ValueError("cost must be finite and nonnegative")
        eps = float(self.epsilon)
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "epsilon", eps)
        logK = -C / eps
        K = np.exp(logK)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "K", K)
        di, dj = self.mu.dist_from_base, self.nu.dist_from_base
        reach = np.maximum(di[:, None], dj[None, :]).ravel()
        order = np.argsort(reach, kind="stable")
        run_min = np.minimum.accumulate(logK.ravel()[order])
        radii = np.unique(np.concatenate([di, dj]))
        # last pair with reach <= r gives the running minimum at r
        pos = np.searchsorted(reach[order], radii, side="right") - 1
        log_l = np.where(pos >= 0, run_min[np.maximum(pos, 0)], 0.0)
        object.__setattr__(self, "joint_radii", radii)
        object.__setattr__(self, "lower_decay", StepFunction(radii, log_l, 0.0))
        for a in (C, K, radii):
            a.setflags(write=False)

    @property
    def min_entry(self):
        return float(self.K.min())

    def transpose(self):
        """Kernel with the roles of the two measures swapped."""
        return KernelSpec(self.cost.T, self.epsilon, self.nu, self.mu)


def build_kernel(cost, eps, mx, my):
    return KernelSpec(cost, eps, mx, my)


def apply_kernel(k, side, f):
    """Integrate against one marginal.

    ``side="mu"`` (alias ``"row"``): ``f`` lives on the atoms of ``mu`` and the
    result ``sum_i K[i, j] f_i w_i`` lives on ``nu``. ``side="nu"`` (alias
    ``"col"``): ``f`` lives on ``nu`` and the result ``sum_j K[i, j] f_j v_j``
    lives on ``mu``.
    """
    f = np.asarray(f, dtype=float)
    if side in ("mu", "row"):
        if f.shape[0] != k.mu.n:
            raise ValueError("vector length does not match the atoms of mu")
        return k.K.T @ (k.mu.weights * f) if f.ndim == 1 else k.K.T @ (k.mu.weights[:, None] * f)
    if side in ("nu", "col"):
        if f.shape[0] != k.nu.n:
            raise ValueError("vector length does not match the atoms of nu")
        return k.K @ (k.nu.weights * f) if f.ndim == 1 else k.K @ (k.nu.weights[:, None] * f)
    raise ValueError("side must be 'mu' or 'nu'")


@dataclass
class NonexpansiveCheck:
    """Conditions under which integrating against ``mu`` maps ``F^mu`` into ``F^nu``.

    ``slacks`` holds, for each condition, a value that is ``>= 0`` iff the
    condition holds: ``sign_on_ball`` (nonnegativity of images on ``B_{m2}``),
    ``mass_lower_bound`` (the value ``a_bar``), ``positive_tail`` and
    ``negative_tail`` (smallest row slack over the breakpoints of ``nu``).
    """

    holds: bool
    a_bar: float
    slacks: dict

    def to_dict(self):
        return {"holds": self.holds, "a_bar": self.a_bar, "slacks": dict(self.slacks)}


def _same_radii(cone_a, cone_b):
    if cone_a.m1 != cone_b.m1 or cone_a.m2 != cone_b.m2:
        raise ValueError("the two cones must share m1 and m2")


def check_nonexpansive(k, cone_mu, cone_nu):
    """Evaluate the four sufficient conditions exactly on the breakpoint grid.

    ``cone_mu`` (tails ``alpha_1``) lives on ``k.mu``, ``cone_nu`` (tails
    ``alpha_2``) on ``k.nu``. ``a_bar = sup_{r >= m1} l(r) nu(B_r)(1 - alpha_1(r))
    - alpha_1~(m2)``: on each interval between consecutive joint radii the
    first two factors are constant and the supremum is approached at the right
    end, where ``alpha_1`` is smallest; past the last radius it tends to
    ``l(R_max)``.
    """
    _same_radii(cone_mu, cone_nu)
    if cone_mu.measure is not k.mu or cone_nu.measure is not k.nu:
        raise ValueError("cones must be built over the kernel's measures")
    m1, m2 = cone_mu.m1, cone_mu.m2
    a1, at1 = cone_mu.alpha, cone_mu.alpha_tilde
    l = k.lower_decay
    at1_m2 = float(at1(m2))
    sign = float(l(m2)) * (1.0 - float(a1(m2))) - at1_m2

    c = np.concatenate([[m1], k.joint_radii[k.joint_radii > m1]])
    right = np.append(np.asarray(a1(c[1:])) if c.size > 1 else np.empty(0), 0.0)
    vals = np.asarray(l(c)) * (1.0 - np.asarray(tail_mass(k.nu, c))) * (1.0 - right) - at1_m2
    a_bar = float(vals.max())

    nb = cone_nu.pos_breaks
    t_nu = np.atleast_1d(tail_mass_ge(k.nu, nb)) if nb.size else np.empty(0)
    if a_bar > 0:
        pos = cone_nu.pos_coef - (1.0 + at1_m2) / a_bar * t_nu
    else:
        pos = np.full(nb.shape, -np.inf)
    nbn = k.nu.radii[k.nu.radii > m2]
    t_nn = np.atleast_1d(tail_mass_ge(k.nu, nbn)) if nbn.size else np.empty(0)
    at2 = np.atleast_1d(cone_nu.alpha_tilde(nbn)) if nbn.size else np.empty(0)
    if a_bar > 0:
        neg = at2 - at1_m2 / a_bar * t_nn
    else:
        neg = np.full(nbn.shape, -np.inf)
    slacks = {
        "sign_on_ball": sign,
        "mass_lower_bound": a_bar,
        "positive_tail": float(pos.min(initial=np.inf)),
        "negative_tail": float(neg.min(initial=np.inf)),
    }
    holds = sign >= 0 and a_bar > 0 and slacks["positive_tail"] >= 0 and slacks["negative_tail"] >= 0
    return NonexpansiveCheck(bool(holds), a_bar, slacks)


def birkhoff_kappa(delta):
    """``tanh(delta / 4)`` with ``inf -> 1``."""
    return 1.0 if math.isinf(delta) else math.tanh(delta / 4.0)


@dataclass
class Certificate:
    """Diameter bound ``delta = 2 log(ub / lb)`` and coefficient ``kappa = tanh(delta / 4)``."""

    r_star: float
    lb: float
    ub: float
    delta: float
    kappa: float
    valid: bool
    reasons: list
    extras: dict = field(default_factory=dict)

    def to_dict(self, include_extras=False):
        out = {
            "r_star": self.r_star,
            "lb": self.lb,
            "ub": self.ub,
            "delta": self.delta,
            "kappa": self.kappa,
            "valid": self.valid,
            "reasons": list(self.reasons),
        }
        if include_extras:
            out.update(self.extras)
        return out


def _candidate_radii(k, cone_mu):
    m2 = cone_mu.m2
    jr = k.joint_radii[k.joint_radii > m2]
    left = np.nextafter(jr, -np.inf)
    left = left[left >= m2]
    top = max(float(k.joint_radii[-1]), m2, 1e-12)
    far = []
    r = top
    for _ in range(80):
        r *= 1.5
        far.append(r)
        if float(cone_mu.alpha(r)) + float(cone_mu.alpha_tilde(r)) <= 1e-300:
            break
    return np.unique(np.concatenate([[m2], jr, left, far]))


def contraction_certificate(k, cone_mu, cone_nu, strict=True):
    """Certificate that integrating against ``nu`` contracts ``G^nu`` into ``G^mu``.

    For unit-mass ``f`` in ``F^mu`` and ``g`` in ``G^nu`` the pairing
    ``int (K g) f`` is bounded below, for any ``r >= m2``, by
    ``l(r) - at1(m2) - 4 bt2(m1) - 4 a1(r) - 4 at1(r) - 5 b2(r) - 5 bt2(r)``
    (valid when ``at1(m2) <= 1/2``, ``bt2(m1) <= 1/2``) and above by
    ``(1 + 2 at1(m2)) (1 + 2 bt2(m1) / (1 - bt2(m1)))``; every candidate ``r``
    gives a valid lower bound, so the best over a finite set is used.

    With ``strict`` a failed non-expansiveness check raises
    ``PreconditionError("nonexpansive-failed")``; otherwise it is reported.
    """
    ne = check_nonexpansive(k, cone_mu, cone_nu)
    if strict and not ne.holds:
        raise PreconditionError("nonexpansive-failed", "the non-expansiveness conditions fail", ne.slacks)
    reasons = []
    if not ne.holds:
        reasons.append("nonexpansive check failed")
    m1, m2 = cone_mu.m1, cone_mu.m2
    bp2 = beta_pair(cone_nu)
    at1_m2 = float(cone_mu.alpha_tilde(m2))
    bt2_m1 = float(bp2.beta_tilde(m1))
    cands = _candidate_radii(k, cone_mu)
    l = np.asarray(k.lower_decay(cands))
    a1 = np.asarray(cone_mu.alpha(cands))
    at1 = np.asarray(cone_mu.alpha_tilde(cands))
    b2 = np.asarray(bp2.beta(cands))
    bt2 = np.asarray(bp2.beta_tilde(cands))
    with np.errstate(invalid="ignore"):
        lbs = l - at1_m2 - 4 * bt2_m1 - 4 * a1 - 4 * at1 - 5 * b2 - 5 * bt2
    lbs = np.where(np.isnan(lbs), -np.inf, lbs)
    i = int(np.argmax(lbs))
    lb, r_star = float(lbs[i]), float(cands[i])
    if bt2_m1 < 1:
        ub = (1 + 2 * at1_m2) * (1 + 2 * bt2_m1 / (1 - bt2_m1))
    else:
        ub = math.inf
    if at1_m2 > 0.5:
        reasons.append("alpha-tilde precondition")
    if bt2_m1 > 0.5:
        reasons.append("beta-tilde precondition")
    if float(k.lower_decay(r_star)) > 1:
        reasons.append("lower decay exceeds one")
    if not lb > 0:
        reasons.append("lower bound not positive")
    if lb > 0 and math.isfinite(ub):
        delta = 2.0 * (math.log(ub) - math.log(lb))
    else:
        delta = math.inf
    kappa = birkhoff_kappa(delta)
    if not reasons and not kappa < 1:
        reasons.append("kappa rounds to one")
    extras = {
        "nonexpansive": ne.to_dict(),
        "alpha_tilde_m2": at1_m2,
        "beta_tilde_m1": bt2_m1,
        "m1": m1,
        "m2": m2,
    }
    return Certificate(r_star, lb, ub, delta, kappa, not reasons, reasons, extras)


def auto_cone(measure, k, max_candidates=None):
    """Search ``m = m1 = m2`` for the square-root-tail cone until a certificate is valid.

    Candidates are the positive radii of ``measure`` in ascending order,
    followed by one radius past the support where the envelope has reached
    its floor (there the cone is the nonnegative orthant and the certificate
    reduces to the classical positive-kernel bound). Returns ``(cone, cert, sweep)``
    where ``sweep`` lists ``(m, kappa, valid)`` for every candidate tried.
    """
    if k.mu is not measure or k.nu is not measure:
        raise ValueError("auto_cone needs the same measure on both sides of the kernel")
    alpha = SqrtTail(measure)
    radii = measure.radii[measure.radii > 0]
    past = float(alpha.knots[-1])
    cands = list(radii) + [past]
    if max_candidates is not None:
        cands = cands[:max_candidates] + [past]
    sweep = []
    for m in cands:
        if measure.ball_mass(m) <= 0:
            continue
        cone = ConeSpec(measure, alpha, alpha, m, m)
        cert = contraction_certificate(k, cone, cone, strict=False)
        sweep.append((float(m), cert.kappa, cert.valid))
        if cert.valid:
            cert.extras["m"] = float(m)
            return cone, cert, sweep
    raise PreconditionError("no-valid-m", "no radius yields a valid certificate", {"sweep": sweep})
