"""Sinkhorn iterations, convergence tracking and their contraction certificates."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NotInConeError, PreconditionError
from .hilbert import classic_hilbert_distance, hilbert_distance
from .kernelop import (
    MIN_KERNEL,
    KernelSpec,
    apply_kernel,
    check_nonexpansive,
    contraction_certificate,
    birkhoff_kappa,
)
from .space import CostSpec, DiscreteMeasure, cost_matrix, tail_mass_ge
from .tailcone import (
    ConeSpec,
    ExponentialTail,
    GrowthEnvelope,
    StepFunction,
    ZeroTail,
    beta_pair,
    is_in_G,
    log_xi_transform,
    multiply_cone_map,
)

__all__ = [
    "EotProblem",
    "sinkhorn_step",
    "half_steps",
    "run_sinkhorn",
    "ConvergenceReport",
    "primal_plan",
    "tv_primal",
    "eot_objective",
    "marginal_error",
    "growth_envelope",
    "ConeLadder",
    "cone_ladder",
    "SinkhornCertificate",
    "certify_sinkhorn",
    "select_ladder_m",
    "product_cone",
    "tv_bound_chain",
    "fit_log_slope",
    "iterate",
    "plan_mass",
    "CSV_HEADER",
]

CSV_HEADER = ["n", "d_hilbert_mu", "d_hilbert_nu", "tv_primal", "marginal_err_l1", "eot_objective"]
_FIT_FLOOR = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class EotProblem:
    """Marginals, kernel and regularization of one entropic transport problem."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    kernel: KernelSpec
    epsilon: float

    def __post_init__(self):
        k = self.kernel
        if k.mu is not self.mu or k.nu is not self.nu:
            raise ValueError("kernel must be built over the problem's measures")
        if abs(k.epsilon - float(self.epsilon)) > 0:
            raise ValueError("kernel epsilon differs from the problem epsilon")
        if k.min_entry < MIN_KERNEL:
            raise ValueError(
                f"smallest kernel entry {k.min_entry:g} is below {MIN_KERNEL:g}; "
                "the multiplicative iteration would underflow"
            )

    @classmethod
    def from_cost(cls, mu, nu, cost, epsilon):
        C = cost_matrix(cost, mu, nu) if isinstance(cost, CostSpec) else np.asarray(cost, dtype=float)
        return cls(mu, nu, KernelSpec(C, epsilon, mu, nu), float(epsilon))

    @property
    def cost(self):
        return self.kernel.cost

    def swapped(self):
        """The problem with the two marginals exchanged (transposed cost)."""
        return EotProblem(self.nu, self.mu, self.kernel.transpose(), self.epsilon)


def half_steps(prob, g1):
    """One full step from a potential on ``mu``: returns ``(g2_new, g1_new)``.

    ``g2_new = 1 / (integral of K g1 against mu)`` and
    ``g1_new = 1 / (integral of K g2_new against nu)``.
    """
    g1 = np.asarray(g1, dtype=float)
    if np.any(g1 <= 0) or not np.all(np.isfinite(g1)):
        raise ValueError("potential must be finite and strictly positive")
    a = apply_kernel(prob.kernel, "mu", g1)
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise FloatingPointError("kernel image lost positivity; data are corrupted")
    g2 = 1.0 / a
    b = apply_kernel(prob.kernel, "nu", g2)
    if np.any(b <= 0) or not np.all(np.isfinite(b)):
        raise FloatingPointError("kernel image lost positivity; data are corrupted")
    return g2, 1.0 / b


def sinkhorn_step(prob, g):
    """``S o L_nu o S o L_mu`` applied to a potential on ``mu`` (``S`` = reciprocal)."""
    return half_steps(prob, g)[1]


def primal_plan(prob, g1, g2):
    """Plan density ``D[i, j] = K[i, j] g1[i] g2[j]`` relative to ``mu x nu``."""
    return prob.kernel.K * np.asarray(g1, dtype=float)[:, None] * np.asarray(g2, dtype=float)[None, :]


def plan_mass(prob, D):
    return float(prob.mu.weights @ D @ prob.nu.weights)


def tv_primal(prob, D1, D2):
    """``L1(mu x nu)`` norm of the density difference."""
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    if D1.shape != D2.shape or D1.shape != (prob.mu.n, prob.nu.n):
        raise ValueError("plan densities have mismatched shapes")
    return float(prob.mu.weights @ np.abs(D1 - D2) @ prob.nu.weights)


def marginal_error(prob, D):
    """Sum of the ``L1`` errors of the two marginal densities."""
    w, v = prob.mu.weights, prob.nu.weights
    row = D @ v
    col = w @ D
    return float(w @ np.abs(row - 1.0) + v @ np.abs(col - 1.0))


def eot_objective(prob, D):
    """``int c dpi + eps * H(pi | mu x nu)`` for a plan given by its density ``D``."""
    D = np.asarray(D, dtype=float)
    if np.any(D < 0):
        raise ValueError("plan density must be nonnegative")
    w, v = prob.mu.weights, prob.nu.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(D > 0, D * np.log(np.where(D > 0, D, 1.0)), 0.0)
    return float(w @ (prob.cost * D) @ v + prob.epsilon * (w @ ent @ v))


def fit_log_slope(values, floor=_FIT_FLOOR):
    """Least-squares slope of ``log(values)`` against the index over the last half.

    Only finite entries above ``floor`` are used (values at round-off level
    carry no rate information). Returns ``nan`` with fewer than two points.
    """
    v = np.asarray(values, dtype=float)
    n = np.arange(1, v.size + 1)
    ok = np.isfinite(v) & (v > floor)
    idx = np.flatnonzero(ok)
    if idx.size < 2:
        return math.nan
    idx = idx[idx.size // 2 :] if idx.size >= 4 else idx
    if idx.size < 2:
        return math.nan
    x, y = n[idx], np.log(v[idx])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def _dist(cone, a, b):
    if cone is None:
        return classic_hilbert_distance(a, b)
    try:
        return hilbert_distance(cone, a, b, check=True)
    except NotInConeError:
        return math.nan


@dataclass
class ConvergenceReport:
    """Per-iteration diagnostics of one Sinkhorn run."""

    rows: list
    reference: str
    converged: bool
    n_iter: int
    degenerate_last: bool = False
    certificate: dict | None = None
    notes: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def fitted_log_slope(self):
        col = self.column("tv_primal")
        if self.degenerate_last and col.size:
            col = col[:-1]
        return fit_log_slope(col)

    @property
    def fitted_rate(self):
        s = self.fitted_log_slope
        return math.exp(s) if math.isfinite(s) else math.nan

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_HEADER)
            for r in self.rows:
                wr.writerow([str(int(r["n"]))] + [format(float(r[k]), ".17g") for k in CSV_HEADER[1:]])


def iterate(prob, g1, n):
    """``n`` full steps from ``g1``; returns ``(g1, g2)`` after the last step."""
    g2 = None
    for _ in range(n):
        g2, g1 = half_steps(prob, g1)
    return g1, g2


def run_sinkhorn(
    prob,
    max_iters=500,
    marginal_tol=1e-10,
    reference=None,
    init=None,
    cone_mu=None,
    cone_nu=None,
    track=True,
):
    """Iterate from ``init`` (default all ones on ``mu``) and log diagnostics.

    Stops once the ``L1`` marginal error of the current plan is at most
    ``marginal_tol`` or after ``max_iters`` steps. ``reference`` selects the
    comparison point of the distance and ``tv`` columns: a pair
    ``(g1_ref, g2_ref)``, ``"prepass"`` (the iterate after ``2 * max_iters``
    steps, ignoring the tolerance) or ``None`` (the final iterate; the last
    row is then flagged degenerate). Distances use the given cones, or the
    classical metric on positive vectors when no cone is given.

    Returns ``(g1, g2, report)``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    g1 = np.ones(prob.mu.n) if init is None else np.asarray(init, dtype=float).copy()
    notes = []
    if cone_mu is not None and not is_in_G(cone_mu, g1):
        notes.append("initial potential is outside the dual cone")
        warnings.warn("initial potential is outside the dual cone; the certified rate does not apply", stacklevel=2)
    hist = []
    converged = False
    for n in range(1, max_iters + 1):
        g2, g1 = half_steps(prob, g1)
        if track:
            hist.append((g1.copy(), g2.copy()))
        D = primal_plan(prob, g1, g2)
        if marginal_error(prob, D) <= marginal_tol:
            converged = True
            break
    n_iter = n
    if not track:
        return g1, g2, ConvergenceReport([], "none", converged, n_iter, notes=notes)

    degenerate = False
    if isinstance(reference, str) and reference == "prepass":
        start = np.ones(prob.mu.n) if init is None else np.asarray(init, dtype=float)
        r1, r2 = iterate(prob, start, 2 * max_iters)
        ref_mode = "prepass"
    elif reference is None:
        r1, r2 = g1, g2
        ref_mode = "final"
        degenerate = True
    else:
        r1, r2 = (np.asarray(x, dtype=float) for x in reference)
        ref_mode = "given"
    Dref = primal_plan(prob, r1, r2)
    rows = []
    for n, (a1, a2) in enumerate(hist, start=1):
        D = primal_plan(prob, a1, a2)
        rows.append(
            {
                "n": n,
                "d_hilbert_mu": _dist(cone_mu, a1, r1),
                "d_hilbert_nu": _dist(cone_nu, a2, r2),
                "tv_primal": tv_primal(prob, D, Dref),
                "marginal_err_l1": marginal_error(prob, D),
                "eot_objective": eot_objective(prob, D),
            }
        )
    rep = ConvergenceReport(rows, ref_mode, converged, n_iter, degenerate_last=degenerate, notes=notes)
    return g1, g2, rep


# --------------------------------------------------------------------------
# certification


def growth_envelope(k, cone_mu):
    """Pointwise bounds for normalized images of nonnegative dual members.

    For ``g >= 0`` in ``G`` over ``k.mu`` the image ``a`` of integrating
    against ``mu`` satisfies, after division by ``int g dmu``,
    ``l(max(d, m2)) / (1 + beta(m2)) <= a <= 1`` at every atom at distance
    ``d`` from the base point. Needs ``beta_tilde(m1) < 1``.
    """
    if cone_mu.measure is not k.mu:
        raise ValueError("cone must be built over the kernel's first measure")
    bp = beta_pair(cone_mu)
    bt = float(bp.beta_tilde(cone_mu.m1))
    if not bt < 1:
        raise PreconditionError(
            "envelope-unavailable", f"beta_tilde(m1) = {bt!r} is not < 1", {"inequality": "beta_tilde(m1) < 1", "value": bt}
        )
    b = float(bp.beta(cone_mu.m2))
    if not math.isfinite(b):
        raise PreconditionError("envelope-unavailable", "beta(m2) is infinite", {"inequality": "beta(m2) < inf"})
    m2 = cone_mu.m2
    l = k.lower_decay
    shift = math.log1p(b)
    knots = k.joint_radii[k.joint_radii > m2]
    lower = StepFunction(knots, np.asarray(l.log(knots)) - shift if knots.size else np.empty(0), float(l.log(m2)) - shift)
    return GrowthEnvelope(lower=lower, upper=StepFunction.constant(1.0), description="kernel-image")


def _inverse_square_growth(lower):
    """``kappa = 1 / lower**2`` as a non-decreasing step function."""
    return StepFunction(lower.knots, -2.0 * lower.log_values, -2.0 * lower.log_base)


@dataclass
class ConeLadder:
    """Nested exponents ``p < p2 < p1 < p + delta`` with exponential cones at a shared ``m``."""

    p: float
    delta: float
    m: float
    p1: float
    p2: float
    p3: float
    p_product: float
    cones: dict = field(default_factory=dict)

    def alpha(self, which):
        return ExponentialTail({"p1": self.p1, "p2": self.p2, "product": self.p_product}[which])

    def cone(self, measure, which):
        a = self.alpha(which)
        return ConeSpec(measure, a, a, self.m, self.m)

    def to_dict(self):
        return {
            "p": self.p,
            "delta": self.delta,
            "m": self.m,
            "p1": self.p1,
            "p2": self.p2,
            "p3": self.p3,
            "p_product": self.p_product,
        }


def cone_ladder(p, delta, m, mu=None, nu=None):
    """Ladder with ``p1 = p + delta/2``, ``p2 = (p + p1)/2``, ``p3 = p2`` and product order ``p + 3 delta/4``."""
    if not (p > 0 and delta > 0 and m > 0):
        raise ValueError("need p > 0, delta > 0 and m > 0")
    p1 = p + delta / 2.0
    p2 = 0.5 * (p + p1)
    lad = ConeLadder(p, delta, float(m), p1, p2, p2, p + 0.75 * delta)
    if mu is not None:
        lad.cones["mu_p1"] = lad.cone(mu, "p1")
        lad.cones["mu_p2"] = lad.cone(mu, "p2")
    if nu is not None:
        lad.cones["nu_p1"] = lad.cone(nu, "p1")
        lad.cones["nu_p2"] = lad.cone(nu, "p2")
    return lad


@dataclass
class SinkhornCertificate:
    """Full-step certificate: ``kappa = kappa_a * kappa_b`` when every gate passes."""

    r_star: float
    lb: float
    ub: float
    delta: float
    kappa: float
    valid: bool
    reasons: list
    gates: list
    half_steps: list
    m: float

    def to_dict(self):
        return {
            "r_star": self.r_star,
            "lb": self.lb,
            "ub": self.ub,
            "delta": self.delta,
            "kappa": self.kappa,
            "valid": self.valid,
            "reasons": list(self.reasons),
            "gates": list(self.gates),
            "half_steps": list(self.half_steps),
            "m": self.m,
        }


def _gate(gates, name, inequality, slack, strict=False):
    slack = float(slack)
    ok = slack > 0 if strict else slack >= 0
    if math.isnan(slack):
        ok = False
    gates.append({"gate": name, "inequality": inequality, "slack": slack, "passed": bool(ok)})
    return ok


def _half_step(k, source, target, label, gates):
    """Gates for ``S`` after integrating ``G(source)`` over ``k.mu`` into ``G(target)`` over ``k.nu``.

    ``source`` (exponent p1) lives on ``k.mu``; ``target`` (exponent p2) on
    ``k.nu``. The kernel map is certified with the transposed kernel, whose
    integration against its second measure is exactly this map.
    """
    kt = k.transpose()
    ne = check_nonexpansive(kt, target, source)
    s = ne.slacks
    _gate(
        gates,
        f"{label}:nonexpansive",
        "l(m)(1-a2(m)) - a2(m) >= 0, a_bar > 0, tail rows of the source cone",
        min(s["sign_on_ball"], s["mass_lower_bound"], s["positive_tail"], s["negative_tail"]),
    )
    cert = contraction_certificate(kt, target, source, strict=False)
    lb_slack = min(cert.lb, 0.5 - cert.extras["alpha_tilde_m2"], 0.5 - cert.extras["beta_tilde_m1"])
    _gate(gates, f"{label}:contraction", "lb > 0, alpha~(m) <= 1/2, beta~(m) <= 1/2", lb_slack, strict=True)
    _gate(gates, f"{label}:kappa", "kappa < 1", 1.0 - cert.kappa, strict=True)

    bp = beta_pair(source)
    bt = float(bp.beta_tilde(source.m1))
    ok_env = _gate(gates, f"{label}:envelope", "beta~_source(m) < 1", 1.0 - bt, strict=True)
    # after S the potential lives on k.nu in the p1 cone; multiplier bound from the envelope
    back = ConeSpec(k.nu, source.alpha, source.alpha_tilde, source.m1, source.m2)
    xi_slack = math.nan
    gamma_slack = math.nan
    if ok_env:
        env = growth_envelope(k, source)
        kappa = _inverse_square_growth(env.lower)
        m = back.m2
        lxt = log_xi_transform(back.alpha_tilde, kappa, m)
        xt = math.exp(lxt)
        xi_slack = 1.0 - xt
        if xt < 1:
            mapped = multiply_cone_map(back, GrowthEnvelope(StepFunction.constant(1.0), kappa, "inverse-square"), "i")
            b = k.nu.radii[k.nu.radii > m]
            if b.size:
                lim = -(b ** target.alpha.p) if isinstance(target.alpha, ExponentialTail) else np.log(target.alpha(b))
                lg = np.asarray(mapped.alpha.log(b))
                lgt = np.asarray(mapped.alpha_tilde.log(b))
                gamma_slack = float(min(np.min(lim - lg), np.min(lim - lgt)))
            else:
                gamma_slack = math.inf
    _gate(gates, f"{label}:xi", "xi~(m) < 1 for kappa = 1/iota^2", xi_slack, strict=True)
    _gate(gates, f"{label}:gamma", "log gamma(b) <= -b^p2 and log gamma~(b) <= -b^p2 at breakpoints b > m", gamma_slack)
    return cert


def certify_sinkhorn(prob, ladder):
    """Verify the inequality chain that makes one full Sinkhorn step a contraction.

    Half-step A integrates a potential in the ``p1`` cone on ``mu`` into the
    ``p2`` cone on ``nu`` (contraction ``kappa_a``), then inverts; inversion is
    admissible when the multiplier ``1/(a a~)`` bounded through the growth
    envelope maps the ``p1`` cone on ``nu`` into the ``p2`` cone. Half-step B
    is the mirror image. The full step contracts the ``p1`` cone on ``mu``
    with ``kappa = kappa_a * kappa_b`` if every gate passes.
    """
    mu, nu, k = prob.mu, prob.nu, prob.kernel
    mu_p1, mu_p2 = ladder.cone(mu, "p1"), ladder.cone(mu, "p2")
    nu_p1, nu_p2 = ladder.cone(nu, "p1"), ladder.cone(nu, "p2")
    gates = []
    ca = _half_step(k, mu_p1, nu_p2, "A", gates)
    cb = _half_step(k.transpose(), nu_p1, mu_p2, "B", gates)
    failed = [g for g in gates if not g["passed"]]
    valid = not failed
    reasons = [f"gate {failed[0]['gate']} failed: {failed[0]['inequality']}"] if failed else []
    kappa = ca.kappa * cb.kappa if valid else 1.0
    worse = ca if ca.kappa >= cb.kappa else cb
    delta = 4.0 * math.atanh(kappa) if kappa < 1 else math.inf
    halves = []
    for name, c in (("A", ca), ("B", cb)):
        d = c.to_dict()
        d["half"] = name
        halves.append(d)
    return SinkhornCertificate(worse.r_star, worse.lb, worse.ub, delta, kappa, valid, reasons, gates, halves, ladder.m)


def select_ladder_m(prob, p, delta, candidates=None):
    """Smallest ``m`` (ascending over the radii of both measures, then past the support) with a valid certificate.

    Returns ``(ladder, certificate, sweep)``; raises ``"no-valid-m"`` if none works.
    """
    radii = np.unique(np.concatenate([prob.mu.radii, prob.nu.radii]))
    radii = radii[radii > 0]
    top = float(radii[-1]) if radii.size else 1.0
    if candidates is None:
        past = [top * 1.05 ** j for j in range(1, 40)]
        candidates = list(radii) + past
    sweep = []
    for m in candidates:
        if prob.mu.ball_mass(m) <= 0 or prob.nu.ball_mass(m) <= 0:
            continue
        lad = cone_ladder(p, delta, m, prob.mu, prob.nu)
        cert = certify_sinkhorn(prob, lad)
        sweep.append((float(m), cert.kappa, cert.valid))
        if cert.valid:
            return lad, cert, sweep
    raise PreconditionError("no-valid-m", "no m yields a valid Sinkhorn certificate", {"sweep": sweep})


# --------------------------------------------------------------------------
# product space


def product_measure(mu, nu):
    """Radial-only product measure: weights ``w_i v_j``, radii ``max(d_i, d_j)``."""
    w = np.outer(mu.weights, nu.weights).ravel()
    r = np.maximum(mu.dist_from_base[:, None], nu.dist_from_base[None, :]).ravel()
    return DiscreteMeasure.from_radii(r, w / w.sum())


def product_cone(cone_mu, cone_nu, alpha, m, max_atoms=5000):
    """Cone on the product with the max-metric, sign constraint everywhere and tail ``alpha``.

    Atoms are ordered row-major: index ``i * n_nu + j``.
    """
    n = cone_mu.measure.n * cone_nu.measure.n
    if n > max_atoms:
        raise ValueError(f"product has {n} atoms, more than the limit {max_atoms}")
    pm = product_measure(cone_mu.measure, cone_nu.measure)
    return ConeSpec(pm, alpha, ZeroTail(), m, m)


def chain_precondition(cone):
    """Smallest slack of ``alpha(b) >= 2 * tail(b)`` over the cone's breakpoints."""
    if cone.pos_breaks.size == 0:
        return math.inf
    t = np.atleast_1d(tail_mass_ge(cone.measure, cone.pos_breaks))
    return float(np.min(cone.pos_coef - 2.0 * t))


def tv_bound_chain(prob, ladder, g1n, g2n, g1ref, g2ref, pcone=None, d_mu=None, d_nu=None):
    """Check ``tv <= 3 (exp(d3) - 1)`` and ``d3 <= d_mu + d_nu`` for one iterate.

    ``d3`` is the product-space distance (tail exponent ``p + 3 delta / 4``)
    between the two plan densities; ``d_mu``, ``d_nu`` are the distances of
    the potentials in the ``p1`` cones of the marginals. Raises
    ``"chain-inapplicable"`` if the product tails violate ``alpha3 >= 2 tail``.
    """
    if pcone is None:
        pcone = product_cone(ladder.cone(prob.mu, "p1"), ladder.cone(prob.nu, "p1"), ladder.alpha("product"), ladder.m)
    slack = chain_precondition(pcone)
    if slack < 0:
        raise PreconditionError(
            "chain-inapplicable", "product tail function is below twice the product tail mass", {"slack": slack}
        )
    D = primal_plan(prob, g1n, g2n)
    Dr = primal_plan(prob, g1ref, g2ref)
    Dn = D / plan_mass(prob, D)
    Drn = Dr / plan_mass(prob, Dr)
    lhs = tv_primal(prob, Dn, Drn)
    x, y = Dn.ravel(), Drn.ravel()
    if np.array_equal(x, y):
        d3 = 0.0
    else:
        d3 = hilbert_distance(pcone, x, y, check=True)
    rhs = 3.0 * (math.expm1(d3) if math.isfinite(d3) else math.inf)
    if d_mu is None:
        d_mu = hilbert_distance(ladder.cone(prob.mu, "p1"), g1n, g1ref) if not np.array_equal(g1n, g1ref) else 0.0
    if d_nu is None:
        d_nu = hilbert_distance(ladder.cone(prob.nu, "p1"), g2n, g2ref) if not np.array_equal(g2n, g2ref) else 0.0
    return {
        "lhs": lhs,
        "rhs": rhs,
        "d3": d3,
        "d_mu": d_mu,
        "d_nu": d_nu,
        "tv_holds": bool(lhs <= rhs + 1e-8),
        "triangle_holds": bool(d3 <= d_mu + d_nu + 1e-8),
    }
