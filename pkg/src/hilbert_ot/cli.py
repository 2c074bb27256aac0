"""Command line front end: ``certify``, ``run``, ``dist`` and ``check-cone``.

Configuration is one JSON file, for example::

    {
      "mu": {"generator": "truncated_gaussian", "n": 20, "sigma": 0.75, "radius": 3.75, "seed": 0},
      "nu": {"generator": "truncated_gaussian", "n": 20, "sigma": 0.75, "radius": 3.75, "seed": 1},
      "cost": {"variant": "power_distance", "exponent": 1.0},
      "epsilon": 20.0,
      "mode": "sinkhorn",
      "ladder": {"delta": 1.0, "m": "auto"},
      "run": {"max_iters": 60, "marginal_tol": 1e-12}
    }

``mode`` is ``"sinkhorn"`` (ladder certificate for the full step) or
``"kernel"`` (certificate for one integral operator, with a ``cone`` entry
or ``"cone": "auto"``). Exit codes: 0 success, 1 domain failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotInConeError, PreconditionError
from .hilbert import hilbert_distance, l1_bound_from_hilbert, l1_precondition
from .kernelop import auto_cone, contraction_certificate
from .space import CostSpec, DiscreteMeasure, load_measure, truncated_gaussian, uniform_grid
from .sinkhorn import (
    EotProblem,
    cone_ladder,
    certify_sinkhorn,
    half_steps,
    iterate,
    marginal_error,
    plan_mass,
    primal_plan,
    product_cone,
    run_sinkhorn,
    select_ladder_m,
    tv_bound_chain,
)
from .tailcone import ConeSpec, is_in_F, is_in_G

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class ExperimentConfig:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: CostSpec
    epsilon: float
    mode: str = "sinkhorn"
    cone: object = None
    ladder: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    out: Path | None = None
    same_measure: bool = False


def _measure(spec, base_dir, seed=None):
    if not isinstance(spec, dict):
        raise ConfigError("a measure entry must be an object")
    if "file" in spec:
        path = Path(spec["file"])
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"measure file {path} does not exist")
        return load_measure(path)
    gen = spec.get("generator")
    if gen == "uniform_grid":
        return uniform_grid(int(spec["n"]), float(spec.get("low", -1.0)), float(spec.get("high", 1.0)))
    if gen == "truncated_gaussian":
        s = int(spec.get("seed", 0)) if seed is None else int(seed)
        return truncated_gaussian(
            int(spec["n"]), float(spec.get("sigma", 1.0)), float(spec.get("radius", 3.0)), seed=s
        )
    if "weights" in spec:
        return load_measure(spec)
    raise ConfigError(f"unknown measure specification {spec!r}")


def load_config(path, seed=None, out=None):
    """Parse and validate a configuration file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    base = path.parent
    try:
        if "mu" not in raw:
            raise ConfigError("config needs a 'mu' entry")
        mu = _measure(raw["mu"], base, seed)
        same = "nu" not in raw
        nu = mu if same else _measure(raw["nu"], base, None if seed is None else int(seed) + 1)
        cost = CostSpec.from_dict(raw.get("cost", {}), base_dir=base)
        eps = float(raw.get("epsilon", 1.0))
        if not eps > 0:
            raise ConfigError("epsilon must be > 0")
        mode = raw.get("mode", "sinkhorn")
        if mode not in ("sinkhorn", "kernel"):
            raise ConfigError("mode must be 'sinkhorn' or 'kernel'")
        outdir = Path(out) if out is not None else (Path(raw["out"]) if "out" in raw else None)
        return ExperimentConfig(
            mu, nu, cost, eps, mode, raw.get("cone"), dict(raw.get("ladder", {})), dict(raw.get("run", {})), outdir, same
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _problem(cfg):
    try:
        return EotProblem.from_cost(cfg.mu, cfg.nu, cfg.cost, cfg.epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _ladder_p(cfg):
    if "p" in cfg.ladder:
        return float(cfg.ladder["p"])
    return float(cfg.cost.exponent) if cfg.cost.variant == "power_distance" else 2.0


def _sinkhorn_certificate(cfg, prob):
    p = _ladder_p(cfg)
    delta = float(cfg.ladder.get("delta", 1.0))
    m = cfg.ladder.get("m", "auto")
    if m == "auto":
        try:
            lad, cert, _ = select_ladder_m(prob, p, delta)
        except PreconditionError:
            lad = cone_ladder(p, delta, max(prob.mu.max_radius, prob.nu.max_radius, 1e-12))
            cert = certify_sinkhorn(prob, lad)
        return lad, cert, cert.to_dict()
    lad = cone_ladder(p, delta, float(m))
    cert = certify_sinkhorn(prob, lad)
    return lad, cert, cert.to_dict()


def _kernel_cones(cfg, k):
    if cfg.cone in (None, "auto"):
        if not cfg.same_measure:
            raise ConfigError("'cone': 'auto' needs a single measure (omit 'nu')")
        try:
            cone, cert, _ = auto_cone(cfg.mu, k)
        except PreconditionError as exc:
            return None, None, {"valid": False, "reasons": [str(exc)], "kappa": 1.0}
        return cone, cert, cert.to_dict(include_extras=False) | {"m": cert.extras["m"]}
    try:
        cmu = ConeSpec.from_dict(cfg.cone, k.mu)
        cnu = ConeSpec.from_dict(cfg.cone, k.nu)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid cone entry: {exc}") from exc
    cert = contraction_certificate(k, cmu, cnu, strict=False)
    return cmu, cert, cert.to_dict()


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _full_precision(obj):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _full_precision(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_full_precision(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _outdir(cfg, default="."):
    d = cfg.out if cfg.out is not None else Path(default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_certify(cfg):
    """Write ``certificate.json``; return 0 iff the certificate is valid."""
    prob = _problem(cfg)
    if cfg.mode == "kernel":
        _, _, payload = _kernel_cones(cfg, prob.kernel)
    else:
        _, _, payload = _sinkhorn_certificate(cfg, prob)
    out = _outdir(cfg)
    _write_json(out / "certificate.json", _full_precision(payload))
    print(json.dumps({"valid": payload["valid"], "kappa": payload["kappa"]}))
    return EXIT_OK if payload["valid"] else EXIT_DOMAIN


def cmd_run(cfg, max_iters=None, tol=None):
    """Run Sinkhorn, write ``convergence.csv``, ``summary.json`` and ``certificate.json``."""
    prob = _problem(cfg)
    max_iters = int(max_iters if max_iters is not None else cfg.run.get("max_iters", 500))
    tol = float(tol if tol is not None else cfg.run.get("marginal_tol", 1e-10))
    lad, cert, payload = _sinkhorn_certificate(cfg, prob)
    cm = cn = None
    if cert.valid:
        cm, cn = lad.cone(prob.mu, "p1"), lad.cone(prob.nu, "p1")
    g1, g2, rep = run_sinkhorn(
        prob, max_iters=max_iters, marginal_tol=tol, reference="prepass", cone_mu=cm, cone_nu=cn
    )
    out = _outdir(cfg)
    rep.write_csv(out / "convergence.csv")
    chain_rate = None
    chain_note = None
    if cert.valid:
        chain_rate, chain_note = _chain_pass_rate(prob, lad, rep, max_iters, cfg.run.get("chain_every", 1))
    D = primal_plan(prob, g1, g2)
    summary = {
        "n_iter": rep.n_iter,
        "converged": rep.converged,
        "marginal_err_l1": marginal_error(prob, D),
        "plan_mass": plan_mass(prob, D),
        "fitted_log_slope": rep.fitted_log_slope,
        "fitted_rate": rep.fitted_rate,
        "certified_kappa_full_step": cert.kappa if cert.valid else None,
        "bound_chain_pass_rate": chain_rate,
        "bound_chain_note": chain_note,
        "reference": rep.reference,
        "ladder": lad.to_dict(),
    }
    _write_json(out / "summary.json", _full_precision(summary))
    _write_json(out / "certificate.json", _full_precision(payload))
    print(json.dumps(_full_precision({k: summary[k] for k in ("n_iter", "fitted_rate", "certified_kappa_full_step")})))
    return EXIT_OK


def _chain_pass_rate(prob, lad, rep, max_iters, every):
    try:
        pc = product_cone(lad.cone(prob.mu, "p1"), lad.cone(prob.nu, "p1"), lad.alpha("product"), lad.m)
    except ValueError as exc:
        return None, str(exc)
    r1, r2 = iterate(prob, np.ones(prob.mu.n), 2 * max_iters)
    g1 = np.ones(prob.mu.n)
    passed = total = 0
    for n in range(1, rep.n_iter + 1):
        g2, g1 = half_steps(prob, g1)
        if (n - 1) % max(1, int(every)):
            continue
        row = rep.rows[n - 1]
        try:
            res = tv_bound_chain(prob, lad, g1, g2, r1, r2, pcone=pc, d_mu=row["d_hilbert_mu"], d_nu=row["d_hilbert_nu"])
        except PreconditionError as exc:
            return None, str(exc)
        total += 1
        passed += int(res["tv_holds"] and res["triangle_holds"])
    return (passed / total if total else None), None


def _load_vector(path, n):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"vector file {path} does not exist")
    try:
        if path.suffix == ".npy":
            v = np.load(path)
        elif path.suffix == ".json":
            with open(path) as fh:
                v = np.asarray(json.load(fh), dtype=float)
        else:
            v = np.loadtxt(path, dtype=float, ndmin=1)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot read vector {path}: {exc}") from exc
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n:
        raise ConfigError(f"vector {path} has {v.size} entries, the measure has {n}")
    return v


def _single_cone(cfg):
    if cfg.cone in (None, "auto"):
        raise ConfigError("this command needs an explicit 'cone' entry")
    try:
        return ConeSpec.from_dict(cfg.cone, cfg.mu)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid cone entry: {exc}") from exc


def cmd_dist(cfg, g_file, gt_file):
    """Print the distance between two vectors on ``mu``; exit 1 for non-members."""
    cone = _single_cone(cfg)
    g = _load_vector(g_file, cfg.mu.n)
    gt = _load_vector(gt_file, cfg.mu.n)
    try:
        d = hilbert_distance(cone, g, gt, check=True)
    except NotInConeError as exc:
        print(json.dumps({"error": str(exc), "report": exc.report.to_dict()}, default=_json_default))
        return EXIT_DOMAIN
    except ValueError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_DOMAIN
    out = {"distance": d}
    if l1_precondition(cone) >= 0 and np.all(g >= 0) and np.all(gt >= 0):
        nb = l1_bound_from_hilbert(cone, g, gt, check=False)
        out["l1_bound"] = nb.bound
        out["l1_actual"] = nb.actual
    print(json.dumps(_full_precision(out)))
    return EXIT_OK


def cmd_check_cone(cfg, vec_file, which="G"):
    """Report membership of a vector in ``F`` and/or ``G``; exit 1 if it fails."""
    cone = _single_cone(cfg)
    v = _load_vector(vec_file, cfg.mu.n)
    out = {}
    ok = True
    if which in ("F", "both"):
        rep = is_in_F(cone, v)
        out["F"] = rep.to_dict()
        ok &= bool(rep)
    if which in ("G", "both"):
        rep = is_in_G(cone, v)
        out["G"] = rep.to_dict()
        ok &= bool(rep)
    print(json.dumps(_full_precision(out), default=_json_default))
    return EXIT_OK if ok else EXIT_DOMAIN


def build_parser():
    p = argparse.ArgumentParser(prog="hilbert-ot", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=None)

    c = sub.add_parser("certify", help="compute a contraction certificate")
    common(c)
    r = sub.add_parser("run", help="run Sinkhorn and log convergence")
    common(r)
    r.add_argument("--max-iters", type=int, default=None)
    r.add_argument("--tol", type=float, default=None)
    d = sub.add_parser("dist", help="distance between two dual-cone vectors")
    common(d)
    d.add_argument("g_file", type=Path)
    d.add_argument("g_tilde_file", type=Path)
    k = sub.add_parser("check-cone", help="membership of a vector in F and/or G")
    common(k)
    k.add_argument("vector_file", type=Path)
    k.add_argument("--which", choices=("F", "G", "both"), default="G")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.max_iters, args.tol)
        if args.command == "dist":
            return cmd_dist(cfg, args.g_file, args.g_tilde_file)
        return cmd_check_cone(cfg, args.vector_file, args.which)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
