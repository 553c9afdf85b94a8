"""Command-line front end.

Every subcommand prints one JSON report
``{"command", "inputs_digest", "results", "diagnostics", "seed"}`` to stdout.
Exit code 0 on success, 2 on input or structural errors, 3 on numerical
failures.  Kernels in model files are row-stochastic (``rows[from][to]``);
they are transposed on ingest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import divergence as dv
from . import estimate as est
from . import expfam as ef
from . import models
from . import projection as pj
from . import simulate as sim
from .errors import InputError, MarkovGeomError, NumericalError, SizeError, SolverError, StructuralError
from .pf_core import TransitionKernel, check_structure, perron_frobenius, stationary_distribution

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

# library operation -> the one subcommand that exposes it
OPERATIONS = {
    "check_structure": "pf",
    "perron_frobenius": "pf",
    "stationary_distribution": "pf",
    "tilt": "phi",
    "potential": "phi",
    "point": "eta",
    "fisher": "fisher",
    "fisher_from_divergence": "fisher",
    "check_independence": "model",
    "theta_from_eta": "theta-from-eta",
    "solve_mixed_coordinates": "pythagoras-check",
    "pythagoras_point": "pythagoras-check",
    "relative_entropy": "divergence",
    "renyi": "renyi",
    "divergence_properties_check": "oracle",
    "m_project": "project-mixture",
    "e_project": "project-exp",
    "curved_fisher": "estimate-curved",
    "curved_estimate": "estimate-curved",
    "sample_mean": "estimate",
    "estimate_expectation": "estimate",
    "estimate_natural": "estimate",
    "cramer_rao_report": "estimate",
    "estimate_curved": "estimate-curved",
    "sample": "simulate",
    "run_monte_carlo": "simulate",
    "exhaustive_moments": "oracle",
    "exhaustive_fisher": "oracle",
    "joint_divergence_rate": "oracle",
    "full_positive_family": "model",
    "restricted_support_family": "model",
    "bistochastic_mixture": "model",
    "two_state_reference": "model",
}

ORACLE_TOOLS = ("moments", "fisher", "rate", "sandwich", "convexity")


# ---------------------------------------------------------------- JSON output


def _fmt_float(x: float) -> str:
    return format(x, ".17g") if math.isfinite(x) else "null"


def dumps(obj) -> str:
    """Deterministic JSON with floats at 17 significant digits; non-finite -> null."""
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------- inputs


def parse_vector(text: str | None) -> np.ndarray | None:
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise InputError(f"cannot parse vector {text!r}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"vector {text!r} has non-finite entries")
    return np.array(vals)


def _rows_kernel(rows, what: str) -> TransitionKernel:
    try:
        return TransitionKernel.from_rows(rows)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise InputError(f"{what}: {exc}") from exc
        raise InputError(f"{what}: malformed matrix") from exc


@dataclass
class Context:
    name: str
    kernel: TransitionKernel
    fam: ef.ExpFamily | None = None
    curved: pj.CurvedFamily | None = None
    constraints: pj.MixtureConstraints | None = None
    initial: object = "stationary"
    reference_kernel: TransitionKernel | None = None
    second_kernel: TransitionKernel | None = None
    targets: np.ndarray | None = None
    raw: bytes = b""

    def family(self) -> ef.ExpFamily:
        if self.fam is None:
            raise InputError(f"model {self.name!r} has no exponential family (no generators)")
        return self.fam


def load_model_file(path: str) -> Context:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"model file is not UTF-8 JSON: {exc}") from exc
    if not isinstance(doc, dict) or "kernel" not in doc:
        raise InputError("model file needs a 'kernel' entry")
    kernel = _rows_kernel(doc["kernel"], "kernel")
    states = doc.get("states", kernel.size)
    if states != kernel.size:
        raise InputError(f"'states' is {states} but the kernel is {kernel.size}x{kernel.size}")
    ctx = Context(Path(path).name, kernel, raw=raw)
    gens = doc.get("generators")
    if gens:
        if isinstance(gens, dict):
            gens = [{"name": k, "matrix": v} for k, v in gens.items()]
        try:
            mats = [np.asarray(g["matrix"], dtype=float).T for g in gens]
            names = tuple(str(g.get("name", f"g{j}")) for j, g in enumerate(gens))
        except (TypeError, KeyError, ValueError) as exc:
            raise InputError("generators must be a list of {'name', 'matrix'} objects") from exc
        if any(m.shape != (kernel.size, kernel.size) for m in mats):
            raise InputError("generator shapes must match the kernel")
        ctx.fam = ef.ExpFamily(kernel, ef.GeneratorSet(np.array(mats), names))
    if "curved" in doc:
        if ctx.fam is None:
            raise InputError("'curved' needs generators")
        c = doc["curved"]
        if not isinstance(c, dict) or "C" not in c:
            raise InputError("'curved' must be an object with 'C' and optional 't0'")
        ctx.curved = pj.CurvedFamily.affine(ctx.fam, c["C"], c.get("t0"))
    if "initial" in doc:
        ctx.initial = sim.initial_law(kernel, doc["initial"])
    for key in ("reference_kernel", "second_kernel"):
        if key in doc:
            k = _rows_kernel(doc[key], key)
            if k.size != kernel.size:
                raise InputError(f"{key} has the wrong size")
            setattr(ctx, key, k)
    if "targets" in doc:
        ctx.targets = parse_vector(",".join(str(float(t)) for t in doc["targets"]))
    if ctx.fam is not None and ctx.targets is not None:
        ctx.constraints = pj.MixtureConstraints(ctx.fam.gens, ctx.targets)
    return ctx


def builtin_context(name: str, size: int) -> Context:
    desc = models.get_model(name, size)
    fam = desc.family
    if isinstance(fam, pj.CurvedFamily):
        return Context(name, fam.ambient.base, fam.ambient, curved=fam)
    if isinstance(fam, pj.MixtureConstraints):
        kernel = models.reference_kernel(size)
        return Context(name, kernel, ef.ExpFamily(kernel, fam.gens), constraints=fam, targets=fam.targets)
    return Context(name, fam.base, fam)


def resolve(args) -> Context:
    if args.model_file and args.model:
        raise InputError("give either --model or --model-file, not both")
    if args.model_file:
        return load_model_file(args.model_file)
    return builtin_context(args.model or "m2", args.states)


def _theta_arg(ctx: Context, text) -> np.ndarray:
    fam = ctx.family()
    t = parse_vector(text)
    if t is None:
        return np.zeros(fam.d)
    if t.size != fam.d:
        raise InputError(f"theta must have {fam.d} components")
    return t


def _initial_arg(ctx: Context, text):
    if text is None:
        return ctx.initial
    if text == "stationary":
        return "stationary"
    return sim.initial_law(ctx.kernel, parse_vector(text))


def _load_trajectory(path: str, size: int) -> est.Trajectory:
    text = Path(path).read_text(encoding="utf-8").strip()
    try:
        states = json.loads(text) if text.startswith("[") else [int(t) for t in text.replace(",", " ").split()]
    except (ValueError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse trajectory file: {exc}") from exc
    return est.Trajectory(np.asarray(states), size)


def _rows(k) -> np.ndarray:
    m = k.matrix if isinstance(k, TransitionKernel) else np.asarray(k)
    return m.T


# ---------------------------------------------------------------- commands


def cmd_pf(ctx, args):
    diag = []
    if args.theta is not None:
        fam = ctx.family()
        theta = _theta_arg(ctx, args.theta)
        matrix = ef.tilt(fam, theta)
        stationary = ef.point(fam, theta).stationary
    else:
        matrix = ctx.kernel.matrix
        stationary = stationary_distribution(ctx.kernel)
    st = check_structure(matrix)
    pf = perron_frobenius(matrix, tol=args.tol or 1e-13)
    return {
        "log_eigenvalue": pf.log_eigenvalue,
        "eigenvalue": pf.eigenvalue,
        "right_vec": pf.right_vec,
        "left_vec": pf.left_vec,
        "residual": pf.residual,
        "stationary": stationary,
        "irreducible": st.irreducible,
        "ergodic": st.ergodic,
    }, diag


def cmd_phi(ctx, args):
    fam = ctx.family()
    theta = _theta_arg(ctx, args.theta)
    return {"theta": theta, "phi": ef.potential(fam, theta), "tilted_rows": _rows(ef.tilt(fam, theta))}, []


def cmd_eta(ctx, args):
    fam = ctx.family()
    pt = ef.point(fam, _theta_arg(ctx, args.theta))
    return {
        "theta": pt.theta, "eta": pt.eta, "phi": pt.phi, "stationary": pt.stationary,
        "kernel_rows": _rows(pt.kernel), "generator_names": list(fam.gens.names),
    }, []


def cmd_fisher(ctx, args):
    fam = ctx.family()
    theta = _theta_arg(ctx, args.theta)
    fm = ef.fisher(fam, theta)
    out = {"theta": theta, "fisher": fm.entries, "step": fm.step,
           "min_eigenvalue": float(np.linalg.eigvalsh(fm.entries)[0]) if fam.d else None,
           "independent": fam.independence.independent,
           "min_singular_value": fam.independence.min_singular_value}
    if args.direction is not None:
        c = parse_vector(args.direction)
        s = args.s or 0.0
        lim = dv.fisher_from_divergence(fam, theta, c, s)
        quad = (1 + s) * float(c @ fm.entries @ c)
        out["divergence_limit"] = {"direction": c, "s": s, "limit": lim, "expected": quad,
                                   "relative_error": abs(lim - quad) / abs(quad) if quad else None}
    return out, []


def cmd_theta_from_eta(ctx, args):
    fam = ctx.family()
    eta = parse_vector(args.eta)
    if eta is None:
        raise InputError("--eta is required")
    theta, info = ef.theta_from_eta(fam, eta, method=args.method or "newton", tol=args.tol, full_output=True)
    resid = float(np.max(np.abs(ef.eta(fam, theta) - eta)))
    return {"theta": theta, "nu": info["nu"], "iterations": info["iterations"], "eta_residual": resid}, []


def _pair(ctx, args):
    if ctx.reference_kernel is not None and args.theta is None:
        return ctx.kernel, ctx.reference_kernel
    fam = ctx.family()
    t2 = parse_vector(args.theta2)
    return ef.point(fam, _theta_arg(ctx, args.theta)).kernel, ef.point(fam, np.zeros(fam.d) if t2 is None else t2).kernel


def _div_result(r: dv.DivergenceResult) -> dict:
    return {"value": r.value if r.finite else None, "finite": r.finite, "method": r.method, "agreement": r.agreement}


def cmd_divergence(ctx, args):
    w, v = _pair(ctx, args)
    return _div_result(dv.relative_entropy(w, v, method=args.method or "eigen_derivative")), []


def cmd_renyi(ctx, args):
    if args.s is None:
        raise InputError("--s is required")
    w, v = _pair(ctx, args)
    return dict(_div_result(dv.renyi(w, v, args.s)), s=args.s), []


def cmd_pythagoras(ctx, args):
    fam = ctx.family()
    if args.k is None:
        raise InputError("--k is required")
    t1 = _theta_arg(ctx, args.theta)
    t2 = _theta_arg(ctx, args.theta2)
    r = pj.pythagorean_residual(fam, t1, t2, args.k)
    bregman = ef.bregman_divergence(fam, t1, t2) - ef.bregman_divergence(fam, t1, r["theta_tilde"]) \
        - ef.bregman_divergence(fam, r["theta_tilde"], t2)
    return dict(r, bregman_residual=bregman, k=args.k), []


def cmd_project_mixture(ctx, args):
    if ctx.constraints is None and ctx.fam is None:
        raise InputError("mixture projection needs constraint generators")
    gens = ctx.constraints.gens if ctx.constraints is not None else ctx.fam.gens
    targets = parse_vector(args.eta)
    if targets is None:
        targets = ctx.targets
    if targets is None:
        raise InputError("targets needed: --eta or a 'targets' entry in the model file")
    cons = pj.MixtureConstraints(gens, targets)
    v = ctx.kernel
    pt = pj.m_project(v, cons, method=args.method or "newton")
    return {
        "theta": pt.theta, "eta": pt.eta, "kernel_rows": _rows(pt.kernel), "stationary": pt.stationary,
        "constraint_residual": cons.residual(pt.kernel),
        "row_sums": pt.kernel.matrix.sum(axis=1), "divergence_to_reference": dv.relative_entropy(pt.kernel, v).value,
    }, []


def cmd_project_exp(ctx, args):
    fam = ctx.family()
    if ctx.reference_kernel is None:
        raise InputError("e-projection needs a 'reference_kernel' (the kernel to project) in the model file")
    w = ctx.reference_kernel
    pt = pj.e_project(w, fam, method=args.method or "newton")
    grad = pt.eta - pj.pair_expectation(w, fam.gens)
    return {"theta": pt.theta, "eta": pt.eta, "kernel_rows": _rows(pt.kernel),
            "divergence": dv.relative_entropy(w, pt.kernel).value, "gradient_norm": float(np.max(np.abs(grad)))}, []


def _trajectory(ctx, args, kernel, initial) -> tuple[est.Trajectory, list]:
    if args.trajectory:
        return _load_trajectory(args.trajectory, kernel.size), []
    n = args.n or 1000
    cfg = sim.SamplerConfig(kernel, n, args.seed or 0, 1, initial)
    return sim.sample(cfg), [f"trajectory sampled: n={n}, seed={args.seed or 0}"]


def cmd_estimate(ctx, args):
    fam = ctx.family()
    theta = _theta_arg(ctx, args.theta)
    initial = _initial_arg(ctx, args.initial)
    traj, diag = _trajectory(ctx, args, ef.point(fam, theta).kernel, initial)
    rep = est.estimate_natural(est.estimate_expectation(traj, fam), fam, method=args.method or "newton")
    out = {"n": rep.n, "eta_hat": rep.eta_hat, "theta_hat": rep.theta_hat}
    at = rep.theta_hat if rep.theta_hat is not None else theta
    cr = est.cramer_rao_report(fam, at, rep.n, initial)
    out["cramer_rao"] = {"at_theta": at, "fisher_rate": cr.fisher_rate, "initial_fisher": cr.initial_fisher,
                         "joint_fisher": cr.joint_fisher, "cr_bound_eta": cr.cr_bound_eta,
                         "asymptotic_bound": cr.asymptotic_bound, "variance_bounds": cr.variance_bounds}
    return out, diag + list(rep.diagnostics) + list(cr.diagnostics)


def _curved(ctx) -> pj.CurvedFamily:
    if ctx.curved is None:
        raise InputError("model has no curved embedding (use a model file with 'curved' or --model curve3)")
    return ctx.curved


def cmd_estimate_curved(ctx, args):
    cf = _curved(ctx)
    xi = parse_vector(args.xi)
    xi = np.zeros(cf.d_prime) if xi is None else xi
    traj, diag = _trajectory(ctx, args, ef.point(cf.ambient, cf.theta(xi)).kernel, _initial_arg(ctx, args.initial))
    rep = est.estimate_curved(traj, cf, eval_path=args.eval_path)
    out = {"n": rep.n, "eta_hat": rep.eta_hat, "theta_hat": rep.theta_hat, "xi_hat": rep.xi_hat,
           "divergence": rep.divergence}
    if rep.xi_hat is not None:
        h = pj.curved_fisher(cf, rep.xi_hat).entries
        out["curved_fisher"] = h
        out["asymptotic_covariance"] = np.linalg.inv(h) / rep.n
    failed = rep.xi_hat is None
    return out, diag + list(rep.diagnostics), failed


def cmd_simulate(ctx, args):
    initial = _initial_arg(ctx, args.initial)
    if ctx.curved is not None:
        cf = ctx.curved
        xi = parse_vector(args.xi)
        at = np.zeros(cf.d_prime) if xi is None else xi
        kernel, model = ef.point(cf.ambient, cf.theta(at)).kernel, cf
    else:
        fam = ctx.family()
        at = _theta_arg(ctx, args.theta)
        kernel, model = ef.point(fam, at).kernel, fam
    cfg = sim.SamplerConfig(kernel, args.n or 1000, args.seed or 0, args.trials or 100, initial)
    rep = sim.run_monte_carlo(cfg, model, at, workers=max(1, args.workers), csv_path=args.csv, eval_path=args.eval_path)
    h = rep.targets["fisher"]
    out = {"n": rep.n, "trials": rep.trials, "initial": initial, "mean": rep.mean, "covariance": rep.covariance,
           "covariance_defined": rep.covariance_defined, "n_times_variance": rep.n_times_variance,
           "targets": {"eta": rep.targets["eta"], "fisher": h}}
    if rep.n_times_variance is not None:
        out["relative_error_vs_fisher"] = np.abs(np.diag(rep.n_times_variance) - np.diag(h)) / np.abs(np.diag(h))
    if rep.xi_hats is not None:
        out["xi_mean"] = rep.xi_mean
        out["xi_n_mse"] = rep.xi_n_mse
        out["targets"]["curved_fisher_inverse"] = rep.targets["curved_fisher_inverse"]
        out["failures"] = rep.failures
    return out, []


def cmd_oracle(ctx, args):
    tool = args.tool
    n = args.n or 4
    if tool == "convexity":
        if ctx.reference_kernel is None or ctx.second_kernel is None:
            raise InputError("convexity check needs 'reference_kernel' and 'second_kernel' in the model file")
        p = 0.5 if args.p is None else args.p
        r = dv.divergence_properties_check(ctx.kernel, ctx.second_kernel, ctx.reference_kernel, p)
        return {"p": p, "first_argument_gap": r.first_argument_gap, "second_argument_gap": r.second_argument_gap,
                "pair_mixture_gap": r.pair_mixture_gap, "skipped": list(r.skipped)}, []
    if tool == "rate":
        w, v = _pair(ctx, args)
        fit = sim.divergence_rate_fit(w, v, ns=range(2, max(n, 3) + 1))
        return {"ns": fit.ns, "rates": fit.rates, "limit": fit.limit, "residuals": fit.residuals,
                "c_bound": fit.c_bound, "c_fit": fit.c_fit, "decreasing": fit.decreasing}, []
    fam = ctx.family()
    theta = _theta_arg(ctx, args.theta)
    pt = ef.point(fam, theta)
    initial = _initial_arg(ctx, args.initial)
    if tool == "moments":
        m = sim.exhaustive_moments(pt.kernel, initial, fam.gens, n)
        return {"n": n, "mean": m.mean, "mean_over_n": m.mean / n, "eta": pt.eta, "covariance": m.covariance,
                "total_probability": m.total_probability, "paths": m.paths}, []
    if tool == "fisher":
        j = sim.exhaustive_fisher(fam, theta, n, initial)
        cr = est.cramer_rao_report(fam, theta, n, initial)
        return {"n": n, "exact": j, "decomposition": cr.joint_fisher, "initial_fisher": cr.initial_fisher}, []
    if tool == "sandwich":
        if fam.d != 1:
            raise InputError("variance bounds are one-parameter quantities (d = 1)")
        if initial != "stationary":
            raise InputError("variance bounds need the stationary initial law")
        m = sim.exhaustive_moments(pt.kernel, "stationary", fam.gens, n)
        cr = est.cramer_rao_report(fam, theta, n)
        lo, hi = cr.variance_bounds
        v = float(m.covariance[0, 0])
        return {"n": n, "variance": v, "lower": lo, "upper": hi, "v_hat": cr.v_hat, "inside": lo <= v <= hi}, []
    raise InputError(f"unknown oracle tool {tool!r}")


def cmd_model(ctx, args):
    out = {"name": ctx.name, "states": ctx.kernel.size, "kernel_rows": _rows(ctx.kernel),
           "irreducible": ctx.kernel.irreducible, "ergodic": ctx.kernel.ergodic}
    if ctx.fam is not None:
        out.update(d=ctx.fam.d, generator_names=list(ctx.fam.gens.names),
                   independent=ctx.fam.independence.independent,
                   min_singular_value=ctx.fam.independence.min_singular_value)
    if ctx.curved is not None:
        out["curve_dimension"] = ctx.curved.d_prime
    if args.model and not args.model_file:
        desc = models.get_model(args.model, args.states)
        out["notes"] = desc.notes
        out["constants"] = desc.constants
        if args.model == "bistochastic":
            bm = models.bistochastic_mixture(args.states)
            out["directions"] = list(bm.labels)
            out["dual_check"] = bm.dual_check
    return out, []


COMMANDS = {
    "pf": cmd_pf,
    "phi": cmd_phi,
    "eta": cmd_eta,
    "fisher": cmd_fisher,
    "theta-from-eta": cmd_theta_from_eta,
    "divergence": cmd_divergence,
    "renyi": cmd_renyi,
    "pythagoras-check": cmd_pythagoras,
    "project-mixture": cmd_project_mixture,
    "project-exp": cmd_project_exp,
    "estimate": cmd_estimate,
    "estimate-curved": cmd_estimate_curved,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "model": cmd_model,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("model")
    src.add_argument("--model", choices=models.MODEL_NAMES)
    src.add_argument("--model-file", metavar="PATH")
    src.add_argument("--states", type=int, default=3, help="state count for built-in models (m2 ignores it)")
    common.add_argument("--theta", help="natural parameter v1,v2,...")
    common.add_argument("--theta2", help="second natural parameter (reference point)")
    common.add_argument("--xi", help="curve parameter")
    common.add_argument("--eta", help="expectation parameter / targets")
    common.add_argument("--seed", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--csv", metavar="PATH")
    common.add_argument("--eval-path", choices=("bregman", "stationary"), default="bregman")
    common.add_argument("--tol", type=float)
    common.add_argument("--method")
    common.add_argument("--s", type=float, help="Renyi order parameter (order 1+s)")
    common.add_argument("--k", type=int, help="number of expectation coordinates held fixed")
    common.add_argument("--p", type=float, help="mixture weight for the convexity check")
    common.add_argument("--direction", help="direction c for the divergence limit of the Fisher form")
    common.add_argument("--initial", help="'stationary' or a probability vector")
    common.add_argument("--trajectory", metavar="PATH", help="state sequence (JSON list or whitespace separated)")
    common.add_argument("--tool", choices=ORACLE_TOOLS, default="moments")

    parser = argparse.ArgumentParser(prog="markovgeom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


# digest and report leave out flags that cannot change results
_NON_SEMANTIC = {"workers", "csv"}


def inputs_digest(args, ctx: Context | None) -> str:
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in _NON_SEMANTIC}
    h = hashlib.sha256(dumps(payload).encode())
    if ctx is not None and ctx.raw:
        h.update(ctx.raw)
    for attr in ("trajectory",):
        path = getattr(args, attr, None)
        if path and Path(path).exists():
            h.update(Path(path).read_bytes())
    return h.hexdigest()


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ctx = None
    results, diagnostics, code = None, [], EXIT_OK
    try:
        ctx = resolve(args)
        out = COMMANDS[args.command](ctx, args)
        results, diagnostics = out[0], list(out[1])
        if len(out) > 2 and out[2]:
            code = EXIT_NUMERICAL
    except (InputError, StructuralError, SizeError, OSError) as exc:
        diagnostics.append(f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=stderr)
        code = EXIT_INPUT
    except (SolverError, NumericalError) as exc:
        diagnostics.append(f"{type(exc).__name__}: {exc}")
        if getattr(exc, "residual", None) is not None:
            diagnostics.append(f"last residual: {exc.residual!r}")
        code = EXIT_NUMERICAL
    except MarkovGeomError as exc:  # pragma: no cover - every subclass is handled above
        diagnostics.append(f"{type(exc).__name__}: {exc}")
        code = EXIT_NUMERICAL
    report = {
        "command": args.command,
        "inputs_digest": inputs_digest(args, ctx),
        "results": results,
        "diagnostics": diagnostics,
        "seed": args.seed,
    }
    stdout.write(dumps(report) + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
