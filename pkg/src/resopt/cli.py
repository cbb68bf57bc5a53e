"""Command-line front end: parse experiment specs, dispatch studies, run
single training jobs, and write CSV outputs.

Exit codes: 0 success, 1 run failure (e.g. training diverged), 2 malformed
spec document, 3 unwritable output directory.
"""

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from ._util import fmt_float
from .experiments import (
    ExperimentSpec,
    default_spec,
    run_rate_check,
    run_study,
    write_histogram_csv,
    write_summary_csv,
)
from .objective import (
    SVM_LOSSES,
    SvmProblem,
    classify_accuracy,
    generate_svm_data,
    load_training_csv,
    save_training_csv,
)
from .optimizer import (
    ConstantSchedule,
    ResConfig,
    SgdConfig,
    StepSchedule,
    run_plain_sbfgs,
    run_res,
    run_sgd,
)

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_SPEC = 2
EXIT_BAD_OUT = 3

# subcommand -> study kind; svm picks its kind from --kind
STUDY_COMMANDS = {
    "quad-condition": "condition",
    "quad-dimension": "dimension",
    "sample-size": "sample_size",
    "rate-check": "rate_check",
}
SVM_KINDS = {
    "convergence": "svm_convergence",
    "accuracy": "svm_accuracy",
    "regularization": "svm_regularization",
}


# --------------------------------------------------------------------------
# spec documents
# --------------------------------------------------------------------------

def load_document(path: str) -> dict:
    """Parse a TOML (primary) or JSON spec file into a dict."""
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("spec document must be a table of fields")
    return doc


def _check_number(doc, name, errors, *, integer=False, minimum=None,
                  positive=False):
    if name not in doc:
        return
    value = doc[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{name}: expected a number, got {type(value).__name__}")
        return
    if integer and not float(value).is_integer():
        errors.append(f"{name}: expected an integer, got {value!r}")
        return
    if positive and value <= 0:
        errors.append(f"{name}: must be positive, got {value!r}")
    elif minimum is not None and value < minimum:
        errors.append(f"{name}: must be at least {minimum}, got {value!r}")


def _check_int_list(doc, name, errors):
    if name not in doc:
        return
    value = doc[name]
    if not isinstance(value, (list, tuple)) or not value or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 1
            for v in value):
        errors.append(f"{name}: expected a nonempty list of integers >= 1")


def validate_spec(document: dict, kind: str):
    """Validate a spec document for the given study kind.

    Returns (spec, errors, warnings); spec is None whenever errors is
    nonempty.  Every violation is reported, not just the first.
    """
    errors: list[str] = []
    warnings: list[str] = []
    doc = dict(document)

    doc_kind = doc.pop("kind", None)
    if doc_kind is not None and doc_kind != kind:
        errors.append(f"kind: document says {doc_kind!r} but this command "
                      f"runs {kind!r}")

    known = set(ExperimentSpec.__dataclass_fields__) - {"kind"}
    for name in sorted(set(doc) - known):
        errors.append(f"{name}: unknown field")
    # a JSON null means "use the default", same as omitting the field
    doc = {k: v for k, v in doc.items() if k in known and v is not None}

    for name in ("n", "L", "sgd_L", "J", "cap", "budget", "runs",
                 "recursion_horizon"):
        _check_number(doc, name, errors, integer=True, minimum=1)
    for name in ("N_train", "N_test"):
        _check_number(doc, name, errors, integer=True, minimum=2)
    _check_number(doc, "seed", errors, integer=True, minimum=0)
    _check_number(doc, "empirical_horizon", errors, integer=True, minimum=1)
    for name in ("eps0", "T0", "rho", "lam", "constant_step"):
        _check_number(doc, name, errors, positive=True)
    for name in ("delta", "Gamma", "w0_offset"):
        _check_number(doc, name, errors, minimum=0)
    _check_int_list(doc, "n_list", errors)
    _check_int_list(doc, "L_list", errors)

    if "theta0" in doc:
        v = doc["theta0"]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            errors.append(f"theta0: expected a number, got {type(v).__name__}")
        elif not 0.0 <= v < 1.0:
            errors.append(f"theta0: must lie in [0, 1), got {v!r}")
    if "xi" in doc and doc["xi"] != "uniform":
        v = doc["xi"]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            errors.append(f'xi: expected a nonnegative integer or "uniform", '
                          f"got {v!r}")
    if "loss" in doc and doc["loss"] not in SVM_LOSSES:
        errors.append(f"loss: expected one of {SVM_LOSSES}, got {doc['loss']!r}")

    if errors:
        return None, errors, warnings

    for name in ("n", "L", "sgd_L", "J", "cap", "budget", "runs", "seed",
                 "recursion_horizon", "empirical_horizon", "N_train", "N_test"):
        if name in doc and doc[name] is not None:
            doc[name] = int(doc[name])
    for name in ("n_list", "L_list"):
        if name in doc:
            doc[name] = tuple(doc[name])

    try:
        spec = default_spec(kind, **doc)
    except (TypeError, ValueError) as err:
        return None, [str(err)], warnings

    # the regularization parameter should stay below the smallest Hessian
    # eigenvalue of the family; a violation degrades the curvature guards
    # but is not fatal, so it only warns.  The rate check is the exception:
    # its bound constants are undefined there, so it must reject
    if isinstance(spec.xi, int) and kind in ("condition", "sample_size",
                                             "rate_check"):
        m_family = (1.0 - spec.theta0) * 10.0 ** (-spec.xi)
        if spec.delta >= m_family:
            message = (f"delta = {spec.delta:g} is not below the family's "
                       f"smallest Hessian eigenvalue {m_family:g}")
            if kind == "rate_check":
                errors.append(message + "; the decay bound requires "
                              "delta < m_tilde")
            else:
                warnings.append(message + "; curvature guards may skip or "
                                "accept spurious pairs")
    elif kind.startswith("svm") and spec.delta > spec.lam:
        warnings.append(
            f"delta = {spec.delta:g} exceeds lam = {spec.lam:g}, the only "
            f"guaranteed lower bound on the loss Hessian")

    if kind == "rate_check":
        if spec.constant_step is not None:
            errors.append("constant_step: the decay bound needs the "
                          "decreasing schedule eps0*T0/(T0+t)")
        cval = 2.0 * spec.eps0 * spec.T0 * spec.Gamma
        if cval <= 1.0:
            errors.append(f"schedule violates the decay condition: "
                          f"2*eps0*T0*Gamma = {cval:.6g} must exceed 1")
    if errors:
        return None, errors, warnings
    return spec, errors, warnings


# flag destination -> spec field
_OVERRIDE_FIELDS = {
    "xi": "xi",
    "n": "n",
    "L": "L",
    "delta": "delta",
    "gamma": "Gamma",
    "eps0": "eps0",
    "T0": "T0",
    "rho": "rho",
    "cap": "cap",
    "reps": "J",
    "train": "N_train",
    "theta0": "theta0",
}


def _xi_value(text: str):
    if text == "uniform":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f'xi must be a nonnegative integer or "uniform", got {text!r}')


def _gather_document(args, kind: str):
    """Merge the spec file (if any), flag overrides, and the seed sources."""
    doc = load_document(args.spec) if args.spec else {}
    for dest, field in _OVERRIDE_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            doc[field] = value
    if kind == "rate_check" and getattr(args, "reps", None) is not None:
        doc.pop("J", None)
        doc["runs"] = args.reps
    if kind == "dimension" and getattr(args, "n", None) is not None:
        doc.pop("n", None)
        doc["n_list"] = [args.n]
    if args.seed is not None:
        doc["seed"] = args.seed
    elif "seed" not in doc and "RES_SEED" in os.environ:
        doc["seed"] = int(os.environ["RES_SEED"])
    return doc


def _prepare_out(path: str) -> bool:
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as err:
        print(f"error: output directory {path!r} is not writable: {err}",
              file=sys.stderr)
        return False
    return True


def _resolve_spec(args, kind: str):
    """Parse + validate; on failure print every diagnostic and return None."""
    try:
        doc = _gather_document(args, kind)
    except (OSError, ValueError, json.JSONDecodeError,
            tomllib.TOMLDecodeError) as err:
        print(f"error: cannot read spec: {err}", file=sys.stderr)
        return None
    spec, errors, warnings = validate_spec(doc, kind)
    for message in errors:
        print(f"error: {message}", file=sys.stderr)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    return spec


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _write_accuracies_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("algorithm,realization,accuracy\n")
        for label in result.labels:
            for j, acc in enumerate(result.accuracies[label]):
                fh.write(f"{label},{j},{fmt_float(acc)}\n")


def _emit_study_outputs(result, out: str) -> None:
    write_summary_csv(os.path.join(out, "summary.csv"), result)
    if result.histograms is not None:
        write_histogram_csv(os.path.join(out, "histogram.csv"), result)
    if result.accuracies is not None:
        _write_accuracies_csv(os.path.join(out, "accuracies.csv"), result)
    if result.traces is not None:
        for label, trace in result.traces.items():
            trace.write_csv(os.path.join(out, f"trace_{label}.csv"))


def _print_study_summary(result) -> None:
    for label in result.labels:
        s = result.summaries[label]
        print(f"{label}: mean={s.mean:.6g} median={s.median:.6g} "
              f"std={s.std:.6g} failures={s.failures}")
    if result.accuracies is not None:
        print(f"clairvoyant: accuracy={result.clairvoyant_accuracy:.6g}")
    if result.jump_factors is not None:
        for label in result.labels:
            jumps = result.jump_factors[label]
            print(f"{label}: max_objective_jump={np.max(jumps):.6g}")


def _label_run_count(result, label) -> int:
    for pool in (result.converged, result.accuracies, result.final_objectives):
        if pool and label in pool:
            return int(np.size(pool[label]))
    return 1  # trace studies run once per label


def _all_runs_failed(result) -> bool:
    return bool(result.labels) and all(
        result.summaries[lab].failures >= _label_run_count(result, lab)
        for lab in result.labels)


def _cmd_study(args, kind: str) -> int:
    spec = _resolve_spec(args, kind)
    if spec is None:
        return EXIT_BAD_SPEC
    if not _prepare_out(args.out):
        return EXIT_BAD_OUT
    result = run_study(spec, parallel=args.parallel)
    _emit_study_outputs(result, args.out)
    _print_study_summary(result)
    if _all_runs_failed(result):
        print("error: every run failed its convergence or stability "
              "criterion; outputs were still written", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


def _cmd_svm(args) -> int:
    return _cmd_study(args, SVM_KINDS[args.kind])


def _cmd_rate_check(args) -> int:
    spec = _resolve_spec(args, "rate_check")
    if spec is None:
        return EXIT_BAD_SPEC
    if not _prepare_out(args.out):
        return EXIT_BAD_OUT
    report = run_rate_check(spec, parallel=args.parallel)
    report.write_csv(os.path.join(args.out, "rate.csv"))
    print(f"rate condition 2*eps0*T0*Gamma = {report.rate_condition_value:.6g}")
    print(f"Q = {report.Q:.6g} (c={report.c:.6g}, b={report.b:.6g}, "
          f"t0={report.t0:.6g}, u0={report.u0:.6g})")
    print(f"violations: {report.recursion_check.violations}")
    print(f"empirical bound violations: {report.violations}")
    print(f"fitted log-log slope: {report.fitted_slope:.4f}")
    return EXIT_OK


def _cmd_train(args) -> int:
    try:
        X, y = load_training_csv(args.data)
    except (OSError, ValueError) as err:
        print(f"error: cannot load training data: {err}", file=sys.stderr)
        return EXIT_BAD_SPEC
    if args.loss not in SVM_LOSSES:
        print(f"error: loss: expected one of {SVM_LOSSES}, got {args.loss!r}",
              file=sys.stderr)
        return EXIT_BAD_SPEC
    if not _prepare_out(args.out):
        return EXIT_BAD_OUT

    problem = SvmProblem(X, y, lam=args.lam, loss=args.loss)
    if args.constant_step is not None:
        schedule = ConstantSchedule(args.constant_step)
    else:
        schedule = StepSchedule(args.eps0, args.T0)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("RES_SEED", "0"))

    if args.algorithm == "sgd":
        cfg = SgdConfig(L=1, schedule=schedule, max_iters=args.budget, seed=seed)
        trace = run_sgd(problem, cfg, record_objective=True)
    else:
        iters = max(1, args.budget // args.L)
        if args.algorithm == "sbfgs":
            cfg = ResConfig(L=args.L, delta=0.0, Gamma=0.0, schedule=schedule,
                            max_iters=iters, B0_scale=1.0, seed=seed)
            trace = run_plain_sbfgs(problem, cfg, record_objective=True)
        else:
            cfg = ResConfig(L=args.L, delta=args.delta, Gamma=args.gamma,
                            schedule=schedule, max_iters=iters, seed=seed)
            trace = run_res(problem, cfg, record_objective=True)

    trace.write_csv(os.path.join(args.out, "trace.csv"))
    accuracy = classify_accuracy(trace.w_final, X, y)
    final = trace.objective[-1]
    print(f"algorithm: {args.algorithm}")
    print(f"status: {trace.status}")
    print(f"final objective: {final:.6g}")
    print(f"training accuracy: {accuracy:.6g}")
    return EXIT_OK if trace.status == "ok" else EXIT_RUN_FAILED


def _cmd_gen_data(args) -> int:
    if not _prepare_out(args.out):
        return EXIT_BAD_OUT
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("RES_SEED", "0"))
    try:
        X, y = generate_svm_data(args.n, args.N, np.random.default_rng(seed))
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_SPEC
    path = os.path.join(args.out, "svm_data.csv")
    save_training_csv(path, X, y)
    print(f"wrote {args.N} pairs of dimension {args.n} to {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", help="TOML or JSON spec document")
    p.add_argument("--out", default=".", help="output directory (default .)")
    p.add_argument("--seed", type=int, help="master seed (fallback: RES_SEED)")
    p.add_argument("--parallel", type=int, default=os.cpu_count() or 1,
                   help="worker processes; 1 forces sequential order")
    p.add_argument("--reps", type=int, help="realization count override")


def _add_overrides(p: argparse.ArgumentParser, *names) -> None:
    flags = {
        "xi": dict(type=_xi_value, help='condition exponent or "uniform"'),
        "n": dict(type=int, help="problem dimension"),
        "L": dict(type=int, help="batch size for the quasi-Newton runs"),
        "delta": dict(type=float, help="curvature regularization"),
        "gamma": dict(type=float, help="identity bias on the descent matrix"),
        "eps0": dict(type=float, help="initial step size"),
        "T0": dict(type=float, help="step schedule offset"),
        "rho": dict(type=float, help="relative-distance threshold"),
        "cap": dict(type=int, help="processed-function budget before failure"),
        "theta0": dict(type=float, help="quadratic noise amplitude"),
        "train": dict(type=int, help="training set size"),
    }
    for name in names:
        p.add_argument(f"--{name}", **flags[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resopt",
        description="Stochastic quasi-Newton experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quad-condition",
                       help="RES vs SGD convergence times across condition numbers")
    _add_common(p)
    _add_overrides(p, "xi", "n", "L", "delta", "gamma", "eps0", "T0", "rho",
                   "cap", "theta0")
    p.set_defaults(func=lambda a: _cmd_study(a, "condition"))

    p = sub.add_parser("quad-dimension",
                       help="RES vs SGD convergence times across dimensions")
    _add_common(p)
    _add_overrides(p, "n", "L", "delta", "gamma", "eps0", "T0", "rho", "cap",
                   "theta0")
    p.set_defaults(func=lambda a: _cmd_study(a, "dimension"))

    p = sub.add_parser("sample-size",
                       help="RES convergence times across batch sizes")
    _add_common(p)
    _add_overrides(p, "xi", "n", "delta", "gamma", "eps0", "T0", "rho", "cap",
                   "theta0")
    p.set_defaults(func=lambda a: _cmd_study(a, "sample_size"))

    p = sub.add_parser("svm", help="synthetic SVM studies")
    _add_common(p)
    _add_overrides(p, "n", "L", "delta", "gamma", "eps0", "T0", "train")
    p.add_argument("--kind", choices=sorted(SVM_KINDS), default="accuracy",
                   help="which SVM study to run (default accuracy)")
    p.set_defaults(func=_cmd_svm)

    p = sub.add_parser("rate-check",
                       help="expected-gap decay against the O(1/t) guarantee")
    _add_common(p)
    _add_overrides(p, "n", "L", "delta", "gamma", "eps0", "T0", "theta0")
    p.set_defaults(func=_cmd_rate_check)

    p = sub.add_parser("train", help="train one classifier on a CSV data set")
    p.add_argument("--data", required=True, help="training CSV (x_1..x_n,y)")
    p.add_argument("--algorithm", choices=("res", "sgd", "sbfgs"),
                   default="res")
    p.add_argument("--loss", default="squared_hinge")
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--budget", type=int, default=2500,
                   help="processed-function budget")
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--eps0", type=float, default=3e-2)
    p.add_argument("--T0", type=float, default=1e3)
    p.add_argument("--constant-step", type=float, dest="constant_step")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("gen-data", help="generate a synthetic SVM data CSV")
    p.add_argument("--n", type=int, required=True, help="feature dimension")
    p.add_argument("--N", type=int, required=True, help="number of pairs")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
