"""Experiment harness: convergence-time studies on random quadratics,
SVM training studies, and the O(1/t) rate check.

Every study takes a declarative :class:`ExperimentSpec`, fans J
realizations out over deterministic child seeds (realization j sees the
same stream regardless of the parallel degree), and aggregates
convergence times tau = L * min{t : ||w_t - w*|| / ||w*|| <= rho},
reporting tau = cap with converged = False for runs that never get there
within the processed-functions budget.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ._util import child_seeds, fmt_float
from .objective import (
    SvmProblem,
    classify_accuracy,
    generate_quadratic,
    generate_svm_data,
)
from .optimizer import (
    ConstantSchedule,
    ResConfig,
    RunTrace,
    SgdConfig,
    StepSchedule,
    run_plain_sbfgs,
    run_res,
    run_sgd,
)

STUDY_KINDS = (
    "condition",
    "sample_size",
    "dimension",
    "svm_convergence",
    "svm_accuracy",
    "svm_regularization",
    "rate_check",
)

HIST_BINS = 20


@dataclass(frozen=True)
class ConvergenceCriterion:
    """Relative-distance threshold rho and budget cap in processed
    functions."""

    rho: float
    cap: int

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")


def convergence_time(trace: RunTrace, crit: ConvergenceCriterion,
                     w_star=None) -> tuple[int, bool]:
    """First processed-functions count at which the relative distance to
    the optimum drops to rho, or (cap, False) when that never happens
    within the budget (diverged runs included)."""
    rel = trace.rel_dist
    if rel is None:
        if trace.w_history is None or w_star is None:
            raise ValueError("trace carries no relative distances; pass a trace "
                             "recorded with w_star or with iterate snapshots")
        norm_star = float(np.linalg.norm(w_star))
        if norm_star == 0.0:
            raise ValueError("relative distance is undefined for a zero optimum")
        rel = np.linalg.norm(trace.w_history - np.asarray(w_star), axis=1) / norm_star
    hits = np.flatnonzero(rel <= crit.rho)
    if hits.size:
        tau = int(trace.functions_processed[hits[0]])
        if tau <= crit.cap:
            return tau, True
    return crit.cap, False


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one study; see DEFAULTS for the
    per-kind benchmark values."""

    kind: str
    n: int = 50
    xi: object = 0  # nonnegative int or "uniform"
    theta0: float = 0.5
    n_list: tuple = (5, 10, 20, 50)
    L_list: tuple = (1, 2, 5, 10, 20)
    L: int = 5
    sgd_L: int = 1
    delta: float = 1e-3
    Gamma: float = 1e-4
    eps0: float = 1e-1
    T0: float = 1e3
    constant_step: float | None = None
    rho: float = 1e-2
    cap: int = 10_000
    J: int = 100
    seed: int = 0
    w0_offset: float = 10.0  # dimension study: start at this relative distance
    # SVM studies
    N_train: int = 10_000
    N_test: int = 10_000
    lam: float = 1e-3
    loss: str = "squared_hinge"
    budget: int = 2500  # processed functions for the SVM trace studies
    # rate check
    runs: int = 50
    recursion_horizon: int = 100_000
    empirical_horizon: int | None = None  # defaults to 100 * T0

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}; expected one "
                             f"of {STUDY_KINDS}")
        for name in ("n", "L", "sgd_L", "cap", "J", "budget", "runs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.constant_step is None and (self.eps0 <= 0 or self.T0 <= 0):
            raise ValueError("step schedule needs eps0 > 0 and T0 > 0")
        if self.constant_step is not None and self.constant_step <= 0:
            raise ValueError("constant_step must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        d["L_list"] = list(self.L_list)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("n_list", "L_list"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# benchmark defaults, applied on top of the dataclass defaults per kind
DEFAULTS: dict[str, dict] = {
    "condition": {"n": 50, "xi": 2, "rho": 1e-2, "cap": 10_000},
    "sample_size": {"n": 50, "xi": 2, "rho": 1e-2, "cap": 10_000},
    "dimension": {"xi": "uniform", "rho": 1.0, "cap": 500_000},
    "svm_convergence": {"n_list": (4, 40), "eps0": 3e-2, "J": 1, "budget": 2500},
    "svm_accuracy": {"n": 4, "eps0": 3e-2, "N_train": 2500, "budget": 2500},
    "svm_regularization": {"n": 10, "constant_step": 1e-1, "J": 1, "budget": 10_000},
    "rate_check": {"n": 10, "xi": 0, "theta0": 0.3, "delta": 1e-2, "Gamma": 1.0,
                   "eps0": 1e-2, "T0": 100.0},
}


def default_spec(kind: str, **overrides) -> ExperimentSpec:
    if kind not in STUDY_KINDS:
        raise ValueError(f"unknown study kind {kind!r}; expected one of {STUDY_KINDS}")
    params = dict(DEFAULTS.get(kind, {}))
    params.update(overrides)
    return ExperimentSpec(kind=kind, **params)


@dataclass(frozen=True)
class AlgorithmSummary:
    """Population statistics of one result column plus the failure count."""

    mean: float
    median: float
    std: float
    failures: int


def summarize(values, converged=None) -> AlgorithmSummary:
    values = np.asarray(values, dtype=float)
    failures = 0 if converged is None else int(np.size(converged) - np.sum(converged))
    return AlgorithmSummary(
        mean=float(values.mean()),
        median=float(np.median(values)),
        std=float(values.std()),
        failures=failures,
    )


@dataclass
class StudyResult:
    """Aggregated study output.

    taus/converged/summaries are keyed by algorithm label (for sweeps the
    label carries the swept value, e.g. "res_L5" or "sgd_n50").  The
    optional fields are filled by the study kinds that produce them.
    """

    spec: ExperimentSpec
    labels: list[str]
    taus: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    hist_edges: np.ndarray | None = None
    histograms: dict | None = None
    accuracies: dict | None = None
    clairvoyant_accuracy: float | None = None
    traces: dict | None = None
    final_objectives: dict | None = None
    jump_factors: dict | None = None


def _schedule(spec: ExperimentSpec):
    if spec.constant_step is not None:
        return ConstantSchedule(eps=spec.constant_step)
    return StepSchedule(eps0=spec.eps0, T0=spec.T0)


def _stop_at(rho):
    return lambda t, w, rel: rel is not None and rel <= rho


def _pmap(fn, tasks, parallel):
    if parallel is None or parallel == 1:
        return [fn(*args) for args in tasks]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=parallel)(delayed(fn)(*args) for args in tasks)


def _histogram(taus: dict, cap: int):
    edges = np.linspace(0.0, float(cap), HIST_BINS + 1)
    hists = {label: np.histogram(vals, bins=edges)[0] for label, vals in taus.items()}
    return edges, hists


# --------------------------------------------------------------------------
# condition-number study: RES vs SGD on the discrete curvature family
# --------------------------------------------------------------------------

def _condition_realization(spec: ExperimentSpec, ss):
    prob_ss, res_ss, sgd_ss = ss.spawn(3)
    problem = generate_quadratic(spec.n, spec.xi, spec.theta0,
                                 rng=np.random.default_rng(prob_ss))
    w_star = problem.optimum()
    crit = ConvergenceCriterion(spec.rho, spec.cap)
    sched = _schedule(spec)
    res_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=spec.cap // spec.L, seed=res_ss)
    sgd_cfg = SgdConfig(L=spec.sgd_L, schedule=sched,
                        max_iters=spec.cap // spec.sgd_L, seed=sgd_ss)
    res_trace = run_res(problem, res_cfg, w_star=w_star, stop=_stop_at(spec.rho))
    sgd_trace = run_sgd(problem, sgd_cfg, w_star=w_star, stop=_stop_at(spec.rho))
    return (*convergence_time(res_trace, crit), *convergence_time(sgd_trace, crit))


def run_condition_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """Convergence times of RES and SGD over J random quadratics."""
    seeds = child_seeds(spec.seed, spec.J)
    rows = _pmap(_condition_realization, [(spec, ss) for ss in seeds], parallel)
    rows = np.asarray(rows, dtype=float)
    taus = {"res": rows[:, 0], "sgd": rows[:, 2]}
    converged = {"res": rows[:, 1].astype(bool), "sgd": rows[:, 3].astype(bool)}
    edges, hists = _histogram(taus, spec.cap)
    return StudyResult(
        spec=spec,
        labels=["res", "sgd"],
        taus=taus,
        converged=converged,
        summaries={k: summarize(taus[k], converged[k]) for k in taus},
        hist_edges=edges,
        histograms=hists,
    )


# --------------------------------------------------------------------------
# sample-size study: RES convergence time as a function of L
# --------------------------------------------------------------------------

def _sample_size_realization(spec: ExperimentSpec, ss):
    streams = ss.spawn(1 + len(spec.L_list))
    problem = generate_quadratic(spec.n, spec.xi, spec.theta0,
                                 rng=np.random.default_rng(streams[0]))
    w_star = problem.optimum()
    crit = ConvergenceCriterion(spec.rho, spec.cap)
    sched = _schedule(spec)
    out = []
    for L, run_ss in zip(spec.L_list, streams[1:]):
        cfg = ResConfig(L=L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=spec.cap // L, seed=run_ss)
        trace = run_res(problem, cfg, w_star=w_star, stop=_stop_at(spec.rho))
        out.extend(convergence_time(trace, crit))
    return out


def run_sample_size_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """RES convergence time for each batch size L, paired across L: all
    batch sizes see the same J problem instances."""
    seeds = child_seeds(spec.seed, spec.J)
    rows = _pmap(_sample_size_realization, [(spec, ss) for ss in seeds], parallel)
    rows = np.asarray(rows, dtype=float)
    labels = [f"res_L{L}" for L in spec.L_list]
    taus, converged = {}, {}
    for i, label in enumerate(labels):
        taus[label] = rows[:, 2 * i]
        converged[label] = rows[:, 2 * i + 1].astype(bool)
    edges, hists = _histogram(taus, spec.cap)
    return StudyResult(
        spec=spec,
        labels=labels,
        taus=taus,
        converged=converged,
        summaries={k: summarize(taus[k], converged[k]) for k in labels},
        hist_edges=edges,
        histograms=hists,
    )


# --------------------------------------------------------------------------
# dimension study: moderate condition numbers, loose threshold rho = 1
# --------------------------------------------------------------------------

def _dimension_realization(spec: ExperimentSpec, n: int, ss):
    prob_ss, w0_ss, res_ss, sgd_ss = ss.spawn(4)
    problem = generate_quadratic(n, spec.xi, spec.theta0,
                                 rng=np.random.default_rng(prob_ss))
    w_star = problem.optimum()
    # start at relative distance w0_offset with per-coordinate error
    # proportional to the optimum, so weakly curved coordinates carry most
    # of it; the origin would already satisfy rho = 1
    signs = np.where(np.random.default_rng(w0_ss).random(n) < 0.5, -1.0, 1.0)
    w0 = w_star + spec.w0_offset * signs * w_star
    crit = ConvergenceCriterion(spec.rho, spec.cap)
    sched = _schedule(spec)
    res_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=spec.cap // spec.L, seed=res_ss)
    sgd_cfg = SgdConfig(L=spec.sgd_L, schedule=sched,
                        max_iters=spec.cap // spec.sgd_L, seed=sgd_ss)
    res_trace = run_res(problem, res_cfg, w0=w0, w_star=w_star, stop=_stop_at(spec.rho))
    sgd_trace = run_sgd(problem, sgd_cfg, w0=w0, w_star=w_star, stop=_stop_at(spec.rho))
    return (*convergence_time(res_trace, crit), *convergence_time(sgd_trace, crit))


def run_dimension_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """RES vs SGD across problem dimensions, curvatures uniform on (0, 1]."""
    all_seeds = child_seeds(spec.seed, len(spec.n_list) * spec.J)
    tasks = []
    for i, n in enumerate(spec.n_list):
        for j in range(spec.J):
            tasks.append((spec, n, all_seeds[i * spec.J + j]))
    rows = np.asarray(_pmap(_dimension_realization, tasks, parallel), dtype=float)
    labels, taus, converged = [], {}, {}
    for i, n in enumerate(spec.n_list):
        block = rows[i * spec.J: (i + 1) * spec.J]
        for label, col in ((f"res_n{n}", 0), (f"sgd_n{n}", 2)):
            labels.append(label)
            taus[label] = block[:, col]
            converged[label] = block[:, col + 1].astype(bool)
    edges, hists = _histogram(taus, spec.cap)
    return StudyResult(
        spec=spec,
        labels=labels,
        taus=taus,
        converged=converged,
        summaries={k: summarize(taus[k], converged[k]) for k in labels},
        hist_edges=edges,
        histograms=hists,
    )


# --------------------------------------------------------------------------
# SVM studies
# --------------------------------------------------------------------------

def _svm_problem(spec: ExperimentSpec, n: int, rng) -> SvmProblem:
    X, y = generate_svm_data(n, spec.N_train, rng)
    return SvmProblem(X=X, y=y, lam=spec.lam, loss=spec.loss)


def _svm_convergence_run(spec: ExperimentSpec, n: int, ss):
    prob_ss, res_ss, sgd_ss = ss.spawn(3)
    problem = _svm_problem(spec, n, np.random.default_rng(prob_ss))
    sched = _schedule(spec)
    res_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=spec.budget // spec.L, seed=res_ss)
    sgd_cfg = SgdConfig(L=spec.sgd_L, schedule=sched,
                        max_iters=spec.budget // spec.sgd_L, seed=sgd_ss)
    res_trace = run_res(problem, res_cfg, record_objective=True)
    sgd_trace = run_sgd(problem, sgd_cfg, record_objective=True)
    return res_trace, sgd_trace


def run_svm_convergence_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """Objective traces of RES and SGD on synthetic SVM problems for each
    dimension in n_list, one run per dimension."""
    seeds = child_seeds(spec.seed, len(spec.n_list))
    traces, labels, summaries = {}, [], {}
    for n, ss in zip(spec.n_list, seeds):
        res_trace, sgd_trace = _svm_convergence_run(spec, n, ss)
        for alg, trace in (("res", res_trace), ("sgd", sgd_trace)):
            label = f"{alg}_n{n}"
            labels.append(label)
            traces[label] = trace
            summaries[label] = summarize([trace.objective[-1]],
                                         [trace.status == "ok"])
    return StudyResult(spec=spec, labels=labels, summaries=summaries, traces=traces)


def _svm_accuracy_realization(spec: ExperimentSpec, ss):
    train_ss, test_ss, res_ss, sgd_ss = ss.spawn(4)
    problem = _svm_problem(spec, spec.n, np.random.default_rng(train_ss))
    X_test, y_test = generate_svm_data(spec.n, spec.N_test,
                                       np.random.default_rng(test_ss))
    sched = _schedule(spec)
    res_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=spec.budget // spec.L, seed=res_ss)
    sgd_cfg = SgdConfig(L=spec.sgd_L, schedule=sched,
                        max_iters=spec.budget // spec.sgd_L, seed=sgd_ss)
    res_trace = run_res(problem, res_cfg)
    sgd_trace = run_sgd(problem, sgd_cfg)
    clairvoyant = classify_accuracy(np.ones(spec.n), X_test, y_test)
    return (
        classify_accuracy(res_trace.w_final, X_test, y_test),
        classify_accuracy(sgd_trace.w_final, X_test, y_test),
        clairvoyant,
        res_trace.status == "ok",
        sgd_trace.status == "ok",
    )


def run_svm_accuracy_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """Test accuracy of RES and SGD over J train/test realizations, with
    the clairvoyant all-ones direction as reference."""
    seeds = child_seeds(spec.seed, spec.J)
    rows = _pmap(_svm_accuracy_realization, [(spec, ss) for ss in seeds], parallel)
    rows = np.asarray(rows, dtype=float)
    accuracies = {"res": rows[:, 0], "sgd": rows[:, 1]}
    ok = {"res": rows[:, 3].astype(bool), "sgd": rows[:, 4].astype(bool)}
    return StudyResult(
        spec=spec,
        labels=["res", "sgd"],
        accuracies=accuracies,
        clairvoyant_accuracy=float(rows[:, 2].mean()),
        summaries={k: summarize(accuracies[k], ok[k]) for k in accuracies},
    )


def max_objective_jump(trace: RunTrace) -> float:
    """Largest factor by which the recorded objective exceeds its running
    minimum; a run whose objective turned non-finite counts as an infinite
    jump."""
    obj = trace.objective
    if obj is None:
        raise ValueError("trace was recorded without objectives")
    if not np.all(np.isfinite(obj)):
        return float("inf")
    running_min = np.minimum.accumulate(obj)
    if np.any(running_min <= 0):
        # objective crossed zero or below: jump factors lose meaning; treat
        # any later increase as unstable
        return float("inf") if np.any(np.diff(obj) > 0) else 1.0
    if len(obj) < 2:
        return 1.0
    return max(1.0, float(np.max(obj[1:] / running_min[:-1])))


def _svm_regularization_realization(spec: ExperimentSpec, ss):
    prob_ss, res_ss, bfgs_ss, sgd_ss = ss.spawn(4)
    problem = _svm_problem(spec, spec.n, np.random.default_rng(prob_ss))
    sched = _schedule(spec)
    iters = spec.budget // spec.L
    res_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma, schedule=sched,
                        max_iters=iters, seed=res_ss)
    bfgs_cfg = ResConfig(L=spec.L, delta=0.0, Gamma=0.0, schedule=sched,
                         max_iters=iters, B0_scale=1.0, seed=bfgs_ss)
    sgd_cfg = SgdConfig(L=spec.sgd_L, schedule=sched,
                        max_iters=spec.budget // spec.sgd_L, seed=sgd_ss)
    traces = {
        "res": run_res(problem, res_cfg, record_objective=True),
        "sbfgs": run_plain_sbfgs(problem, bfgs_cfg, record_objective=True),
        "sgd": run_sgd(problem, sgd_cfg, record_objective=True),
    }
    finals, jumps = {}, {}
    for alg, trace in traces.items():
        finite = trace.objective[np.isfinite(trace.objective)]
        finals[alg] = float(finite[-1]) if finite.size else float("inf")
        jumps[alg] = max_objective_jump(trace)
    return traces, finals, jumps


def run_svm_regularization_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    """RES vs plain stochastic BFGS vs SGD with a constant step size; the
    non-regularized update is expected to destabilize."""
    seeds = child_seeds(spec.seed, spec.J)
    rows = _pmap(_svm_regularization_realization, [(spec, ss) for ss in seeds], parallel)
    labels = ["res", "sbfgs", "sgd"]
    finals = {k: np.array([r[1][k] for r in rows]) for k in labels}
    jumps = {k: np.array([r[2][k] for r in rows]) for k in labels}
    statuses = {k: np.array([r[0][k].status == "ok" for r in rows]) for k in labels}
    summaries = {}
    for k in labels:
        vals = finals[k][np.isfinite(finals[k])]
        summaries[k] = summarize(vals if vals.size else [np.nan], statuses[k])
    return StudyResult(
        spec=spec,
        labels=labels,
        summaries=summaries,
        traces=dict(rows[0][0]),
        final_objectives=finals,
        jump_factors=jumps,
    )


def run_svm_study(spec: ExperimentSpec, parallel: int = 1) -> StudyResult:
    if spec.kind == "svm_convergence":
        return run_svm_convergence_study(spec, parallel)
    if spec.kind == "svm_accuracy":
        return run_svm_accuracy_study(spec, parallel)
    if spec.kind == "svm_regularization":
        return run_svm_regularization_study(spec, parallel)
    raise ValueError(f"not an SVM study kind: {spec.kind!r}")


# --------------------------------------------------------------------------
# rate check: Q/(t + t0) recursion bound and the empirical expected gap
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RecursionCheck:
    """Result of iterating u_{t+1} = (1 - c/(t + t0)) u_t + b/(t + t0)^2
    with equality and checking u_t <= Q/(t + t0)."""

    c: float
    b: float
    t0: float
    u0: float
    Q: float
    horizon: int
    violations: int
    max_ratio: float  # max over t of u_t * (t + t0) / Q


def decay_bound_constant(c: float, b: float, t0: float, u0: float) -> float:
    """Q = max(b / (c - 1), t0 * u0)."""
    if c <= 1 or b < 0 or t0 <= 0 or u0 < 0:
        raise ValueError("need c > 1, b >= 0, t0 > 0, u0 >= 0")
    return max(b / (c - 1.0), t0 * u0)


def check_rate_recursion(c, b, t0, u0, horizon=100_000,
                         rel_slack=1e-12) -> RecursionCheck:
    """Iterate the recursion with equality and count violations of
    u_t <= Q/(t + t0) * (1 + rel_slack) up to the horizon."""
    Q = decay_bound_constant(c, b, t0, u0)
    u = float(u0)
    violations = 0
    max_ratio = (u0 * t0 / Q) if Q > 0 else 0.0
    for t in range(horizon):
        u = (1.0 - c / (t + t0)) * u + b / (t + t0) ** 2
        bound = Q / (t + 1 + t0)
        if u > bound * (1.0 + rel_slack):
            violations += 1
        if Q > 0:
            max_ratio = max(max_ratio, u * (t + 1 + t0) / Q)
    return RecursionCheck(c=c, b=b, t0=t0, u0=u0, Q=Q, horizon=horizon,
                          violations=violations, max_ratio=max_ratio)


@dataclass
class RateCheckReport:
    """Empirical O(1/t) check: recursion constants implied by the config,
    the averaged optimality gap, the Q/(t0 + t) bound, and the violation
    count.  K (and so b and Q) uses an estimated gradient-norm bound."""

    c: float
    b: float
    t0: float
    u0: float
    Q: float
    rate_condition_value: float
    S_sq_estimate: float
    K_estimate: float
    ts: np.ndarray
    gap_mean: np.ndarray
    bound: np.ndarray
    violations: int
    fitted_slope: float
    recursion_check: RecursionCheck

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,gap_mean,bound\n")
            for t, g, bd in zip(self.ts, self.gap_mean, self.bound):
                fh.write(f"{t},{fmt_float(g)},{fmt_float(bd)}\n")


def _rate_check_run(spec: ExperimentSpec, problem_dict, horizon, ss):
    from .objective import QuadraticProblem

    problem = QuadraticProblem.from_json_dict(problem_dict)
    cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma,
                    schedule=StepSchedule(eps0=spec.eps0, T0=spec.T0),
                    max_iters=horizon, seed=ss)
    trace = run_res(problem, cfg, record_objective=True)
    return trace.objective


def run_rate_check(spec: ExperimentSpec, parallel: int = 1) -> RateCheckReport:
    """Check the O(1/t) expected-gap guarantee on a compliant configuration.

    Raises ValueError when 2 eps0 T0 Gamma <= 1 (the guarantee's premise).
    """
    if spec.constant_step is not None:
        raise ValueError("the rate check needs the decaying step schedule")
    cval = 2.0 * spec.eps0 * spec.T0 * spec.Gamma
    if cval <= 1.0:
        raise ValueError(
            f"config does not satisfy the rate guarantee premise: "
            f"2 * eps0 * T0 * Gamma = {cval:.6g} <= 1"
        )
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    problem = generate_quadratic(spec.n, spec.xi, spec.theta0, rng=rng)
    bounds = problem.curvature_bounds()
    if spec.delta >= bounds.m_tilde:
        raise ValueError(
            f"delta = {spec.delta} must stay below the Hessian floor "
            f"m_tilde = {bounds.m_tilde:.6g}"
        )
    w_star = problem.optimum()
    f_star = problem.exact_objective(w_star)
    horizon = spec.empirical_horizon or int(100 * spec.T0)

    # pilot run: empirical stand-in for the gradient second-moment bound
    s_sq = 0.0

    def track(state):
        nonlocal s_sq
        s_sq = max(s_sq, float(state.s_hat @ state.s_hat))

    pilot_ss, *run_seeds = np.random.SeedSequence(spec.seed).spawn(spec.runs + 1)
    pilot_cfg = ResConfig(L=spec.L, delta=spec.delta, Gamma=spec.Gamma,
                          schedule=StepSchedule(eps0=spec.eps0, T0=spec.T0),
                          max_iters=horizon, seed=pilot_ss)
    run_res(problem, pilot_cfg, callback=track)

    K = bounds.M_tilde * s_sq * (1.0 / spec.delta + spec.Gamma) ** 2 / 2.0
    u0 = problem.exact_objective(np.zeros(spec.n)) - f_star
    c, b, t0 = cval, spec.eps0 ** 2 * spec.T0 ** 2 * K, spec.T0
    Q = decay_bound_constant(c, b, t0, u0)

    problem_dict = problem.to_json_dict()
    objs = _pmap(_rate_check_run,
                 [(spec, problem_dict, horizon, ss) for ss in run_seeds],
                 parallel)
    gap = np.mean(np.asarray(objs), axis=0) - f_star
    ts = np.arange(horizon + 1)
    bound = Q / (t0 + ts)
    violations = int(np.sum(gap > bound * (1.0 + 1e-12)))

    fit_mask = (ts >= spec.T0) & (gap > 0)
    if fit_mask.sum() >= 2:
        slope = float(np.polyfit(np.log(ts[fit_mask]), np.log(gap[fit_mask]), 1)[0])
    else:
        slope = float("nan")  # horizon too short to fit a decay rate

    recursion = check_rate_recursion(c, b, t0, u0, horizon=spec.recursion_horizon)
    return RateCheckReport(
        c=c, b=b, t0=t0, u0=u0, Q=Q,
        rate_condition_value=cval,
        S_sq_estimate=s_sq,
        K_estimate=K,
        ts=ts,
        gap_mean=gap,
        bound=bound,
        violations=violations,
        fitted_slope=slope,
        recursion_check=recursion,
    )


def run_study(spec: ExperimentSpec, parallel: int = 1):
    """Dispatch a validated spec to its study runner."""
    if spec.kind == "condition":
        return run_condition_study(spec, parallel)
    if spec.kind == "sample_size":
        return run_sample_size_study(spec, parallel)
    if spec.kind == "dimension":
        return run_dimension_study(spec, parallel)
    if spec.kind in ("svm_convergence", "svm_accuracy", "svm_regularization"):
        return run_svm_study(spec, parallel)
    if spec.kind == "rate_check":
        return run_rate_check(spec, parallel)
    raise ValueError(f"unknown study kind {spec.kind!r}")


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def write_summary_csv(path, result: StudyResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("algorithm,mean,median,std,failures\n")
        for label in result.labels:
            s = result.summaries[label]
            fh.write(f"{label},{fmt_float(s.mean)},{fmt_float(s.median)},"
                     f"{fmt_float(s.std)},{s.failures}\n")


def write_histogram_csv(path, result: StudyResult) -> None:
    if result.histograms is None:
        raise ValueError("study produced no histograms")
    with open(path, "w", newline="") as fh:
        fh.write("algorithm,bin_lo,bin_hi,count\n")
        for label in result.labels:
            counts = result.histograms[label]
            for i, count in enumerate(counts):
                fh.write(f"{label},{fmt_float(result.hist_edges[i])},"
                         f"{fmt_float(result.hist_edges[i + 1])},{int(count)}\n")
