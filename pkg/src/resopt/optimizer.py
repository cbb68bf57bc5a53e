"""Stochastic optimizers: RES (regularized stochastic BFGS), plain
stochastic BFGS, and SGD.

All three share the same iteration skeleton.  At iterate w_t:

    draw a batch of L samples
    s_hat      = stochastic gradient at w_t on the batch
    w_{t+1}    = w_t - eps_t * d_t
    s_hat_next = stochastic gradient at w_{t+1} on the SAME batch
    update the curvature estimate from (w_{t+1} - w_t, s_hat_next - s_hat)

with d_t = (B^{-1} + Gamma I) s_hat for the quasi-Newton methods and
d_t = s_hat for SGD (which also skips the second gradient and the update).
Re-evaluating the same batch at both iterates is what keeps the observed
curvature positive for strongly convex samples; the loops never draw a
fresh batch for the second evaluation.

Runs never raise on numerical blow-up: a non-finite iterate or one with
norm above DIVERGENCE_NORM ends the run with status "diverged" and the
trace collected so far.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._util import as_rng, fmt_float
from .curvature import (
    HessianApprox,
    InternalStateError,
    SkipReason,
    VariationPair,
    classic_update,
    descent_direction,
    initial_hessian,
    regularized_update,
)
from .objective import StochasticObjective

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step sizes eps_t = eps0 * T0 / (T0 + t): nonsummable but
    square-summable."""

    eps0: float
    T0: float

    def __post_init__(self):
        if self.eps0 <= 0 or self.T0 <= 0:
            raise ValueError("eps0 and T0 must be positive")

    def at(self, t: int) -> float:
        return self.eps0 * self.T0 / (self.T0 + t)


@dataclass(frozen=True)
class ConstantSchedule:
    """Fixed step size, used by the regularization-necessity study."""

    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("step size must be positive")

    def at(self, t: int) -> float:
        return self.eps


Schedule = Union[StepSchedule, ConstantSchedule]


@dataclass(frozen=True)
class ResConfig:
    """RES hyperparameters.

    B0_scale = None uses the default starting approximation (delta + 1) I.
    curvature_updates = False freezes B at its initial value, which turns
    the method into SGD preconditioned by (B0^{-1} + Gamma I).
    """

    L: int = 5
    delta: float = 1e-3
    Gamma: float = 1e-4
    schedule: Schedule = StepSchedule(eps0=1e-1, T0=1e3)
    B0_scale: float | None = None
    max_iters: int = 10_000
    seed: object = 0
    curvature_updates: bool = True

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.delta < 0 or self.Gamma < 0:
            raise ValueError("delta and Gamma must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.B0_scale is not None and (self.B0_scale <= 0 or self.B0_scale < self.delta):
            raise ValueError("B0_scale must be positive and at least delta")

    @property
    def rate_condition_value(self) -> float | None:
        """2 eps0 T0 Gamma; the O(1/t) expected-gap guarantee needs > 1.

        None for constant schedules.  Reported, never enforced: the
        benchmark configurations themselves violate it.
        """
        if isinstance(self.schedule, StepSchedule):
            return 2.0 * self.schedule.eps0 * self.schedule.T0 * self.Gamma
        return None


@dataclass(frozen=True)
class SgdConfig:
    L: int = 1
    schedule: Schedule = StepSchedule(eps0=1e-1, T0=1e3)
    max_iters: int = 10_000
    seed: object = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class IterationState:
    """Snapshot handed to an optional per-iteration callback (test and
    instrumentation hook; not part of the trace)."""

    t: int  # iteration index, state below is w_{t+1}
    w: np.ndarray
    eps: float
    s_hat: np.ndarray
    direction: np.ndarray
    pair: VariationPair | None
    H: HessianApprox | None
    skipped: bool
    skip_reason: SkipReason | None


@dataclass
class RunTrace:
    """Per-iteration record of one optimization run.

    Row k describes the iterate w_k: eps is the step size eps_k that
    leaves state k, and skipped[k] flags the curvature update of the
    iteration that produced state k (row 0 is never flagged).  rel_dist
    is present when the optimum was supplied, objective when exact
    objective recording was requested.  functions_processed[k] = L * k.
    """

    L: int
    eps: np.ndarray
    skipped: np.ndarray
    status: str
    w_final: np.ndarray
    rel_dist: np.ndarray | None = None
    objective: np.ndarray | None = None
    w_history: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.eps) - 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.eps))

    @property
    def functions_processed(self) -> np.ndarray:
        return self.L * self.t

    def write_csv(self, path) -> None:
        cols = ["t", "functions_processed", "eps_t"]
        if self.rel_dist is not None:
            cols.append("rel_dist")
        if self.objective is not None:
            cols.append("objective")
        cols += ["skipped_update", "status"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(len(self.eps)):
                row = [str(k), str(self.L * k), fmt_float(self.eps[k])]
                if self.rel_dist is not None:
                    row.append(fmt_float(self.rel_dist[k]))
                if self.objective is not None:
                    row.append(fmt_float(self.objective[k]))
                row.append(str(int(self.skipped[k])))
                row.append(self.status)
                fh.write(",".join(row) + "\n")


class _Recorder:
    def __init__(self, L, w_star, record_objective, record_w, problem):
        self.L = L
        self.problem = problem
        self.w_star = w_star
        self.norm_w_star = None
        if w_star is not None:
            self.norm_w_star = float(np.linalg.norm(w_star))
            if self.norm_w_star == 0.0:
                raise ValueError("relative distance is undefined for a zero optimum")
        self.eps = []
        self.skipped = []
        self.rel = [] if w_star is not None else None
        self.obj = [] if record_objective else None
        self.ws = [] if record_w else None

    def add(self, t, w, eps_t, skipped) -> float | None:
        self.eps.append(eps_t)
        self.skipped.append(skipped)
        rel = None
        if self.rel is not None:
            if np.all(np.isfinite(w)):
                rel = float(np.linalg.norm(w - self.w_star)) / self.norm_w_star
            else:
                rel = float("nan")
            self.rel.append(rel)
        if self.obj is not None:
            if np.all(np.isfinite(w)):
                self.obj.append(self.problem.exact_objective(w))
            else:
                self.obj.append(float("nan"))
        if self.ws is not None:
            self.ws.append(w.copy())
        return rel

    def finish(self, status, w) -> RunTrace:
        return RunTrace(
            L=self.L,
            eps=np.asarray(self.eps),
            skipped=np.asarray(self.skipped, dtype=bool),
            status=status,
            w_final=w.copy(),
            rel_dist=None if self.rel is None else np.asarray(self.rel),
            objective=None if self.obj is None else np.asarray(self.obj),
            w_history=None if self.ws is None else np.asarray(self.ws),
        )


def _diverged(w: np.ndarray) -> bool:
    return not np.all(np.isfinite(w)) or float(np.linalg.norm(w)) > DIVERGENCE_NORM


def _initial_iterate(problem, w0) -> np.ndarray:
    if w0 is None:
        return np.zeros(problem.dim)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (problem.dim,):
        raise ValueError(f"w0 has shape {w0.shape}, expected ({problem.dim},)")
    return w0.copy()


def _run_quasi_newton(problem, cfg, w0, update_fn, *, w_star, record_objective,
                      record_w, stop, callback) -> RunTrace:
    rng = as_rng(cfg.seed)
    w = _initial_iterate(problem, w0)
    H = initial_hessian(problem.dim, cfg.delta, cfg.B0_scale)
    rec = _Recorder(cfg.L, w_star, record_objective, record_w, problem)
    rel = rec.add(0, w, cfg.schedule.at(0), False)
    if stop is not None and stop(0, w, rel):
        return rec.finish("ok", w)
    status = "ok"
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.max_iters):
            eps_t = cfg.schedule.at(t)
            batch = problem.draw_batch(cfg.L, rng)
            s_hat = problem.stochastic_gradient(w, batch)
            try:
                d = descent_direction(H, s_hat, cfg.Gamma)
            except InternalStateError:
                status = "diverged"
                break
            w_next = w - eps_t * d
            if _diverged(w_next):
                rec.add(t + 1, w_next, cfg.schedule.at(t + 1), False)
                w = w_next
                status = "diverged"
                break
            # second gradient on the very same batch
            s_hat_next = problem.stochastic_gradient(w_next, batch)
            pair = VariationPair.from_gradients(w_next - w, s_hat_next - s_hat, cfg.delta)
            skipped = False
            skip_reason = None
            if cfg.curvature_updates:
                try:
                    result = update_fn(H, pair)
                except InternalStateError:
                    rec.add(t + 1, w_next, cfg.schedule.at(t + 1), False)
                    w = w_next
                    status = "diverged"
                    break
                if isinstance(result, SkipReason):
                    skipped = True
                    skip_reason = result
                else:
                    H = result
            w = w_next
            rel = rec.add(t + 1, w, cfg.schedule.at(t + 1), skipped)
            if callback is not None:
                callback(IterationState(t=t, w=w, eps=eps_t, s_hat=s_hat, direction=d,
                                        pair=pair, H=H, skipped=skipped,
                                        skip_reason=skip_reason))
            if stop is not None and stop(t + 1, w, rel):
                break
    return rec.finish(status, w)


def run_res(problem: StochasticObjective, cfg: ResConfig, w0=None, *, w_star=None,
            record_objective=False, record_w=False, stop=None,
            callback=None) -> RunTrace:
    """Run RES: descent through (B^{-1} + Gamma I) with the regularized
    curvature update."""
    return _run_quasi_newton(problem, cfg, w0, regularized_update, w_star=w_star,
                             record_objective=record_objective, record_w=record_w,
                             stop=stop, callback=callback)


def run_plain_sbfgs(problem: StochasticObjective, cfg: ResConfig, w0=None, *,
                    w_star=None, record_objective=False, record_w=False, stop=None,
                    callback=None) -> RunTrace:
    """Run non-regularized stochastic BFGS (delta = 0, Gamma = 0).

    Expected to be unstable on poorly conditioned problems; guard skips
    apply and numerical blow-up ends the run with a diverged trace rather
    than raising.
    """
    if cfg.delta != 0.0 or cfg.Gamma != 0.0:
        raise ValueError("plain stochastic BFGS requires delta = 0 and Gamma = 0")
    return _run_quasi_newton(problem, cfg, w0, classic_update, w_star=w_star,
                             record_objective=record_objective, record_w=record_w,
                             stop=stop, callback=callback)


def run_sgd(problem: StochasticObjective, cfg: SgdConfig, w0=None, *, w_star=None,
            record_objective=False, record_w=False, stop=None) -> RunTrace:
    """Plain stochastic gradient descent, one batch and one gradient per
    iteration."""
    rng = as_rng(cfg.seed)
    w = _initial_iterate(problem, w0)
    rec = _Recorder(cfg.L, w_star, record_objective, record_w, problem)
    rel = rec.add(0, w, cfg.schedule.at(0), False)
    if stop is not None and stop(0, w, rel):
        return rec.finish("ok", w)
    status = "ok"
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.max_iters):
            eps_t = cfg.schedule.at(t)
            batch = problem.draw_batch(cfg.L, rng)
            s_hat = problem.stochastic_gradient(w, batch)
            w_next = w - eps_t * s_hat
            if _diverged(w_next):
                rec.add(t + 1, w_next, cfg.schedule.at(t + 1), False)
                w = w_next
                status = "diverged"
                break
            w = w_next
            rel = rec.add(t + 1, w, cfg.schedule.at(t + 1), False)
            if stop is not None and stop(t + 1, w, rel):
                break
    return rec.finish(status, w)
