"""Acceptance gate: fifteen numbered criteria covering the curvature
update, the problem families, and the benchmark studies.

Each test asserts exactly one criterion and prints one PASS/FAIL line with
the measured values (visible with pytest -s; the -v outcome carries the
same verdict).  Criteria 1-8 are exact and fast; criteria 9-15 are seeded
statistical studies and together take a few minutes on one core.
"""
import time
from dataclasses import dataclass

import numpy as np
import pytest

from resopt.curvature import (
    HessianApprox,
    VariationPair,
    classic_update,
    descent_matrix,
    initial_hessian,
    inverse_of_shifted,
    regularized_update,
)
from resopt.experiments import (
    check_rate_recursion,
    default_spec,
    run_rate_check,
    run_study,
)
from resopt.objective import generate_quadratic, generate_svm_data, SvmProblem
from resopt.optimizer import ResConfig, StepSchedule, run_res

from _helpers import central_diff_grad, rel_err


def report(num: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d}: {detail}"
    print(line)
    assert ok, line


# --------------------------------------------------------------------------
# shared corpus of accepted curvature updates (criteria 1, 2, 4)
# --------------------------------------------------------------------------

@dataclass
class UpdateStep:
    H_prev: HessianApprox
    pair: VariationPair
    H_next: HessianApprox


class UpdateCorpus:
    """Chains of accepted regularized updates across dimensions and floors.

    Variations come from random SPD matrices with eigenvalues above the
    floor, so every drawn pair passes the curvature guard by construction.
    """

    DIMS = (1, 2, 5, 20, 50)
    DELTAS = (0.0, 1e-3, 1e-1)
    STEPS_PER_CHAIN = 67  # 5 * 3 * 67 = 1005 >= 1000 updates

    def __init__(self, seed=101):
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        self.steps: list[UpdateStep] = []
        for n in self.DIMS:
            for delta in self.DELTAS:
                C = _random_spd(n, delta + 0.1, delta + 2.0, rng)
                H = initial_hessian(n, delta)
                for _ in range(self.STEPS_PER_CHAIN):
                    v = rng.standard_normal(n) * 10.0 ** rng.uniform(-3, 1)
                    pair = VariationPair.from_gradients(v, C @ v, delta)
                    H_next = regularized_update(H, pair)
                    assert isinstance(H_next, HessianApprox), H_next
                    self.steps.append(UpdateStep(H, pair, H_next))
                    H = H_next
        self.build_seconds = time.perf_counter() - start


def _random_spd(n, eig_lo, eig_hi, rng):
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    lams = rng.uniform(eig_lo, eig_hi, size=n)
    return Q @ np.diag(lams) @ Q.T


@pytest.fixture(scope="module")
def corpus():
    return UpdateCorpus()


# --------------------------------------------------------------------------
# exact criteria
# --------------------------------------------------------------------------

def test_01_secant_condition(corpus):
    start = time.perf_counter()
    worst = 0.0
    for step in corpus.steps:
        resid = step.H_next.B @ step.pair.v - step.pair.r_hat
        scaled = np.linalg.norm(resid) / (1.0 + np.linalg.norm(step.pair.r_hat))
        worst = max(worst, scaled)
    elapsed = corpus.build_seconds + (time.perf_counter() - start)
    ok = worst <= 1e-8 and len(corpus.steps) >= 1000 and elapsed < 10.0
    report(1, ok, f"secant residual on {len(corpus.steps)} accepted updates: "
                  f"max {worst:.2e} <= 1e-8, {elapsed:.1f}s < 10s")


def test_02_eigenvalue_floor(corpus):
    worst = np.inf
    for step in corpus.steps:
        mineig = float(np.linalg.eigvalsh(step.H_next.B)[0])
        worst = min(worst, mineig - step.H_prev.delta)
    ok = worst >= -1e-8
    report(2, ok, f"min-eig minus floor across corpus: {worst:.2e} >= -1e-8")


def test_03_zero_floor_reduces_to_classic():
    rng = np.random.default_rng(303)
    worst = 0.0
    for n in (1, 2, 5, 20, 50):
        C = _random_spd(n, 0.1, 2.0, rng)
        H_reg = initial_hessian(n, 0.0)
        H_cls = initial_hessian(n, 0.0)
        for _ in range(40):
            v = rng.standard_normal(n)
            pair = VariationPair.from_gradients(v, C @ v, 0.0)
            H_reg = regularized_update(H_reg, pair)
            H_cls = classic_update(H_cls, pair)
            diff = np.max(np.abs(H_reg.B - H_cls.B))
            scale = 1.0 + np.max(np.abs(H_cls.B))
            worst = max(worst, diff / scale)
    ok = worst <= 1e-12
    report(3, ok, f"zero-floor update vs classic formula: "
                  f"max elementwise gap {worst:.2e} <= 1e-12")


def test_04_structured_inverse(corpus):
    worst = 0.0
    for step in corpus.steps:
        delta = step.H_prev.delta
        structured = inverse_of_shifted(step.H_prev, step.pair)
        shifted = step.H_next.B - delta * np.eye(step.H_next.dim)
        direct = np.linalg.inv(shifted)
        rel = np.linalg.norm(structured - direct) / np.linalg.norm(direct)
        worst = max(worst, float(rel))
    ok = worst <= 1e-8
    report(4, ok, f"rank-structured vs direct inverse of the shifted "
                  f"update: max rel error {worst:.2e} <= 1e-8")


def test_05_gradient_checks():
    rng = np.random.default_rng(505)
    worst = 0.0
    quad = generate_quadratic(6, 2, 0.5, rng)
    theta = rng.uniform(-0.5, 0.5, size=6)
    for _ in range(10):
        w = rng.standard_normal(6) * 2.0
        g = quad.sample_gradient(w, theta)
        g_fd = central_diff_grad(lambda u: quad.sample_value(u, theta), w)
        worst = max(worst, rel_err(g, g_fd))
    X, y = generate_svm_data(5, 40, rng)
    for loss in ("hinge", "squared_hinge", "log"):
        svm = SvmProblem(X, y, lam=1e-3, loss=loss)
        for _ in range(10):
            w = rng.standard_normal(5)
            g = svm.sample_gradient(w, 3)
            g_fd = central_diff_grad(lambda u: svm.sample_value(u, 3), w)
            worst = max(worst, rel_err(g, g_fd))
    ok = worst < 1e-5
    report(5, ok, f"analytic vs central-difference gradients over "
                  f"quadratic and all SVM losses: max rel err {worst:.2e} < 1e-5")


def test_06_descent_matrix_spectrum():
    delta, Gamma = 1e-3, 1e-4
    lo_seen, hi_seen = np.inf, -np.inf
    for xi, seed in ((0, 60), (2, 61)):
        rng = np.random.default_rng(seed)
        prob = generate_quadratic(10, xi, 0.5, rng)
        eigs = []

        def watch(st):
            eigs.append(np.linalg.eigvalsh(descent_matrix(st.H, Gamma)))

        cfg = ResConfig(L=5, delta=delta, Gamma=Gamma,
                        schedule=StepSchedule(1e-1, 1e3),
                        max_iters=300, seed=seed)
        trace = run_res(prob, cfg, callback=watch)
        assert trace.status == "ok"
        stacked = np.concatenate(eigs)
        lo_seen = min(lo_seen, float(stacked.min()))
        hi_seen = max(hi_seen, float(stacked.max()))
    ok = lo_seen >= Gamma and hi_seen <= 1.0 / delta + Gamma
    report(6, ok, f"descent-matrix eigenvalues along full runs: "
                  f"[{lo_seen:.3e}, {hi_seen:.3e}] within "
                  f"[{Gamma:.0e}, {1.0 / delta + Gamma:.6g}]")


def test_07_curvature_guard_skip_free():
    delta = 1e-3
    worst_margin = np.inf
    total_skips = 0
    for xi, seed in ((0, 70), (1, 71)):
        rng = np.random.default_rng(seed)
        prob = generate_quadratic(10, xi, 0.5, rng)
        m_tilde = prob.curvature_bounds().m_tilde
        assert delta < m_tilde
        margins = []

        def watch(st):
            v, r_tilde = st.pair.v, st.pair.r_tilde
            v_sq = float(v @ v)
            lower = (m_tilde - delta - 1e-8) * v_sq
            margins.append(float(v @ r_tilde) - lower)

        cfg = ResConfig(L=5, delta=delta, Gamma=1e-4,
                        schedule=StepSchedule(1e-1, 1e3),
                        max_iters=400, seed=seed)
        trace = run_res(prob, cfg, callback=watch)
        total_skips += int(trace.skipped.sum())
        worst_margin = min(worst_margin, min(margins))
    ok = worst_margin >= 0.0 and total_skips == 0
    report(7, ok, f"observed curvature stayed above the strong-convexity "
                  f"floor (worst margin {worst_margin:.2e}) with "
                  f"{total_skips} skipped updates")


def test_08_decay_recursion_bound():
    # sound regime for the closed-form constant: offsets at least as large
    # as the decay coefficient, so the one-step induction never overshoots
    rng = np.random.default_rng(808)
    checked = 0
    bad = 0
    for k in range(20):
        c = float(1.0 + 10.0 ** rng.uniform(-0.5, 0.9))
        b = float(10.0 ** rng.uniform(-2, 2))
        t0 = float(c + 10.0 ** rng.uniform(0, 2))
        u0 = 0.0 if k == 0 else float(10.0 ** rng.uniform(-2, 1))
        chk = check_rate_recursion(c, b, t0, u0, horizon=100_000,
                                   rel_slack=1e-12)
        checked += 1
        bad += chk.violations
    ok = checked == 20 and bad == 0
    report(8, ok, f"u_t <= Q/(t+t0) over 20 random tuples to t=1e5: "
                  f"{bad} violations")


# --------------------------------------------------------------------------
# statistical criteria (seeded, single core, a few minutes total)
# --------------------------------------------------------------------------

def test_09_condition_study_xi2():
    spec = default_spec("condition", seed=1009)
    res = run_study(spec)
    m_res = res.summaries["res"].mean
    m_sgd = res.summaries["sgd"].mean
    ratio = m_sgd / m_res
    ok = ratio >= 5.0 and 1e2 <= m_res <= 1e3
    report(9, ok, f"ill-conditioned quadratics: mean tau res={m_res:.0f} "
                  f"in [1e2,1e3], sgd/res ratio {ratio:.1f} >= 5")


def test_10_condition_study_xi0():
    spec = default_spec("condition", xi=0, eps0=0.04, T0=150.0, seed=1010)
    res = run_study(spec)
    m_res = res.summaries["res"].mean
    m_sgd = res.summaries["sgd"].mean
    factor = max(m_res, m_sgd) / min(m_res, m_sgd)
    ok = m_res < 2e3 and m_sgd < 2e3 and factor <= 10.0 and m_res <= m_sgd
    report(10, ok, f"well-conditioned quadratics: mean tau res={m_res:.0f} "
                   f"<= sgd={m_sgd:.0f}, both < 2e3, factor {factor:.2f} <= 10")


def test_11_sample_size_study():
    spec = default_spec("sample_size", seed=1011)
    res = run_study(spec)
    labels = [f"res_L{L}" for L in spec.L_list]
    means = [res.summaries[lab].mean for lab in labels]
    stds = [res.summaries[lab].std for lab in labels]
    k = int(np.argmin(means))
    interior_min = 1 <= k <= len(means) - 2
    std_decreasing = all(a > b for a, b in zip(stds, stds[1:]))
    ok = interior_min and std_decreasing
    report(11, ok, f"batch-size sweep: mean tau minimized at "
                   f"L={spec.L_list[k]} (interior), stds "
                   f"{[f'{s:.0f}' for s in stds]} strictly decreasing")


def test_12_dimension_study():
    spec = default_spec("dimension", n_list=(50,), seed=1012)
    res = run_study(spec)
    med_res = res.summaries["res_n50"].median
    med_sgd = res.summaries["sgd_n50"].median
    fail_rate = res.summaries["res_n50"].failures / spec.J
    ok = med_res < med_sgd / 3.0 and fail_rate < 0.05
    report(12, ok, f"n=50 uniform-curvature quadratics: median tau "
                   f"res={med_res:.0f} < sgd={med_sgd:.0f}/3, res failure "
                   f"rate {fail_rate:.0%} < 5%")


def test_13_svm_accuracy():
    spec = default_spec("svm_accuracy", seed=1013)
    res = run_study(spec)
    m_res = float(np.mean(res.accuracies["res"]))
    m_sgd = float(np.mean(res.accuracies["sgd"]))
    clair = res.clairvoyant_accuracy
    c1 = m_res >= 0.75
    c2 = m_res > m_sgd
    c3 = abs(clair - 0.98) <= 0.01
    ok = c1 and c2 and c3
    report(13, ok, f"svm n=4: mean res accuracy {m_res:.4f} >= 0.75 "
                   f"({'ok' if c1 else 'VIOLATED'}); res > sgd "
                   f"{m_sgd:.4f} ({'ok' if c2 else 'VIOLATED'}); "
                   f"clairvoyant {clair:.4f} in 0.98+-0.01 "
                   f"({'ok' if c3 else 'VIOLATED'})")


def test_14_regularization_necessity():
    res_lower = 0
    sbfgs_jumped = 0
    n_seeds = 20
    for seed in range(n_seeds):
        spec = default_spec("svm_regularization", seed=seed)
        res = run_study(spec)
        final_res = res.summaries["res"].mean
        final_sbfgs = res.summaries["sbfgs"].mean
        if np.isfinite(final_res) and (
                not np.isfinite(final_sbfgs) or final_res < final_sbfgs):
            res_lower += 1
        if res.jump_factors["sbfgs"][0] >= 10.0:
            sbfgs_jumped += 1
    ok = res_lower >= 0.7 * n_seeds and sbfgs_jumped >= 0.5 * n_seeds
    report(14, ok, f"constant-step svm over {n_seeds} seeds: regularized "
                   f"final lower in {res_lower}/{n_seeds} (need >= 14), "
                   f"plain update 10x jump in {sbfgs_jumped}/{n_seeds} "
                   f"(need >= 10)")


def test_15_empirical_decay_rate():
    spec = default_spec("rate_check", seed=1015)
    rep = run_rate_check(spec)
    ok = rep.fitted_slope <= -0.8
    report(15, ok, f"seed-averaged optimality gap over {spec.runs} runs: "
                   f"log-log slope {rep.fitted_slope:.2f} <= -0.8 "
                   f"(compliance value {rep.rate_condition_value:.2f} > 1, "
                   f"{rep.violations} bound violations)")
