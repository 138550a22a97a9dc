"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(see ``conftest.py``). Monte Carlo experiments use fixed seeds; the rate
experiments are the slow part of the suite (about ten minutes on one core).
"""

import json
import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from douglab import analysis, bounds, linalg, model, schedule, sim, transport, verify
from douglab.errors import HypothesisViolated
from douglab.schedule import StepSchedule

pytestmark = pytest.mark.slow

RESULTS = []

# checkpoints 1000 * 10^(j/4) over [1e3, 1e5]
RATE_KS = tuple(sorted({int(round(1000 * 10 ** (j / 4))) for j in range(9)}))
N_GAUSS = 200_000
FLOOR_REPS = 20


def record(tag, ok, detail):
    RESULTS.append(f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def _rate_fit(batch, Sigma, K, seed, ks=None, window=None):
    rows = analysis.w1_rows(batch, "y", Sigma, seed, n_gauss=N_GAUSS, bootstrap=0, floor_reps=FLOOR_REPS)
    ks = [r.k for r in rows]
    fit = analysis.fit_rate(ks, K, [r.w1 for r in rows], [r.bias_floor for r in rows],
                            window=window or (ks[0], ks[-1]))
    return fit, rows


def _admissible_K(p, s):
    pc = bounds.problem_constants(p)
    spec = bounds.spectral_constants(p.operator.jacobian, p.noise.sigma_b, s, pc.gamma)
    s = s.with_K(schedule.find_min_K(s, pc, spec))
    assert schedule.validate(s, pc, spec).ok
    return s, pc, spec


# --------------------------------------------------------------------------
# 1-6: oracle, dominance and calibration checks


def test_ac01_lyapunov_and_hurwitz_oracle():
    t0 = time.perf_counter()
    gen = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        d = int(gen.integers(1, 6))
        P = gen.standard_normal((d, d))
        S = gen.standard_normal((d, d))
        A = -P @ P.T - 0.2 * np.eye(d) + (S - S.T)
        X = linalg.solve_lyapunov(A, np.eye(d))
        worst = max(worst, float(np.abs(A.T @ X + X @ A + np.eye(d)).max()))
    disagree = 0
    for _ in range(100):
        d = int(gen.integers(1, 4))
        A = gen.standard_normal((d, d)) - gen.uniform(0, 1.5) * np.eye(d)
        roots = np.roots(np.poly(A))  # characteristic-polynomial oracle
        disagree += linalg.is_hurwitz(A) != bool(np.all(roots.real < 0))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and disagree == 0 and dt < 5
    assert record("AC1 Lyapunov/Hurwitz oracle", ok,
                  f"max residual {worst:.2e}, disagreements {disagree}, {dt:.1f}s")


def _verify_prop(pid, budget):
    r = verify.run_one(pid)
    return r, r.passed and r.seconds < budget


def test_ac02_mse_dominance():
    r, ok = _verify_prop("bounds.dominance_mse", 180)
    assert record("AC2 MSE dominance", ok, f"{r.detail} ({r.seconds:.0f}s)")


def test_ac03_coupling_dominance():
    r, ok = _verify_prop("bounds.dominance_coupling", 600)
    assert record("AC3 coupling dominance", ok, f"{r.detail} ({r.seconds:.0f}s)")


def test_ac04_theta_lemmas():
    r, ok = _verify_prop("bounds.dominance_theta", 60)
    assert record("AC4 Theta-product lemmas", ok, f"{r.detail} ({r.seconds:.0f}s)")


def test_ac05_recursion_lemma():
    r, ok = _verify_prop("bounds.dominance_rec_sol", 600)
    assert record("AC5 recursion lemma", ok, f"{r.detail} ({r.seconds:.0f}s)")


def test_ac06_w1_calibration():
    gen = np.random.default_rng(606)
    n = 10 ** 5
    est = transport.w1_1d(gen.standard_normal(n), 1.5 * gen.standard_normal(n), bootstrap=200, seed=6)
    truth = transport.w1_gaussian_1d(1.0, 1.5)
    cal_ok = abs(est.value - truth) <= 3 * est.stderr
    brute = verify.run_one("transport.oracle_equivalence")
    ok = cal_ok and brute.passed
    assert record("AC6 W1 calibration", ok,
                  f"|{est.value:.5f} - {truth:.5f}| vs 3 se {3 * est.stderr:.5f}; brute force n<=8: {brute.passed}")


# --------------------------------------------------------------------------
# 7: DOUG rate


def _doug_rate(kind):
    J = np.array([[-1.0]])
    nm = model.NoiseModel(kind, np.eye(1))
    s = StepSchedule(5000.0, 10002, 1.0)  # iota_V alpha = 2500 > 1; alpha_0 = alpha / K < 1/2
    spec = bounds.spectral_constants(J, nm.sigma_b, s, 1.0)
    assert spec.iota_V * s.alpha > 1
    t0 = time.perf_counter()
    b = sim.monte_carlo("doug", 10 ** 4, sim.RandomStream(11), threads=1, J=J, schedule=s, noise=nm,
                        plan=sim.CheckpointPlan(RATE_KS))
    fit, _ = _rate_fit(b, analysis.limit_covariance(J, nm.sigma_b, s), s.K, 5)
    return fit, time.perf_counter() - t0


def test_ac07_doug_rate_exponential():
    fit, dt = _doug_rate("centered_exponential")
    ok = -0.65 <= fit.slope <= -0.35 and dt < 600
    assert record("AC7 DOUG rate, exponential noise", ok,
                  f"slope {fit.slope:.3f} [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}] ({dt:.0f}s)")


@pytest.mark.xfail(strict=False, reason="with Gaussian b the DOUG iterate is exactly Gaussian and its W1 "
                                        "error is the covariance gap, which decays like 1/k (slope -1); "
                                        "the -1/2 bound rate is not attained")
def test_ac07_doug_rate_gaussian():
    fit, dt = _doug_rate("gaussian")
    ok = -0.65 <= fit.slope <= -0.35 and dt < 600
    assert record("AC7 DOUG rate, Gaussian noise", ok,
                  f"slope {fit.slope:.3f} [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}] ({dt:.0f}s)"
                  + ("" if ok else " (expected: exact rate is -1)"))


# --------------------------------------------------------------------------
# 8: SA rates, smooth vs saturating residual


@pytest.fixture(scope="module")
def sa_rates():
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisViolated)
        # (a) gradient of u^2/2 + 0.1 logcosh(u): delta = 1
        pa = model.Problem(model.logcosh_operator(np.eye(1), 0.1), model.NoiseModel("centered_exponential", np.eye(1)))
        # (b) saturating residual with delta = 1/2
        pb = model.Problem(model.saturating_operator([[-1.0]], 0.5, 0.5, s=1.0), model.NoiseModel("gaussian", np.eye(1)))
        for tag, p, alpha in (("a", pa, 5000.0), ("b", pb, 100.0)):
            s, pc, spec = _admissible_K(p, StepSchedule(alpha, 1, 1.0))
            t0 = time.perf_counter()
            b = sim.monte_carlo("sa", 10 ** 4, sim.RandomStream(12), threads=1, problem=p, schedule=s,
                                x0=np.zeros(1), plan=sim.CheckpointPlan(RATE_KS))
            fit, _ = _rate_fit(b, analysis.limit_covariance(p.operator.jacobian, p.noise.sigma_b, s), s.K, 5)
            out[tag] = (fit, s, pc, time.perf_counter() - t0)
    return out


def test_ac08a_sa_rate_smooth(sa_rates):
    fit, s, pc, dt = sa_rates["a"]
    ok = -0.65 <= fit.slope <= -0.35
    assert record("AC8a SA rate, logcosh (delta=1)", ok,
                  f"slope {fit.slope:.3f} [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}], alpha={s.alpha:g}, K={s.K} ({dt:.0f}s)")


def test_ac08b_sa_rate_saturating(sa_rates):
    fit, s, pc, dt = sa_rates["b"]
    fa = sa_rates["a"][0]
    hyp = 3 * pc.delta * pc.gamma * s.alpha > 2
    separated = fit.ci_lo > fa.ci_hi
    ok = hyp and -0.40 <= fit.slope <= -0.15 and separated
    assert record("AC8b SA rate, saturating (delta=1/2)", ok,
                  f"slope {fit.slope:.3f} [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}] vs (a) upper CI {fa.ci_hi:.3f}, "
                  f"3 delta gamma alpha = {3 * pc.delta * pc.gamma * s.alpha:.1f} ({dt:.0f}s)")


# --------------------------------------------------------------------------
# 9: constant-step steady state


def test_ac09_constant_step_steady_state():
    J = np.array([[-1.0]])
    p = model.Problem(model.linear_operator(J), model.NoiseModel("centered_exponential", np.eye(1)))
    pc = bounds.problem_constants(p)
    alphas = (0.1, 0.05, 0.025, 0.0125)
    excess = []
    for j, a in enumerate(alphas):
        s = StepSchedule(a)
        eta = bounds.spectral_constants(J, np.eye(1), s, pc.gamma).eta
        k = int(math.ceil(5 / (eta * a)))
        b = sim.monte_carlo("sa", 10 ** 5, sim.RandomStream(21), threads=1, problem=p, schedule=s,
                            x0=np.zeros(1), plan=sim.CheckpointPlan((k,)))
        r = analysis.measure_w1(b.y[:, 0, :], analysis.limit_covariance(J, np.eye(1), s), 9, j,
                                n_gauss=N_GAUSS, floor_reps=FLOOR_REPS)
        excess.append(r.w1 - r.bias_floor)
    slope = float(np.polyfit(np.log(alphas), np.log(excess), 1)[0])
    ok = 0.35 <= slope <= 0.75
    assert record("AC9 constant-step steady state", ok,
                  f"slope {slope:.3f}; excess W1 {', '.join(f'{e:.4f}' for e in excess)}")


# --------------------------------------------------------------------------
# 10: tail sandwich


def test_ac10_tail_sandwich():
    J = np.array([[-1.0, 0.3], [0.0, -1.5]])
    p = model.Problem(model.linear_operator(J), model.NoiseModel("gaussian", np.eye(2)))
    s, pc, spec = _admissible_K(p, StepSchedule(10.0, 1, 1.0))
    zeta = np.array([1.0, 0.0])
    Sigma = analysis.limit_covariance(J, np.eye(2), s)
    ks = (50, 5000)
    b = sim.monte_carlo("sa", 10 ** 5, sim.RandomStream(31), threads=1, problem=p, schedule=s,
                        x0=np.array([2.0, -2.0]), plan=sim.CheckpointPlan(ks))
    inside, widths, w1s = True, [], []
    for j, k in enumerate(ks):
        Y = b.y[:, j, :]
        w = analysis.measure_w1(Y, Sigma, 13, j, zeta=zeta, bootstrap=0).w1
        w1s.append(w)
        width = 0.0
        for a in (0.5, 1.0, 1.5, 2.0):
            lo, hi = bounds.tail_sandwich(a, zeta, k, w, Sigma)
            p_hat = transport.directional_tail(Y, zeta, a)[0]
            inside &= lo <= p_hat <= hi
            width = max(width, hi - lo)
        widths.append(width)
    ok = inside and widths[1] < widths[0]
    assert record("AC10 tail sandwich", ok,
                  f"inside={inside}, W1 {w1s[0]:.4f} -> {w1s[1]:.4f}, max width {widths[0]:.3f} -> {widths[1]:.3f}")


# --------------------------------------------------------------------------
# 11: CLT for step-size averaging


def test_ac11_clt():
    # running mean: alpha = 1, K = 1, xi = 1, Rademacher noise
    nm = model.NoiseModel("rademacher_product", np.eye(1))
    s = StepSchedule(1.0, 1, 1.0)
    ks = tuple(sorted({int(round(64 * 2 ** (j / 2))) for j in range(11)}))
    b = sim.monte_carlo("averaging", 2 * 10 ** 5, sim.RandomStream(41), threads=1, noise=nm, schedule=s,
                        x0=np.zeros(1), plan=sim.CheckpointPlan(ks))
    fit, _ = _rate_fit(b, analysis.averaging_covariance(nm.sigma_b, s), s.K, 17)
    mean_ok = -0.65 <= fit.slope <= -0.35

    # constant-step averaging with exponential noise: W1 to N(0, Sigma_b / 2) against alpha
    nm = model.NoiseModel("centered_exponential", np.eye(1))
    alphas = (0.1, 0.05, 0.025, 0.0125)
    excess, var_small = [], None
    for j, a in enumerate(alphas):
        s0 = StepSchedule(a)
        k = int(math.ceil(20 / a))
        bb = sim.monte_carlo("averaging", 10 ** 5, sim.RandomStream(42), threads=1, noise=nm, schedule=s0,
                             x0=np.zeros(1), plan=sim.CheckpointPlan((k,)))
        target = analysis.averaging_covariance(nm.sigma_b, s0)
        assert target[0, 0] == pytest.approx(0.5)
        r = analysis.measure_w1(bb.y[:, 0, :], target, 19, j, n_gauss=N_GAUSS, floor_reps=FLOOR_REPS)
        excess.append(r.w1 - r.bias_floor)
        var_small = float(bb.y[:, 0, 0].var())
    slope = float(np.polyfit(np.log(alphas), np.log(excess), 1)[0])
    # at alpha = 0.0125 the exact variance is 1/(2 - alpha), within 1% of 1/2 and far from 1/4
    var_ok = abs(var_small - 0.5) < 0.02
    ok = mean_ok and 0.35 <= slope <= 0.75 and var_ok
    assert record("AC11 CLT", ok,
                  f"running-mean slope {fit.slope:.3f} [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}]; alpha slope {slope:.3f}; "
                  f"Var at alpha=0.0125 {var_small:.4f} (Sigma_b/2 = 0.5)")


# --------------------------------------------------------------------------
# 12: full verify suite, two concurrent runs


def test_ac12_full_verify(tmp_path):
    t0 = time.perf_counter()
    procs = []
    for threads in ("1", "2"):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, DOUG_LAB_THREADS=threads)
        procs.append((out, subprocess.Popen([sys.executable, "-m", "douglab.cli", "verify", "--out", str(out)],
                                            env=env, stdout=subprocess.PIPE, stderr=subprocess.STDOUT)))
    codes = [p.wait() for _, p in procs]
    dt = time.perf_counter() - t0
    reports = [(out / "verify.json").read_bytes() for out, _ in procs]
    res = json.loads(reports[0])
    items = res["results"] if isinstance(res, dict) else res
    n_pass = sum(1 for r in items if r["passed"])
    ok = codes == [0, 0] and reports[0] == reports[1] and dt < 900
    assert record("AC12 full verify suite", ok,
                  f"{n_pass}/{len(items)} properties pass, identical reports: {reports[0] == reports[1]}, "
                  f"two concurrent runs in {dt:.0f}s")
