import dataclasses
import math
import warnings

import numpy as np
import pytest
from scipy import stats

from douglab import bounds, model
from douglab.errors import EpsOutOfRange, HypothesisViolated, InvalidRho
from douglab.schedule import StepSchedule

J1 = np.array([[-1.0]])
I1 = np.eye(1)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisViolated)
        yield


def _scalar_pc(**overrides):
    p = model.Problem(model.linear_operator(J1), model.NoiseModel("gaussian", I1))
    return dataclasses.replace(bounds.problem_constants(p), **overrides)


class TestSpectralConstants:
    def test_scalar_values(self):
        sc = bounds.spectral_constants(J1, I1, StepSchedule(4.0, 1, 1.0), 1.0)
        assert sc.V[0, 0] == pytest.approx(0.5)
        assert sc.iota_V == pytest.approx(0.5)
        assert sc.Sigma1[0, 0] == pytest.approx(0.5)
        assert sc.Sigma2[0, 0] == pytest.approx(4 / 7)
        assert sc.eta == pytest.approx(0.25)

    def test_symmetric_closed_form(self):
        g = np.random.default_rng(0)
        Q, _ = np.linalg.qr(g.standard_normal((3, 3)))
        lam = np.array([-0.5, -1.0, -2.5])
        J = Q @ np.diag(lam) @ Q.T
        Sb = np.diag([1.0, 2.0, 0.5])
        sc = bounds.spectral_constants(J, Sb, StepSchedule(0.1), 1.0)
        Bt = Q.T @ Sb @ Q
        expected = Q @ (Bt / -(lam[:, None] + lam[None, :])) @ Q.T
        np.testing.assert_allclose(sc.Sigma1, expected, atol=1e-12)
        assert sc.iota_V == pytest.approx(1 / (4 * np.linalg.eigvalsh(sc.V).max()), rel=1e-14)


class TestMseBound:
    def test_constant_step_example(self):
        pc = _scalar_pc(gamma=1.0, varsigma0=1.0, varsigma2=2.0, alpha0_cap=1.0)
        assert bounds.mse_bound(100, StepSchedule(0.1), pc, 1.0) == pytest.approx(math.exp(-15) + 0.2 / 1.5)

    def test_initial_value_dominates_E0(self):
        pc = _scalar_pc()
        assert bounds.mse_bound(0, StepSchedule(0.1), pc, 3.0) >= 3.0

    def test_xi1_shape(self):
        pc = _scalar_pc(gamma=1.0, varsigma0=1.0, varsigma2=2.0, alpha0_cap=1.0)
        s = StepSchedule(2.0, 10, 1.0)
        # polynomial transient plus steady term of order alpha_k
        big = [bounds.mse_bound(k, s, pc, 1.0) * (k + 10) for k in (10 ** 4, 10 ** 5, 10 ** 6)]
        assert big[0] == pytest.approx(big[2], rel=0.05)

    def test_strict_raises(self):
        pc = _scalar_pc(alpha0_cap=0.01)
        with pytest.raises(HypothesisViolated):
            bounds.mse_bound(5, StepSchedule(0.1), pc, 1.0, strict=True)


class TestDougAndSaBounds:
    def test_doug_transient_at_zero(self):
        pc = _scalar_pc()
        s = StepSchedule(0.01)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        rep = bounds.doug_w1_bound(0, s, J1, I1, spec, bounds.SteinConstants(1), pc)
        assert rep.term("phi11_initial") == pytest.approx(rep.meta["phi11"])

    def test_doug_dominant_term(self):
        pc = _scalar_pc()
        s = StepSchedule(0.01)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        rep = bounds.doug_w1_bound(50, s, J1, I1, spec, bounds.SteinConstants(1), pc)
        assert rep.term("phi2_doug") == pytest.approx(rep.meta["phi2"] * 0.1 * math.log(100) / 0.5)

    def test_doug_xi1_middle_term_halves(self):
        pc = _scalar_pc()
        s = StepSchedule(5.0, 100, 1.0)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        st = bounds.SteinConstants(1)
        a = bounds.doug_w1_bound(900, s, J1, I1, spec, st, pc).term("phi12_covariance")
        b = bounds.doug_w1_bound(1900, s, J1, I1, spec, st, pc).term("phi12_covariance")
        assert a / b == pytest.approx(2.0)

    def test_sa_reduces_to_doug_for_linear_additive(self):
        pc = _scalar_pc()
        s = StepSchedule(0.01)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        st = bounds.SteinConstants(1)
        rep = bounds.sa_w1_bound(100, s, spec, pc, st, 1.0, 0.7)
        for lbl in ("rho_nonlinear", "theta2_multiplicative", "theta1_transient", "rho_transient"):
            assert rep.term(lbl) == 0.0
        init = (rep.meta["phi11"] + spec.lambda_max * 0.7 / 0.01) * math.exp(-spec.iota_V * 0.01 * 100 / 2)
        assert rep.term("phi11_initial") == pytest.approx(init)
        assert rep.total == pytest.approx(sum(v for _, v in rep.terms))

    def test_sa_terms_decrease(self):
        p = model.Problem(model.saturating_operator(J1, 0.2, 1.0), model.NoiseModel("gaussian", I1))
        pc = bounds.problem_constants(p)
        s = StepSchedule(20.0, 1, 1.0)
        from douglab.schedule import find_min_K
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        s = s.with_K(find_min_K(s, pc, spec))
        st = bounds.SteinConstants(1)
        reps = [bounds.sa_w1_bound(k, s, spec, pc, st, 1.0, 0.7) for k in (10 ** 2, 10 ** 3, 10 ** 4)]
        for lbl in reps[0].labels:
            vals = [r.term(lbl) for r in reps]
            assert vals[0] > vals[1] > vals[2] or vals == [0.0] * 3, lbl

    def test_delta_changes_dominant_exponent(self):
        out = {}
        for dl in (1.0, 0.5):
            p = model.Problem(model.saturating_operator(J1, 0.2, dl), model.NoiseModel("gaussian", I1))
            pc = bounds.problem_constants(p)
            s = StepSchedule(60.0, 10 ** 4, 1.0)
            spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
            st = bounds.SteinConstants(1)
            r1 = bounds.sa_w1_bound(10 ** 6, s, spec, pc, st, 1.0, 0.7).term("rho_nonlinear")
            r2 = bounds.sa_w1_bound(10 ** 8, s, spec, pc, st, 1.0, 0.7).term("rho_nonlinear")
            out[dl] = math.log(r2 / r1) / math.log((10 ** 8 + 10 ** 4) / (10 ** 6 + 10 ** 4))
        assert out[1.0] == pytest.approx(-0.5, abs=1e-9)
        assert out[0.5] == pytest.approx(-0.25, abs=1e-9)


class TestCouplingBound:
    def test_zero_without_multiplicative_noise(self):
        pc = _scalar_pc()
        s = StepSchedule(0.1)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        assert bounds.coupling_bound(10, s, spec, pc, 1.0) == 0.0

    def test_k0_leaves_steady_term(self):
        p = model.Problem(model.linear_operator(J1), model.NoiseModel("gaussian", I1, "scalar_gaussian", 0.2))
        pc = bounds.problem_constants(p)
        s = StepSchedule(0.1)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        _, th2 = bounds._vartheta(spec, pc)
        assert bounds.coupling_bound(0, s, spec, pc, 1.0) == pytest.approx(th2 ** 2 * 0.1 / (spec.iota_V * pc.gamma))

    def test_exact_first_step(self):
        # E||z_1 - zhat_1||^2 = alpha A1 E0 for a deterministic x0 and xi = 0
        J = np.array([[-1.0, 0.2], [0.0, -1.5]])
        nm = model.NoiseModel("gaussian", np.eye(2), "scalar_gaussian", 0.2)
        pc = bounds.problem_constants(model.Problem(model.linear_operator(J), nm))
        s = StepSchedule(0.1255)
        spec = bounds.spectral_constants(J, np.eye(2), s, pc.gamma)
        exact = 0.1255 * nm.A1 * 2.0
        assert bounds.coupling_bound(1, s, spec, pc, 2.0) >= exact


class TestTails:
    def test_collapses_at_zero_w1(self):
        lo, hi = bounds.tail_sandwich(1.3, [1.0], 10, 0.0, [[2.0]])
        assert lo == hi == pytest.approx(stats.norm.sf(1.3 / math.sqrt(2.0)))

    def test_width_example(self):
        lo, hi = bounds.tail_sandwich(1.0, [1.0], 10, 0.01, [[1.0]])
        assert hi - lo == pytest.approx(2 * (0.1 * stats.norm.pdf(0.9) + 0.1))

    def test_far_tail_vanishes(self):
        lo, hi = bounds.tail_sandwich(1e4, [1.0, 0.0], 10, 0.04, np.eye(2))
        assert abs(lo) < 1e-3 and abs(hi) < 1e-3

    def test_invalid_rho(self):
        with pytest.raises(InvalidRho):
            bounds.tail_sandwich(1.0, [1.0], 10, 1.0, [[1.0]])

    def test_ccdf_deep_tail(self):
        assert bounds.gaussian_ccdf(10.0) == pytest.approx(stats.norm.sf(10.0), rel=1e-12)


class TestMeanError:
    def test_scalar_mean_norm(self):
        m, se = bounds.gaussian_mean_norm([[4.0]], n_mc=10 ** 6)
        assert abs(m - 2 * math.sqrt(2 / math.pi)) < 4 * se + 1e-12

    def test_chi2_mean(self):
        m, se = bounds.gaussian_mean_norm(np.eye(2), n_mc=10 ** 6)
        assert abs(m - math.sqrt(math.pi / 2)) < 4 * se

    def test_leading_term_scaling(self):
        pc = _scalar_pc()
        s = StepSchedule(5.0, 100, 1.0)
        spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
        st = bounds.SteinConstants(1)
        a = bounds.mean_error_bound(0, s, spec, pc, st, 1.0, 0.7, n_mc=10 ** 4)
        b = bounds.mean_error_bound(300, s, spec, pc, st, 1.0, 0.7, n_mc=10 ** 4)
        assert a.leading / b.leading == pytest.approx(2.0)


class TestRecSol:
    def test_exponential_example(self):
        v = bounds.rec_sol_closed_form(1.0, 1.0, 0.0, 0.0, 0.0, 0.5, StepSchedule(0.1), 10)
        assert v == pytest.approx(math.exp(-1))

    def test_steady_example(self):
        s = StepSchedule(0.1)
        for k in (0, 10, 1000):
            v = bounds.rec_sol_closed_form(0.0, 2.0, 0.0, 3.0, 0.0, 0.5, s, k)
            assert v == pytest.approx(3.0 * 0.1 ** 0.5 / 2.0)

    def test_log_case(self):
        s = StepSchedule(2.0, 10, 1.0)
        # mu1 alpha = rho2 = 1 selects the logarithmic sub-case; compare with the neighbouring cases
        def scaled(k):
            n = k + s.K
            return bounds.rec_sol_closed_form(0.0, 0.5, 0.0, 1.0, 0.0, 1.0, s, k) * n / math.log(n)
        assert scaled(10 ** 6) == pytest.approx(scaled(10 ** 9), rel=0.05)

    def test_iterated_recursion_is_dominated(self):
        g = np.random.default_rng(7)
        for _ in range(50):
            xi = float(g.choice([0.0, 0.5, 1.0]))
            alpha = float(g.uniform(0.05, 0.9)) if xi < 1 else float(g.uniform(1.0, 4.0))
            s = StepSchedule(alpha, int(g.integers(1, 50)), xi)
            mu1 = float(g.uniform(0.2, 1.0 / alpha)) if xi == 0 else float(g.uniform(0.2, 1.5))
            mu2, mu3, rho1, rho2 = (float(v) for v in g.uniform(0.0, 2.0, 4))
            u0 = float(g.uniform(0, 3))
            u = u0
            p = 1.0 - xi
            for k in range(400):
                ak = alpha / (k + s.K) ** xi
                if ak * mu1 > 1:
                    break
                tail = mu2 * ak * math.exp(-rho1 * alpha * (k + s.K) ** p / p) if xi < 1 else 0.0
                u = (1 - mu1 * ak) * u + tail + mu3 * ak ** (1 + rho2)
                assert u <= bounds.rec_sol_closed_form(u0, mu1, mu2, mu3, rho1, rho2, s, k + 1) * (1 + 1e-9)


class TestTheta:
    def test_single_step(self):
        s = StepSchedule(0.2)
        V = bounds.spectral_constants(J1, I1, s, 1.0).V
        S1 = bounds.stationary_covariance(J1, I1)
        d = bounds.theta_products(J1, s, 1, 1.0, I1, S1, V)
        assert d.sum_norm_2beta[0] == pytest.approx(0.2 ** 1.5)
        assert d.cov_gap[0] == pytest.approx(abs(0.2 - 0.5))

    def test_scalar_gap_limit(self):
        s = StepSchedule(0.1)
        V = bounds.spectral_constants(J1, I1, s, 1.0).V
        d = bounds.theta_products(J1, s, 2000, 1.0, I1, bounds.stationary_covariance(J1, I1), V)
        assert d.cov_gap[0] == pytest.approx(1 / 1.9 - 0.5, rel=1e-6)
        assert d.hypotheses_ok

    def test_shift_term_needed_above_half(self):
        J = np.array([[-1.0]])
        s = StepSchedule(0.162, 1505, 0.623)
        V = bounds.spectral_constants(J, I1, s, 1.0).V
        S1 = bounds.stationary_covariance(J, I1)
        d = bounds.theta_products(J, s, [10 ** 5], 1.0, I1, S1, V)
        _, literal = bounds.theta_lemma_bounds(J, s, [10 ** 5], 1.0, S1, V, shift_term=False)
        _, corrected = bounds.theta_lemma_bounds(J, s, [10 ** 5], 1.0, S1, V, shift_term=True)
        assert d.cov_gap_V[0] > literal[0]
        assert d.cov_gap_V[0] <= corrected[0]


class TestContraction:
    def test_zero_eps(self):
        lhs, rhs, ok = bounds.contraction_check(J1, [[0.5]], 0.0)
        assert lhs == rhs == 1.0 and ok

    def test_scalar_example(self):
        lhs, rhs, ok = bounds.contraction_check(J1, [[0.5]], 0.1)
        assert lhs == pytest.approx(0.81) and rhs == pytest.approx(0.95) and ok

    def test_symmetric_variant(self):
        lhs, rhs, ok = bounds.contraction_check(np.diag([-1.0, -2.0]), np.eye(2), 0.5, symmetric=True)
        assert lhs == pytest.approx(0.25) and ok

    def test_out_of_range(self):
        with pytest.raises(EpsOutOfRange):
            bounds.contraction_check(J1, [[0.5]], 100.0)


class TestCltRate:
    def test_xi1(self):
        s = StepSchedule(1.0, 1, 1.0)
        k = math.e ** 2 - 1
        assert bounds.clt_rate(k, s, 3.0) == pytest.approx(3.0 * 2 / math.e)

    def test_xi0(self):
        assert bounds.clt_rate(10, StepSchedule(0.01), 2.0) == pytest.approx(2.0 * 0.1 * math.log(100))


def test_bound_report_serializes():
    pc = _scalar_pc()
    s = StepSchedule(0.01)
    spec = bounds.spectral_constants(J1, I1, s, pc.gamma)
    rep = bounds.doug_w1_bound(3, s, J1, I1, spec, bounds.SteinConstants(1, C2=3.0), pc)
    d = rep.to_dict()
    assert d["meta"]["C2"] == 3.0 and d["total"] == pytest.approx(rep.total)
