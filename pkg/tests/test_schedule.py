import numpy as np
import pytest

from douglab import bounds, model, schedule
from douglab.errors import NotFound, NotHurwitzAfterShift
from douglab.schedule import StepSchedule


@pytest.mark.parametrize("s, k, expected", [
    (StepSchedule(0.1, 1, 0.0), 7, 0.1),
    (StepSchedule(1.0, 4, 1.0), 0, 0.25),
    (StepSchedule(1.0, 100, 0.5), 0, 0.1),
])
def test_step_examples(s, k, expected):
    assert schedule.step(s, k) == pytest.approx(expected)


def test_step_vectorized_and_decreasing():
    a = schedule.step(StepSchedule(0.5, 3, 0.7), np.arange(100))
    assert a.shape == (100,) and np.all(np.diff(a) < 0)


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=1.0, K=0), dict(alpha=1.0, xi=1.5)])
def test_invalid_schedules(kwargs):
    with pytest.raises(ValueError):
        StepSchedule(**kwargs)


def test_drift_matrix_examples():
    J = np.array([[-1.0, 0.3], [0.0, -2.0]])
    np.testing.assert_allclose(schedule.drift_matrix(StepSchedule(2.0, 1, 1.0), 5, J), J + 0.25 * np.eye(2))
    np.testing.assert_allclose(schedule.drift_matrix(StepSchedule(1.0, 4, 0.5), 0, J), J + 0.125 * np.eye(2))
    np.testing.assert_allclose(schedule.drift_matrix(StepSchedule(0.1, 1, 0.0), 9, J), J)


def test_limit_drift():
    assert schedule.limit_drift(StepSchedule(4.0, 1, 1.0), [[-1.0]])[0, 0] == pytest.approx(-7 / 8)
    with pytest.raises(NotHurwitzAfterShift):
        schedule.limit_drift(StepSchedule(0.4, 1, 1.0), [[-1.0]])


def test_drift_shift_converges_to_limit():
    s = StepSchedule(3.0, 1, 1.0)
    assert schedule.drift_shift(s, 10 ** 9) == pytest.approx(1 / 6)
    s = StepSchedule(3.0, 1, 0.5)
    assert schedule.drift_shift(s, 10 ** 12) < 1e-6


def _scalar_problem():
    return model.Problem(model.linear_operator([[-1.0]]), model.NoiseModel("gaussian", np.eye(1)))


def test_validate_admissible_xi1():
    p = _scalar_problem()
    pc = bounds.problem_constants(p)
    s = StepSchedule(5.0, 10 ** 6, 1.0)
    rep = schedule.validate(s, pc, bounds.spectral_constants([[-1.0]], np.eye(1), s, pc.gamma))
    assert rep.ok, rep.failed()


def test_validate_flags_large_constant_step():
    p = _scalar_problem()
    pc = bounds.problem_constants(p)
    s = StepSchedule(10.0, 1, 0.0)
    rep = schedule.validate(s, pc, bounds.spectral_constants([[-1.0]], np.eye(1), s, pc.gamma))
    assert not rep.ok
    assert "alpha0_le_1" in rep.failed()


def test_find_min_K_is_minimal():
    p = _scalar_problem()
    pc = bounds.problem_constants(p)
    s = StepSchedule(5.0, 1, 1.0)
    spec = bounds.spectral_constants([[-1.0]], np.eye(1), s, pc.gamma)
    K = schedule.find_min_K(s, pc, spec)
    assert schedule.validate(s.with_K(K), pc, spec).ok
    if K > 1:
        assert not schedule.validate(s.with_K(K - 1), pc, spec).ok


def test_find_min_K_impossible():
    p = _scalar_problem()
    pc = bounds.problem_constants(p)
    s = StepSchedule(0.3, 1, 1.0)  # 1 / (2 alpha) > 1 shifts J out of the Hurwitz set
    spec = bounds.spectral_constants([[-1.0]], np.eye(1), StepSchedule(5.0, 1, 1.0), pc.gamma)
    with pytest.raises(NotFound):
        schedule.find_min_K(s, pc, spec, K_max=10 ** 4)
