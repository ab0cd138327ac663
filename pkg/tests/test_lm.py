import numpy as np
import pytest

from nlssid.errors import DivergenceError, NonFiniteError
from nlssid.lm import LmSettings, levenberg_marquardt


def linear_problem(rng, m=30, n=4):
    A = rng.standard_normal((m, n))
    target = rng.standard_normal(m)

    def eval_fn(theta, with_jac):
        pred = A @ theta
        return target - pred, (A if with_jac else None)

    theta_star = np.linalg.lstsq(A, target, rcond=None)[0]
    return eval_fn, theta_star


def test_converges_to_least_squares_solution():
    rng = np.random.default_rng(0)
    eval_fn, theta_star = linear_problem(rng)
    result = levenberg_marquardt(eval_fn, np.zeros(4))
    assert result.status == "converged"
    np.testing.assert_allclose(result.theta, theta_star, atol=1e-8)


def test_nonlinear_fit_converges():
    # fit a*exp(b*t) through exact data
    t = np.linspace(0, 1, 50)
    target = 2.0 * np.exp(-1.3 * t)

    def eval_fn(theta, with_jac):
        a, b = theta
        pred = a * np.exp(b * t)
        J = None
        if with_jac:
            J = np.column_stack([np.exp(b * t), a * t * np.exp(b * t)])
        return target - pred, J

    result = levenberg_marquardt(eval_fn, np.array([1.0, 0.0]))
    np.testing.assert_allclose(result.theta, [2.0, -1.3], atol=1e-6)
    assert result.cost < 1e-16


def test_trace_starts_at_iteration_zero():
    rng = np.random.default_rng(1)
    eval_fn, _ = linear_problem(rng)
    result = levenberg_marquardt(eval_fn, np.zeros(4))
    first = result.trace[0]
    assert first.iteration == 0
    assert first.accepted is True
    assert first.damping == 0.0


def test_accepted_cost_trace_non_increasing():
    rng = np.random.default_rng(2)
    eval_fn, _ = linear_problem(rng, m=50, n=6)
    result = levenberg_marquardt(eval_fn, rng.standard_normal(6))
    accepted = [e.cost for e in result.trace if e.accepted]
    assert all(b <= a for a, b in zip(accepted, accepted[1:]))


def test_cost_scale_scales_reported_cost():
    rng = np.random.default_rng(3)
    eval_fn, _ = linear_problem(rng)
    r1 = levenberg_marquardt(eval_fn, np.zeros(4))
    r2 = levenberg_marquardt(eval_fn, np.zeros(4), cost_scale=0.5)
    assert r2.trace[0].cost == pytest.approx(0.5 * r1.trace[0].cost)


def test_starting_at_minimum_converges_immediately():
    rng = np.random.default_rng(4)
    eval_fn, theta_star = linear_problem(rng)
    result = levenberg_marquardt(eval_fn, theta_star)
    assert result.status == "converged"
    np.testing.assert_array_almost_equal(result.theta, theta_star, decimal=10)


def test_stalls_when_no_step_helps():
    # residual independent of theta, but a fake Jacobian keeps proposing
    # steps: every trial is rejected until the damping overflows
    def eval_fn(theta, with_jac):
        return np.array([1.0]), (np.array([[1.0]]) if with_jac else None)

    result = levenberg_marquardt(eval_fn, np.array([0.0]),
                                 LmSettings(max_iter=500, step_tol=0.0))
    assert result.status == "stalled"
    assert result.theta[0] == 0.0
    assert all(not e.accepted for e in result.trace[1:])


def test_max_iter_status():
    t = np.linspace(0, 1, 30)
    target = np.sin(3 * t)

    def eval_fn(theta, with_jac):
        pred = theta[0] * np.exp(theta[1] * t)
        J = None
        if with_jac:
            J = np.column_stack([np.exp(theta[1] * t),
                                 theta[0] * t * np.exp(theta[1] * t)])
        return target - pred, J

    result = levenberg_marquardt(eval_fn, np.array([0.1, 0.1]),
                                 LmSettings(max_iter=2))
    assert result.status in ("max_iter", "converged")
    assert result.trace[-1].iteration <= 2


def test_divergence_on_initial_point_propagates():
    def eval_fn(theta, with_jac):
        raise DivergenceError("boom", step=5)

    with pytest.raises(DivergenceError):
        levenberg_marquardt(eval_fn, np.zeros(2))


def test_nonfinite_initial_cost_raises_with_iteration():
    def eval_fn(theta, with_jac):
        return np.array([np.inf]), (np.zeros((1, 1)) if with_jac else None)

    with pytest.raises(NonFiniteError) as exc:
        levenberg_marquardt(eval_fn, np.zeros(1))
    assert exc.value.iteration == 0


def test_divergent_trial_step_is_rejected_not_fatal():
    # cost decreases toward theta=1 but any theta > 1.5 "diverges";
    # the minimizer must recover by damping up
    target = np.array([1.0, 1.0])

    def eval_fn(theta, with_jac):
        if abs(theta[0]) > 1.5:
            raise DivergenceError("left the safe region", step=0)
        pred = np.array([theta[0], theta[0] ** 3])
        J = np.array([[1.0], [3 * theta[0] ** 2]]) if with_jac else None
        return target - pred, J

    result = levenberg_marquardt(eval_fn, np.array([0.0]))
    assert result.status == "converged"
    assert result.theta[0] == pytest.approx(1.0, abs=1e-6)


def test_nonfinite_raise_mode_aborts_with_iteration():
    def eval_fn(theta, with_jac):
        if theta[0] != 0.0:
            raise DivergenceError("blew up", step=1)
        return np.array([1.0]), (np.array([[1.0]]) if with_jac else None)

    with pytest.raises(NonFiniteError) as exc:
        levenberg_marquardt(eval_fn, np.zeros(1), nonfinite="raise")
    assert exc.value.iteration == 1


def test_rejected_steps_do_not_corrupt_iterate():
    seen = []

    def eval_fn(theta, with_jac):
        seen.append(theta.copy())
        if abs(theta[0]) > 0.1:
            return np.array([1e6]), (np.array([[1.0]]) if with_jac else None)
        return np.array([1.0 - theta[0]]), (
            np.array([[1.0]]) if with_jac else None)

    result = levenberg_marquardt(eval_fn, np.zeros(1),
                                 LmSettings(max_iter=30))
    # the iterate only ever moves to accepted points
    assert abs(result.theta[0]) <= 0.1 + 1e-12
