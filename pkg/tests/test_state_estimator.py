import numpy as np
import pytest

from conftest import make_stable_lti
from nlssid.errors import DimensionError, SingularSystemError
from nlssid.lti import LtiModel, simulate_lti
from nlssid.records import IoRecord
from nlssid.state_estimator import (estimate_state, lambda_grid_costs)


def dense_solution(record, model, lam):
    """Stacked least-squares oracle: minimize over the flat x vector."""
    N, n_x = record.n_samples, model.n_x
    n_y = model.n_y
    A, B, C, D = model.A, model.B, model.C, model.D
    rows_y = N * n_y
    rows_x = (N - 1) * n_x
    M = np.zeros((rows_y + rows_x, N * n_x))
    b = np.zeros(rows_y + rows_x)
    s = np.sqrt(lam)
    for t in range(N):
        M[t * n_y:(t + 1) * n_y, t * n_x:(t + 1) * n_x] = C
        b[t * n_y:(t + 1) * n_y] = record.y[t] - D @ record.u[t]
    for t in range(N - 1):
        r0 = rows_y + t * n_x
        M[r0:r0 + n_x, (t + 1) * n_x:(t + 2) * n_x] = s * np.eye(n_x)
        M[r0:r0 + n_x, t * n_x:(t + 1) * n_x] = -s * A
        b[r0:r0 + n_x] = s * (B @ record.u[t])
    x_flat = np.linalg.lstsq(M, b, rcond=None)[0]
    return x_flat.reshape(N, n_x)


def test_two_sample_hand_case_matches_dense_oracle():
    # minimize (1-x1)^2 + (1-x2)^2 + (x2 - 0.5 x1)^2; the stationarity
    # conditions give x1 = 10/9, x2 = 7/9
    model = LtiModel(A=[[0.5]], B=[[0.0]], C=[[1.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((2, 1)), y=np.ones((2, 1)))
    traj = estimate_state(record, model, 1.0)
    dense = dense_solution(record, model, 1.0)
    np.testing.assert_allclose(traj.x, dense, atol=1e-12)
    np.testing.assert_allclose(traj.x[:, 0], [10.0 / 9.0, 7.0 / 9.0],
                               atol=1e-12)
    x1, x2 = traj.x[:, 0]
    assert traj.e_y == pytest.approx((1 - x1) ** 2 + (1 - x2) ** 2)
    assert traj.e_x == pytest.approx((x2 - 0.5 * x1) ** 2)


def test_banded_matches_dense_oracle_random_instances():
    rng = np.random.default_rng(21)
    for _ in range(8):
        n_x = int(rng.integers(1, 4))
        N = int(rng.integers(5, 51))
        model = make_stable_lti(rng, n_x=n_x,
                                n_u=int(rng.integers(1, 3)),
                                n_y=int(rng.integers(1, 3)))
        record = IoRecord(u=rng.standard_normal((N, model.n_u)),
                          y=rng.standard_normal((N, model.n_y)))
        lam = float(10 ** rng.uniform(-2, 2))
        traj = estimate_state(record, model, lam)
        dense = dense_solution(record, model, lam)
        assert np.max(np.abs(traj.x - dense)) < 1e-9


def test_costs_are_self_consistent():
    rng = np.random.default_rng(22)
    model = make_stable_lti(rng, n_x=2)
    record = IoRecord(u=rng.standard_normal((60, 1)),
                      y=rng.standard_normal((60, 1)))
    traj = estimate_state(record, model, 0.7)
    X = traj.x
    e_y = float(np.sum((record.y - X @ model.C.T - record.u @ model.D.T) ** 2))
    e_x = float(np.sum((X[1:] - X[:-1] @ model.A.T
                        - record.u[:-1] @ model.B.T) ** 2))
    assert traj.e_y == pytest.approx(e_y, rel=1e-8)
    assert traj.e_x == pytest.approx(e_x, rel=1e-8)


def test_large_lambda_recovers_linear_simulation():
    rng = np.random.default_rng(23)
    model = make_stable_lti(rng, n_x=2, radius=0.8)
    u = rng.standard_normal((200, 1))
    x0 = rng.standard_normal(2)
    y, x_true = simulate_lti(model, u, x0=x0)
    record = IoRecord(u=u, y=y)
    traj = estimate_state(record, model, 1e9)
    energy = float(np.sum(y ** 2))
    assert traj.e_x < 1e-12 * energy
    assert np.max(np.abs(traj.x - x_true)) < 1e-5


def test_monotonicity_over_lambda_grid(wh_small):
    est, _, _ = wh_small
    rng = np.random.default_rng(24)
    model = make_stable_lti(rng, n_x=3, radius=0.7)
    rows = lambda_grid_costs(est, model, [0.1, 0.5, 1.0, 5.0, 10.0])
    assert [r.lam for r in rows] == [0.1, 0.5, 1.0, 5.0, 10.0]
    e_x = [r.e_x for r in rows]
    e_y = [r.e_y for r in rows]
    w = [r.relative_weight for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(e_x, e_x[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(e_y, e_y[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(w, w[1:]))


def test_noiseless_linear_data_gives_zero_costs():
    rng = np.random.default_rng(25)
    model = make_stable_lti(rng, n_x=2, radius=0.8)
    u = rng.standard_normal((150, 1))
    y, _ = simulate_lti(model, u)
    record = IoRecord(u=u, y=y)
    rows = lambda_grid_costs(record, model, [1.0])
    energy = float(np.sum(y ** 2))
    assert rows[0].e_y < 1e-10 * energy
    assert rows[0].e_x < 1e-10 * energy


def test_output_unit_change_leaves_minimizer_invariant():
    # scaling y, C, D by s multiplies E_y by s^2; keeping the trade-off
    # unchanged requires the weight to absorb s^2 as well, after which
    # the whole cost is scaled by s^2 and the minimizer is untouched
    rng = np.random.default_rng(26)
    model = make_stable_lti(rng, n_x=2)
    record = IoRecord(u=rng.standard_normal((80, 1)),
                      y=rng.standard_normal((80, 1)))
    lam = 0.5
    traj = estimate_state(record, model, lam)
    s = 3.0
    scaled_model = LtiModel(A=model.A, B=model.B, C=s * model.C, D=s * model.D)
    scaled_record = IoRecord(u=record.u, y=s * record.y)
    scaled = estimate_state(scaled_record, scaled_model, s ** 2 * lam)
    assert np.max(np.abs(scaled.x - traj.x)) < 1e-9
    assert scaled.e_y == pytest.approx(s ** 2 * traj.e_y, rel=1e-9)
    assert scaled.e_x == pytest.approx(traj.e_x, rel=1e-9)


def test_gradient_optimality_at_solution():
    rng = np.random.default_rng(27)
    model = make_stable_lti(rng, n_x=3, n_y=2)
    record = IoRecord(u=rng.standard_normal((120, 1)),
                      y=rng.standard_normal((120, 2)))
    lam = 2.0
    traj = estimate_state(record, model, lam)
    # assemble the gradient independently by finite differences
    X = traj.x

    def cost(Xf):
        Xm = Xf.reshape(X.shape)
        e_y = np.sum((record.y - Xm @ model.C.T
                      - record.u @ model.D.T) ** 2)
        e_x = np.sum((Xm[1:] - Xm[:-1] @ model.A.T
                      - record.u[:-1] @ model.B.T) ** 2)
        return e_y + lam * e_x

    base = cost(X.ravel())
    h = 1e-6
    grad = np.zeros(X.size)
    for i in range(0, X.size, 37):        # spot-check a spread of entries
        xp = X.ravel().copy()
        xp[i] += h
        xm = X.ravel().copy()
        xm[i] -= h
        grad[i] = (cost(xp) - cost(xm)) / (2 * h)
    assert np.max(np.abs(grad)) < 1e-5 * (1 + base)


def test_singular_system_without_ridge_raises():
    # C = 0 and N = 2 make the Schur complement exactly zero
    model = LtiModel(A=[[0.5]], B=[[0.0]], C=[[0.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((2, 1)), y=np.ones((2, 1)))
    with pytest.raises(SingularSystemError, match="ridge"):
        estimate_state(record, model, 1.0, ridge=False)


def test_ridge_fallback_recovers_singular_system():
    model = LtiModel(A=[[0.5]], B=[[0.0]], C=[[0.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((2, 1)), y=np.ones((2, 1)))
    traj = estimate_state(record, model, 1.0, ridge="auto")
    assert traj.ridge > 0.0
    assert traj.e_x == pytest.approx(0.0, abs=1e-12)


def test_invalid_lambda_raises():
    model = LtiModel(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((5, 1)), y=np.zeros((5, 1)))
    with pytest.raises(ValueError, match="positive"):
        estimate_state(record, model, 0.0)
    with pytest.raises(ValueError):
        lambda_grid_costs(record, model, [])
    with pytest.raises(ValueError):
        lambda_grid_costs(record, model, [0.1, -1.0])


def test_grid_errors_are_annotated_with_lambda():
    model = LtiModel(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((5, 2)), y=np.zeros((5, 1)))  # wrong n_u
    with pytest.raises(DimensionError, match="lambda=0.25"):
        lambda_grid_costs(record, model, [0.25])


def test_dimension_mismatch_raises():
    model = LtiModel(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
    record = IoRecord(u=np.zeros((5, 1)), y=np.zeros((5, 2)))
    with pytest.raises(DimensionError, match="n_y"):
        estimate_state(record, model, 1.0)
