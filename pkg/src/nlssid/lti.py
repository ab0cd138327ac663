"""Discrete-time linear state-space models and linear-approximation fitting.

The estimator here is time-domain: a long FIR fit by least squares gives
impulse-response (Markov) parameters, a Ho-Kalman/ERA step realizes a
state-space model of the requested order from their block-Hankel matrix,
and a short damped Gauss-Newton pass on the simulation error polishes
(A, B, C, D) together with the initial state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (DataError, DimensionError, DivergenceError,
                     IllConditionedError, UnstableModelError)
from .lm import LmSettings, levenberg_marquardt
from .records import IoRecord


def _as_matrix(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    return arr


@dataclass
class LtiModel:
    """State-space quadruple x(t+1) = A x(t) + B u(t), y(t) = C x(t) + D u(t)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.A = _as_matrix(self.A, "A")
        self.B = _as_matrix(self.B, "B")
        self.C = _as_matrix(self.C, "C")
        self.D = _as_matrix(self.D, "D")
        n_x = self.A.shape[0]
        if self.A.shape[1] != n_x:
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n_x:
            raise DimensionError(
                f"B has {self.B.shape[0]} rows, expected n_x={n_x}")
        if self.C.shape[1] != n_x:
            raise DimensionError(
                f"C has {self.C.shape[1]} columns, expected n_x={n_x}")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise DimensionError(
                f"D has shape {self.D.shape}, expected "
                f"({self.C.shape[0]}, {self.B.shape[1]})")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_u": self.n_u,
            "n_y": self.n_y,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LtiModel":
        model = cls(np.array(d["A"], dtype=float), np.array(d["B"], dtype=float),
                    np.array(d["C"], dtype=float), np.array(d["D"], dtype=float))
        for key in ("n_x", "n_u", "n_y"):
            if key in d and int(d[key]) != getattr(model, key):
                raise DimensionError(
                    f"declared {key}={d[key]} does not match matrix shapes")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "LtiModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _empty_nets(n_x, n_u, n_y):
    n_in = n_x + n_u
    return (np.zeros((0, n_in)), np.zeros(0), np.zeros((n_x, 0)),
            np.zeros((0, n_in)), np.zeros(0), np.zeros((n_y, 0)))


def _input_scale(u) -> float:
    return max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)


def simulate_lti(model: LtiModel, u, x0=None):
    """Run the linear recursion; returns (y, x), each of length N.

    x0 defaults to the zero state.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if u.shape[1] != model.n_u:
        raise DimensionError(
            f"input has {u.shape[1]} channels, model expects n_u={model.n_u}")
    if x0 is None:
        x0 = np.zeros(model.n_x)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape[0] != model.n_x:
        raise DimensionError(
            f"x0 has length {x0.shape[0]}, expected n_x={model.n_x}")
    nets = _empty_nets(model.n_x, model.n_u, model.n_y)
    y, x, diverged = _kernels.simulate_kernel(
        model.A, model.B, model.C, model.D, *nets, x0, u,
        1e6 * _input_scale(u))
    if diverged >= 0:
        raise DivergenceError(
            f"state norm exceeded the divergence bound at step {diverged}",
            step=diverged)
    return y, x


def rmse(y_hat, y) -> float:
    """sqrt( (1/N) sum_t ||y(t) - y_hat(t)||^2 )."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.ndim == 1:
        y_hat = y_hat.reshape(-1, 1)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y_hat.shape != y.shape:
        raise DimensionError(
            f"sequence shapes differ: {y_hat.shape} vs {y.shape}")
    diff = y - y_hat
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def markov_parameters(model: LtiModel, count: int) -> np.ndarray:
    """First `count` impulse-response matrices D, CB, CAB, CA^2 B, ..."""
    out = np.zeros((count, model.n_y, model.n_u))
    if count == 0:
        return out
    out[0] = model.D
    P = model.B.copy()
    for k in range(1, count):
        out[k] = model.C @ P
        P = model.A @ P
    return out


def _project_stable(A: np.ndarray, radius: float = 0.999) -> np.ndarray:
    """Pull eigenvalues with modulus >= radius radially onto that circle."""
    w, V = np.linalg.eig(A)
    mags = np.abs(w)
    if np.all(mags < radius):
        return A.copy()
    scale = np.where(mags >= radius, radius / np.maximum(mags, 1e-300), 1.0)
    try:
        A_new = np.real(V @ np.diag(w * scale) @ np.linalg.inv(V))
    except np.linalg.LinAlgError:
        # defective eigenbasis: fall back to uniform radial shrink
        A_new = A * (radius / mags.max())
    # guard against residual round-off pushing back over the circle
    rho = np.max(np.abs(np.linalg.eigvals(A_new)))
    if rho >= 1.0:
        A_new = A_new * (radius / rho)
    return A_new


def _pack_lin(A, B, C, D, x0):
    return np.concatenate([A.ravel(), B.ravel(), C.ravel(), D.ravel(), x0])


def _unpack_lin(theta, n_x, n_u, n_y):
    i = 0
    A = theta[i:i + n_x * n_x].reshape(n_x, n_x); i += n_x * n_x
    B = theta[i:i + n_x * n_u].reshape(n_x, n_u); i += n_x * n_u
    C = theta[i:i + n_y * n_x].reshape(n_y, n_x); i += n_y * n_x
    D = theta[i:i + n_y * n_u].reshape(n_y, n_u); i += n_y * n_u
    x0 = theta[i:i + n_x]
    return A, B, C, D, x0


def _refine_lin(A, B, C, D, x0, u, y, max_iter):
    """Damped Gauss-Newton on simulation error over (A, B, C, D, x0).

    Trial steps that leave the stable set (spectral radius >= 1) are
    rejected like diverging ones, so the refined model stays stable.
    """
    n_x, n_u, n_y = A.shape[0], B.shape[1], C.shape[0]
    nets = _empty_nets(n_x, n_u, n_y)
    bound = 1e6 * _input_scale(u)

    def eval_fn(theta, with_jac):
        Ai, Bi, Ci, Di, x0i = _unpack_lin(theta, n_x, n_u, n_y)
        if np.max(np.abs(np.linalg.eigvals(Ai))) >= 1.0:
            raise DivergenceError("trial model left the stable set")
        if with_jac:
            y_hat, J, diverged = _kernels.jacobian_kernel(
                Ai, Bi, Ci, Di, *nets, x0i.copy(), u, bound)
        else:
            y_hat, _, diverged = _kernels.simulate_kernel(
                Ai, Bi, Ci, Di, *nets, x0i.copy(), u, bound)
            J = None
        if diverged >= 0:
            raise DivergenceError(
                f"trial model diverged at step {diverged}", step=diverged)
        return (y - y_hat).ravel(), J

    settings = LmSettings(max_iter=max_iter, cost_tol=1e-12)
    result = levenberg_marquardt(eval_fn, _pack_lin(A, B, C, D, x0), settings)
    return _unpack_lin(result.theta, n_x, n_u, n_y)


def estimate_bla(record: IoRecord, n_x: int, *, fir_taps=None,
                 refine_max_iter: int = 60, cond_limit: float = 1e12,
                 return_info: bool = False):
    """Fit the best linear approximation of order n_x to an I/O record.

    Returns the stable LtiModel, or ``(model, info)`` with fitting
    diagnostics (estimation RMSE, FIR condition number, fitted initial
    state) when ``return_info`` is set.
    """
    if n_x < 1:
        raise DimensionError(f"model order must be >= 1, got {n_x}")
    N = record.n_samples
    if N < 20 * n_x:
        raise DataError(
            f"record too short: N={N} < 20*n_x={20 * n_x} samples")
    n_u, n_y = record.n_u, record.n_y
    u, y = record.u, record.y

    L = fir_taps if fir_taps is not None else min(80 * n_x, N // 4)
    L = int(max(L, 2 * n_x + 2, 7))
    if L > N // 2:
        L = max(N // 2, 2 * n_x + 2)

    # stage 1: high-order FIR by least squares.  Bandlimited inputs leave
    # the out-of-band tap directions unidentified, so a Tikhonov term is
    # added, sized by a discrepancy rule: the largest ridge weight that
    # costs at most 2% extra prediction residual.
    rows = N - L + 1
    Phi = np.empty((rows, L * n_u))
    for k in range(L):
        Phi[:, k * n_u:(k + 1) * n_u] = u[L - 1 - k:N - k, :]
    target = y[L - 1:, :]
    Us, sv, Vt = np.linalg.svd(Phi, full_matrices=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if cond > cond_limit:
        raise IllConditionedError(
            f"FIR regression condition number {cond:.3e} exceeds "
            f"{cond_limit:.1e}; try a lower model order or more data")
    beta = Us.T @ target
    perp2 = max(float(np.sum(target * target) - np.sum(beta * beta)), 0.0)

    def _ridge_resid(alpha):
        w = (alpha / (sv ** 2 + alpha))[:, None]
        return np.sqrt(perp2 + float(np.sum((w * beta) ** 2)))

    thresh = max(1.02 * _ridge_resid(0.0),
                 1e-12 * float(np.linalg.norm(target)))
    alpha = 0.0
    for a in sv[0] ** 2 * np.geomspace(1e-16, 1.0, 61):
        if _ridge_resid(a) <= thresh:
            alpha = a
    h = Vt.T @ ((sv / (sv ** 2 + alpha))[:, None] * beta)
    markov = np.stack([h[k * n_u:(k + 1) * n_u, :].T for k in range(L)])

    # stage 2: Ho-Kalman realization from the block-Hankel of M_1..M_{L-1}
    p = q = (L - 1) // 2
    H = np.empty((p * n_y, q * n_u))
    for i in range(p):
        for j in range(q):
            H[i * n_y:(i + 1) * n_y, j * n_u:(j + 1) * n_u] = markov[i + j + 1]
    U_, s, Vt = np.linalg.svd(H, full_matrices=False)
    sq = np.sqrt(s[:n_x])
    Gam = U_[:, :n_x] * sq
    Om = (Vt[:n_x, :].T * sq).T
    C = Gam[:n_y, :].copy()
    B = Om[:, :n_u].copy()
    A = np.linalg.lstsq(Gam[:-n_y], Gam[n_y:], rcond=None)[0]
    D = markov[0].copy()

    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        A = _project_stable(A)

    # stage 3: Gauss-Newton refinement on simulation error, x0 included
    x0 = np.zeros(n_x)
    A, B, C, D, x0 = _refine_lin(A, B, C, D, x0, u, y, refine_max_iter)
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        A = _project_stable(A)
        A, B, C, D, x0 = _refine_lin(A, B, C, D, x0, u, y, refine_max_iter)
        if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
            raise UnstableModelError(
                "realization remains unstable after eigenvalue projection "
                "and refinement")

    model = LtiModel(A, B, C, D)
    if not return_info:
        return model
    y_hat, _ = simulate_lti(model, u, x0)
    info = {"est_rmse": rmse(y_hat, y), "fir_cond": cond,
            "fir_taps": L, "x0": x0.copy()}
    return model, info
