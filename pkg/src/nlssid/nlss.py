"""Nonlinear state-space model: linear core with two parallel tanh nets.

    x(t+1) = A x(t) + B u(t) + f_nl([x(t); u(t)])
    y(t)   = C x(t) + D u(t) + g_nl([x(t); u(t)])

Everything the optimizer touches lives in one flat parameter vector
theta, packed in a fixed documented order (see pack_theta).  The
Jacobian of the simulated output with respect to theta comes from the
exact forward sensitivity recursion, compiled in ``_kernels``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (DataFormatError, DimensionError, DivergenceError,
                     IdentificationError)
from .lm import LmSettings, levenberg_marquardt
from .lti import LtiModel, _input_scale
from .nonlin import StaticDataset, TanhNet, fit_static
from .records import IoRecord
from .state_estimator import StateTrajectory

FORMAT_VERSION = 1


@dataclass
class NlssModel:
    lin: LtiModel
    f_nl: TanhNet     # n_in = n_x + n_u, n_out = n_x
    g_nl: TanhNet     # n_in = n_x + n_u, n_out = n_y
    x0: np.ndarray    # (n_x,)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        n_in = self.lin.n_x + self.lin.n_u
        if self.f_nl.n_in != n_in:
            raise DimensionError(
                f"f_nl expects n_in={self.f_nl.n_in}, model needs {n_in}")
        if self.g_nl.n_in != n_in:
            raise DimensionError(
                f"g_nl expects n_in={self.g_nl.n_in}, model needs {n_in}")
        if self.f_nl.n_out != self.lin.n_x:
            raise DimensionError(
                f"f_nl outputs {self.f_nl.n_out} values, expected "
                f"n_x={self.lin.n_x}")
        if self.g_nl.n_out != self.lin.n_y:
            raise DimensionError(
                f"g_nl outputs {self.g_nl.n_out} values, expected "
                f"n_y={self.lin.n_y}")
        if self.x0.shape[0] != self.lin.n_x:
            raise DimensionError(
                f"x0 has length {self.x0.shape[0]}, expected "
                f"n_x={self.lin.n_x}")

    @property
    def n_x(self) -> int:
        return self.lin.n_x

    @property
    def n_u(self) -> int:
        return self.lin.n_u

    @property
    def n_y(self) -> int:
        return self.lin.n_y

    @property
    def dims(self):
        return (self.lin.n_x, self.lin.n_u, self.lin.n_y,
                self.f_nl.n_hidden, self.g_nl.n_hidden)

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION,
                "lin": self.lin.to_dict(),
                "f_nl": self.f_nl.to_dict(),
                "g_nl": self.g_nl.to_dict(),
                "x0": self.x0.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NlssModel":
        version = d.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise DataFormatError(
                f"unsupported model format_version {version}")
        return cls(lin=LtiModel.from_dict(d["lin"]),
                   f_nl=TanhNet.from_dict(d["f_nl"]),
                   g_nl=TanhNet.from_dict(d["g_nl"]),
                   x0=np.array(d["x0"], dtype=float))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "NlssModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def theta_length(dims) -> int:
    n_x, n_u, n_y, n_f, n_g = dims
    n_in = n_x + n_u
    return (n_x * n_x + n_x * n_u + n_y * n_x + n_y * n_u
            + n_f * (n_in + 1) + n_x * n_f
            + n_g * (n_in + 1) + n_y * n_g
            + n_x)


def theta_slices(dims) -> dict:
    """Index ranges of each parameter block within the packed vector."""
    n_x, n_u, n_y, n_f, n_g = dims
    n_in = n_x + n_u
    sizes = [("A", n_x * n_x), ("B", n_x * n_u), ("C", n_y * n_x),
             ("D", n_y * n_u),
             ("f_W_pos", n_f * n_in), ("f_b_pos", n_f), ("f_W_amp", n_x * n_f),
             ("g_W_pos", n_g * n_in), ("g_b_pos", n_g), ("g_W_amp", n_y * n_g),
             ("x0", n_x)]
    out, start = {}, 0
    for name, size in sizes:
        out[name] = slice(start, start + size)
        start += size
    return out


def pack_theta(model: NlssModel) -> np.ndarray:
    """Flatten to [vec(A), vec(B), vec(C), vec(D), f params, g params, x0].

    Matrices are row-major; each net contributes vec(W_pos), b_pos,
    vec(W_amp) in that order.
    """
    lin, f, g = model.lin, model.f_nl, model.g_nl
    return np.concatenate([
        lin.A.ravel(), lin.B.ravel(), lin.C.ravel(), lin.D.ravel(),
        f.W_pos.ravel(), f.b_pos, f.W_amp.ravel(),
        g.W_pos.ravel(), g.b_pos, g.W_amp.ravel(),
        model.x0])


def unpack_theta(theta, dims) -> NlssModel:
    theta = np.asarray(theta, dtype=float).ravel()
    expected = theta_length(dims)
    if theta.shape[0] != expected:
        raise DimensionError(
            f"theta has length {theta.shape[0]}, dims {tuple(dims)} "
            f"require {expected}")
    n_x, n_u, n_y, n_f, n_g = dims
    n_in = n_x + n_u
    sl = theta_slices(dims)
    lin = LtiModel(theta[sl["A"]].reshape(n_x, n_x),
                   theta[sl["B"]].reshape(n_x, n_u),
                   theta[sl["C"]].reshape(n_y, n_x),
                   theta[sl["D"]].reshape(n_y, n_u))
    f_nl = TanhNet(theta[sl["f_W_pos"]].reshape(n_f, n_in),
                   theta[sl["f_b_pos"]],
                   theta[sl["f_W_amp"]].reshape(n_x, n_f))
    g_nl = TanhNet(theta[sl["g_W_pos"]].reshape(n_g, n_in),
                   theta[sl["g_b_pos"]],
                   theta[sl["g_W_amp"]].reshape(n_y, n_g))
    return NlssModel(lin=lin, f_nl=f_nl, g_nl=g_nl, x0=theta[sl["x0"]].copy())


def _check_input(model, u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if u.shape[1] != model.n_u:
        raise DimensionError(
            f"input has {u.shape[1]} channels, model expects "
            f"n_u={model.n_u}")
    return u


def _kernel_args(model: NlssModel):
    lin, f, g = model.lin, model.f_nl, model.g_nl
    return (lin.A, lin.B, lin.C, lin.D,
            f.W_pos, f.b_pos, f.W_amp,
            g.W_pos, g.b_pos, g.W_amp,
            model.x0.copy())


def simulate_nlss(model: NlssModel, u):
    """Run the nonlinear recursion; returns (y, x) of length N each.

    Aborts with a divergence error naming the step once any state entry
    passes 1e6 x the input scale.
    """
    u = _check_input(model, u)
    y, x, diverged = _kernels.simulate_kernel(
        *_kernel_args(model), u, 1e6 * _input_scale(u))
    if diverged >= 0:
        raise DivergenceError(
            f"state norm exceeded the divergence bound at step {diverged}",
            step=diverged)
    return y, x


def simulation_jacobian(model: NlssModel, u):
    """Simulated output plus d y / d theta from the sensitivity recursion.

    Returns (y, J) with J of shape (N * n_y, len(theta)), rows grouped
    by time step.
    """
    u = _check_input(model, u)
    y, J, diverged = _kernels.jacobian_kernel(
        *_kernel_args(model), u, 1e6 * _input_scale(u))
    if diverged >= 0:
        raise DivergenceError(
            f"state norm exceeded the divergence bound at step {diverged}",
            step=diverged)
    return y, J


def static_datasets(lin: LtiModel, traj: StateTrajectory, record: IoRecord):
    """The two regression problems left over once the state is known.

    f targets: x(t+1) - A x(t) - B u(t) over t = 1..N-1;
    g targets: y(t) - C x(t) - D u(t) over t = 1..N;
    both with regressors [x(t); u(t)].
    """
    X = traj.x
    if X.shape[0] != record.n_samples:
        raise DimensionError(
            f"trajectory length {X.shape[0]} does not match record "
            f"length {record.n_samples}")
    if X.shape[1] != lin.n_x:
        raise DimensionError(
            f"trajectory has {X.shape[1]} state channels, model has "
            f"n_x={lin.n_x}")
    U, Y = record.u, record.y
    Xi = np.hstack([X, U])
    f_targets = X[1:] - X[:-1] @ lin.A.T - U[:-1] @ lin.B.T
    g_targets = Y - X @ lin.C.T - U @ lin.D.T
    return (StaticDataset(Xi[:-1], f_targets), StaticDataset(Xi, g_targets))


def assemble_initialized(lin: LtiModel, traj: StateTrajectory,
                         record: IoRecord, n_f: int, n_g: int, seed: int,
                         *, static_max_iter: int = 200) -> NlssModel:
    """Build the initialized NLSS model from BLA + state trajectory.

    Fits the two static nets independently (seeded deterministically from
    `seed`), and takes x0 from the first trajectory sample.
    """
    f_data, g_data = static_datasets(lin, traj, record)
    seed_f, seed_g = (int(s) for s in
                      np.random.SeedSequence(seed).generate_state(2))
    try:
        f_net, _ = fit_static(f_data, n_f, seed_f, max_iter=static_max_iter)
    except IdentificationError as err:
        raise type(err)(f"state-update nonlinearity fit failed: {err}") \
            from err
    try:
        g_net, _ = fit_static(g_data, n_g, seed_g, max_iter=static_max_iter)
    except IdentificationError as err:
        raise type(err)(f"output nonlinearity fit failed: {err}") from err
    return NlssModel(lin=lin, f_nl=f_net, g_nl=g_net, x0=traj.x[0].copy())


@dataclass
class OptimizeResult:
    model: NlssModel
    trace: list = field(default_factory=list)
    status: str = "max_iter"        # converged | max_iter | stalled
    cost: float = np.inf            # (1/N) sum ||y - y_hat||^2

    @property
    def n_iter(self) -> int:
        return self.trace[-1].iteration if self.trace else 0


def optimize_nlss(model: NlssModel, record: IoRecord,
                  settings: LmSettings | None = None,
                  *, free_mask=None) -> OptimizeResult:
    """Joint Levenberg-Marquardt refinement of all packed parameters.

    Minimizes (1/N) sum_t ||y(t) - y_hat(t)||^2.  Trial steps that
    diverge or raise the cost are rejected (damping x10) without
    touching the iterate; damping beyond 1e12 ends with status
    "stalled".  ``free_mask`` (boolean, len(theta)) restricts the
    update to a parameter subset.
    """
    if model.n_u != record.n_u or model.n_y != record.n_y:
        raise DimensionError(
            f"model ({model.n_u} in/{model.n_y} out) does not match record "
            f"({record.n_u} in/{record.n_y} out)")
    settings = settings or LmSettings()
    dims = model.dims
    base = pack_theta(model)
    if free_mask is None:
        mask = np.ones(base.shape[0], dtype=bool)
    else:
        mask = np.asarray(free_mask, dtype=bool).ravel()
        if mask.shape[0] != base.shape[0]:
            raise DimensionError(
                f"free_mask has length {mask.shape[0]}, theta has "
                f"{base.shape[0]}")
    u, y = record.u, record.y
    bound = 1e6 * _input_scale(u)
    n = record.n_samples

    def eval_fn(theta_red, with_jac):
        theta = base.copy()
        theta[mask] = theta_red
        trial = unpack_theta(theta, dims)
        if with_jac:
            y_hat, J, diverged = _kernels.jacobian_kernel(
                *_kernel_args(trial), u, bound)
        else:
            y_hat, _, diverged = _kernels.simulate_kernel(
                *_kernel_args(trial), u, bound)
            J = None
        if diverged >= 0:
            raise DivergenceError(
                f"trial model diverged at step {diverged}", step=diverged)
        r = (y - y_hat).ravel()
        return r, (J[:, mask] if with_jac else None)

    result = levenberg_marquardt(eval_fn, base[mask], settings,
                                 cost_scale=1.0 / n, nonfinite="reject")
    theta = base.copy()
    theta[mask] = result.theta
    return OptimizeResult(model=unpack_theta(theta, dims),
                          trace=result.trace, status=result.status,
                          cost=result.cost)


def save_trace_csv(trace, path) -> None:
    """Write a cost trace as CSV with columns iter,cost,damping,accepted."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "cost", "damping", "accepted"])
        for entry in trace:
            writer.writerow([entry.iteration, repr(float(entry.cost)),
                             repr(float(entry.damping)),
                             "1" if entry.accepted else "0"])
