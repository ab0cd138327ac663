"""One-hidden-layer tanh basis expansion and static regression fitting.

A net maps xi -> W_amp @ tanh(W_pos @ xi + b_pos).  There is no output
bias: a constant offset would be redundant next to the linear model path
the net runs in parallel with.  Rows of W_pos and entries of b_pos are
"positions" (where neurons are active), W_amp holds the "amplitudes".
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (DataError, DegenerateDataError, DimensionError)
from .lm import LmSettings, levenberg_marquardt


@dataclass
class TanhNet:
    W_pos: np.ndarray    # (n_hidden, n_in)
    b_pos: np.ndarray    # (n_hidden,)
    W_amp: np.ndarray    # (n_out, n_hidden)

    def __post_init__(self):
        self.W_pos = np.atleast_2d(np.asarray(self.W_pos, dtype=float))
        self.b_pos = np.asarray(self.b_pos, dtype=float).ravel()
        self.W_amp = np.atleast_2d(np.asarray(self.W_amp, dtype=float))
        n_hidden = self.W_pos.shape[0]
        if self.b_pos.shape[0] != n_hidden:
            raise DimensionError(
                f"b_pos has length {self.b_pos.shape[0]}, expected "
                f"n_hidden={n_hidden}")
        if self.W_amp.shape[1] != n_hidden:
            raise DimensionError(
                f"W_amp has {self.W_amp.shape[1]} columns, expected "
                f"n_hidden={n_hidden}")

    @property
    def n_in(self) -> int:
        return self.W_pos.shape[1]

    @property
    def n_out(self) -> int:
        return self.W_amp.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W_pos.shape[0]

    @property
    def n_params(self) -> int:
        return self.W_pos.size + self.b_pos.size + self.W_amp.size

    def to_dict(self) -> dict:
        return {"n_in": self.n_in, "n_out": self.n_out,
                "n_hidden": self.n_hidden,
                "W_pos": self.W_pos.tolist(), "b_pos": self.b_pos.tolist(),
                "W_amp": self.W_amp.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TanhNet":
        n_in, n_out, n_h = int(d["n_in"]), int(d["n_out"]), int(d["n_hidden"])
        W_pos = np.array(d["W_pos"], dtype=float).reshape(n_h, n_in)
        b_pos = np.array(d["b_pos"], dtype=float).reshape(n_h)
        W_amp = np.array(d["W_amp"], dtype=float).reshape(n_out, n_h)
        return cls(W_pos, b_pos, W_amp)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "TanhNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def zero_net(n_in: int, n_out: int) -> TanhNet:
    """The width-0 net; evaluates to the zero vector everywhere."""
    return TanhNet(np.zeros((0, n_in)), np.zeros(0), np.zeros((n_out, 0)))


@dataclass
class StaticDataset:
    xi: np.ndarray   # (M, n_in)
    z: np.ndarray    # (M, n_out)

    def __post_init__(self):
        self.xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        if self.xi.shape[0] != self.z.shape[0]:
            raise DimensionError(
                f"regressors have {self.xi.shape[0]} rows, targets "
                f"{self.z.shape[0]}")
        if not np.isfinite(self.xi).all() or not np.isfinite(self.z).all():
            raise DataError("static dataset contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.xi.shape[0]

    @property
    def n_in(self) -> int:
        return self.xi.shape[1]

    @property
    def n_out(self) -> int:
        return self.z.shape[1]


def eval_net(net: TanhNet, xi, *, jac: bool = False):
    """Evaluate the net at one point or a batch.

    Single vector xi (n_in,): returns out (n_out,), or with ``jac=True``
    the triple (out, d out/d xi, d out/d params) where the parameter
    Jacobian columns follow [vec(W_pos) row-major, b_pos, vec(W_amp)].
    A 2-D xi (M, n_in) evaluates the batch (no Jacobians).
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    X = xi.reshape(1, -1) if single else xi
    if X.shape[1] != net.n_in:
        raise DimensionError(
            f"xi has {X.shape[1]} entries, net expects n_in={net.n_in}")
    H = np.tanh(X @ net.W_pos.T + net.b_pos)        # (M, n_h)
    out = H @ net.W_amp.T                           # (M, n_out)
    if not jac:
        return out[0] if single else out
    if not single:
        raise DimensionError("Jacobians are returned for a single xi only")
    h = H[0]
    s = 1.0 - h * h                                  # tanh'
    J_xi = net.W_amp @ (s[:, None] * net.W_pos)      # (n_out, n_in)
    n_h, n_in, n_out = net.n_hidden, net.n_in, net.n_out
    J_par = np.zeros((n_out, net.n_params))
    ws = net.W_amp * s                               # (n_out, n_h)
    # d out/d W_pos[m, j] = W_amp[:, m] * s_m * xi_j
    J_par[:, :n_h * n_in] = (ws[:, :, None] * X[0][None, None, :]).reshape(
        n_out, n_h * n_in)
    J_par[:, n_h * n_in:n_h * n_in + n_h] = ws
    off = n_h * (n_in + 1)
    for o in range(n_out):
        J_par[o, off + o * n_h:off + (o + 1) * n_h] = h
    return out[0], J_xi, J_par


def init_positions(n_in: int, n_hidden: int, xi_sample, seed: int):
    """Draw neuron positions whose active regions cover the sample box.

    Rows of W_pos are uniform in [-1, 1] per dimension, scaled by the
    reciprocal per-dimension half-range of the sample; offsets place each
    neuron's zero crossing inside the sample bounding box.  Deterministic
    given the seed.
    """
    xi_sample = np.atleast_2d(np.asarray(xi_sample, dtype=float))
    if xi_sample.size == 0:
        raise DataError("empty regressor sample")
    if xi_sample.shape[1] != n_in:
        raise DimensionError(
            f"sample has {xi_sample.shape[1]} columns, expected n_in={n_in}")
    lo = xi_sample.min(axis=0)
    hi = xi_sample.max(axis=0)
    half = (hi - lo) / 2.0
    if np.all(half == 0.0):
        raise DegenerateDataError(
            "all regressor dimensions have zero variance")
    center = (hi + lo) / 2.0
    scale = np.where(half > 0.0, half, 1.0)

    rng = np.random.default_rng(seed)
    W_raw = rng.uniform(-1.0, 1.0, size=(n_hidden, n_in))
    W_pos = W_raw / scale
    # activation argument over the box spans +-r around the center value;
    # put the zero crossing at a uniform point within that span
    r = np.abs(W_raw).sum(axis=1)
    delta = rng.uniform(-1.0, 1.0, size=n_hidden) * r
    b_pos = -(W_pos @ center) + delta
    return W_pos, b_pos


def _pack_net(net: TanhNet) -> np.ndarray:
    return np.concatenate([net.W_pos.ravel(), net.b_pos, net.W_amp.ravel()])


def _unpack_net(theta, n_in, n_out, n_h) -> TanhNet:
    i = n_h * n_in
    W_pos = theta[:i].reshape(n_h, n_in)
    b_pos = theta[i:i + n_h]
    W_amp = theta[i + n_h:i + n_h + n_out * n_h].reshape(n_out, n_h)
    return TanhNet(W_pos, b_pos, W_amp)


def _batch_param_jacobian(net: TanhNet, X):
    """Stacked parameter Jacobian of the batch prediction, (M*n_out, n_params)."""
    M = X.shape[0]
    n_h, n_in, n_out = net.n_hidden, net.n_in, net.n_out
    H = np.tanh(X @ net.W_pos.T + net.b_pos)         # (M, n_h)
    S = 1.0 - H * H
    J = np.zeros((M, n_out, net.n_params))
    # W_pos block: W_amp[o, m] * S[t, m] * X[t, j]
    WS = S[:, None, :] * net.W_amp[None, :, :]       # (M, n_out, n_h)
    J[:, :, :n_h * n_in] = (WS[:, :, :, None] * X[:, None, None, :]).reshape(
        M, n_out, n_h * n_in)
    J[:, :, n_h * n_in:n_h * (n_in + 1)] = WS
    off = n_h * (n_in + 1)
    for o in range(n_out):
        J[:, o, off + o * n_h:off + (o + 1) * n_h] = H
    return H @ net.W_amp.T, J.reshape(M * n_out, net.n_params)


def fit_static(data: StaticDataset, n_hidden: int, seed: int,
               max_iter: int = 200):
    """Fit a TanhNet to the static dataset; returns (net, training RMSE).

    Positions come from init_positions; amplitudes are first solved by
    linear least squares with positions frozen, then everything is
    polished by Levenberg-Marquardt.  n_hidden=0 returns the zero net.
    """
    M, n_in, n_out = data.n_samples, data.n_in, data.n_out
    with np.errstate(over="ignore"):   # inf propagates to the LM guard
        z_rms = float(np.sqrt(np.mean(np.sum(data.z ** 2, axis=1))))
    if n_hidden == 0:
        return zero_net(n_in, n_out), z_rms
    n_params = n_hidden * (n_in + 1 + n_out)
    if M <= n_params:
        raise DataError(
            f"need more samples than net parameters: M={M} <= {n_params}")

    W_pos, b_pos = init_positions(n_in, n_hidden, data.xi, seed)
    H = np.tanh(data.xi @ W_pos.T + b_pos)
    W_amp = np.linalg.lstsq(H, data.z, rcond=None)[0].T
    net = TanhNet(W_pos, b_pos, W_amp)

    if max_iter > 0:
        def eval_fn(theta, with_jac):
            trial = _unpack_net(theta, n_in, n_out, n_hidden)
            if with_jac:
                pred, J = _batch_param_jacobian(trial, data.xi)
            else:
                pred, J = eval_net(trial, data.xi), None
            return (data.z - pred).ravel(), J

        settings = LmSettings(max_iter=max_iter, cost_tol=1e-9)
        result = levenberg_marquardt(eval_fn, _pack_net(net), settings,
                                     nonfinite="raise")
        net = _unpack_net(result.theta, n_in, n_out, n_hidden)

    resid = data.z - eval_net(net, data.xi)
    return net, float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
