"""Scikit-learn style wrapper around the identification pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .lm import LmSettings
from .lti import estimate_bla, rmse
from .nlss import assemble_initialized, optimize_nlss, simulate_nlss
from .records import IoRecord
from .state_estimator import estimate_state


class NlssIdentifier(BaseEstimator, RegressorMixin):
    """Identify a nonlinear state-space model from one input/output record.

    Runs the three-stage procedure: a linear state-space fit, a state
    trajectory estimate under the state-fit weight ``lam``, and static
    fits of both tanh networks — then (optionally) refines all parameters
    jointly on the simulation error.

    Parameters
    ----------
    n_x : int
        Model order (state dimension).
    n_f, n_g : int
        Hidden neurons in the state-update and output nonlinearities.
    lam : float
        State-equation weight used during state estimation.
    seed : int
        Seed for neuron placement.
    max_iter : int
        Joint refinement iteration budget (0 skips refinement).
    static_max_iter : int
        Per-network iteration budget for the static fits.
    fir_taps : int or None
        Impulse-response length used by the linear fit; None picks a
        default from the data length.
    sample_period : float
        Sample period attached to the internal records.

    Attributes
    ----------
    model_ : NlssModel
        The identified model.
    linear_model_ : LtiModel
        The underlying linear fit.
    rmse_ : float
        Simulation RMSE of ``model_`` on the training record.
    n_iter_ : int
        Refinement iterations actually run.
    """

    def __init__(self, n_x=2, n_f=3, n_g=3, lam=0.1, seed=0, max_iter=100,
                 static_max_iter=200, fir_taps=None, sample_period=1.0):
        self.n_x = n_x
        self.n_f = n_f
        self.n_g = n_g
        self.lam = lam
        self.seed = seed
        self.max_iter = max_iter
        self.static_max_iter = static_max_iter
        self.fir_taps = fir_taps
        self.sample_period = sample_period

    def fit(self, X, y):
        """Fit on an input sequence X of shape (N,) or (N, n_u)."""
        record = IoRecord(np.asarray(X, dtype=float),
                          np.asarray(y, dtype=float),
                          sample_period=self.sample_period)
        self._y_ndim = np.asarray(y).ndim
        bla = estimate_bla(record, self.n_x, fir_taps=self.fir_taps)
        traj = estimate_state(record, bla, self.lam)
        model = assemble_initialized(bla, traj, record, self.n_f, self.n_g,
                                     self.seed,
                                     static_max_iter=self.static_max_iter)
        self.linear_model_ = bla
        if self.max_iter > 0:
            result = optimize_nlss(model, record,
                                   LmSettings(max_iter=self.max_iter))
            self.model_ = result.model
            self.n_iter_ = result.n_iter
            self.status_ = result.status
        else:
            self.model_ = model
            self.n_iter_ = 0
            self.status_ = "init_only"
        y_hat, _ = simulate_nlss(self.model_, record.u)
        self.rmse_ = rmse(y_hat, record.y)
        return self

    def predict(self, X):
        """Simulate the fitted model over a fresh input sequence."""
        if not hasattr(self, "model_"):
            raise AttributeError("fit must be called before predict")
        u = np.asarray(X, dtype=float)
        y_hat, _ = simulate_nlss(self.model_, u)
        if self._y_ndim == 1 and y_hat.shape[1] == 1:
            return y_hat[:, 0]
        return y_hat
