"""Damped Gauss-Newton (Levenberg-Marquardt) minimizer for least squares.

The convention throughout: ``eval_fn(theta, with_jac)`` returns
``(r, J)`` where ``r = target - prediction`` (1-D) and ``J`` is the
Jacobian of the *prediction* with respect to ``theta`` (or ``None``
when ``with_jac`` is false).  A step solves
``(J'J + mu*I) d = J'r`` and proposes ``theta + d``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergenceError, NonFiniteError


@dataclass
class LmSettings:
    max_iter: int = 500
    cost_tol: float = 1e-10      # relative cost decrease on accepted steps
    step_tol: float = 1e-12      # proposed step norm
    damping_init: float = 1e-3   # scales the mean diagonal of J'J
    damping_up: float = 10.0
    damping_down: float = 10.0
    damping_max: float = 1e12


@dataclass
class TraceEntry:
    iteration: int
    cost: float
    damping: float
    accepted: bool


@dataclass
class LmResult:
    theta: np.ndarray
    cost: float
    status: str                  # converged | max_iter | stalled
    trace: list = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return self.trace[-1].iteration if self.trace else 0


def levenberg_marquardt(eval_fn, theta0, settings=None, *, cost_scale=1.0,
                        nonfinite="reject") -> LmResult:
    """Minimize ``cost_scale * ||r(theta)||^2``.

    Trial steps that diverge or yield a non-finite cost are rejected
    (damping raised) when ``nonfinite="reject"``; with ``"raise"`` they
    abort with :class:`NonFiniteError` carrying the iteration index.
    A divergence on the *initial* point always propagates.
    """
    settings = settings or LmSettings()
    theta = np.asarray(theta0, dtype=float).copy()

    with np.errstate(over="ignore"):   # inf is caught right below
        r, J = eval_fn(theta, True)
        cost = cost_scale * float(r @ r)
    if not np.isfinite(cost):
        raise NonFiniteError("non-finite cost at the initial point", iteration=0)
    trace = [TraceEntry(0, cost, 0.0, True)]

    JtJ = J.T @ J
    g = J.T @ r
    mean_diag = float(np.trace(JtJ)) / max(JtJ.shape[0], 1)
    mu = settings.damping_init * max(mean_diag, 1e-30)
    eye = np.eye(len(theta))

    status = "max_iter"
    for k in range(1, settings.max_iter + 1):
        try:
            with warnings.catch_warnings():
                # An inaccurate step near singularity is handled by the
                # accept/reject logic; don't let scipy warn about it.
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                step = scipy.linalg.solve(JtJ + mu * eye, g, assume_a="pos")
        except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
            step = None
        if step is None or not np.isfinite(step).all():
            trace.append(TraceEntry(k, np.inf, mu, False))
            mu *= settings.damping_up
            if mu > settings.damping_max:
                status = "stalled"
                break
            continue

        if float(np.linalg.norm(step)) < settings.step_tol:
            status = "converged"
            break

        trial = theta + step
        try:
            r_trial = eval_fn(trial, False)[0]
            trial_cost = cost_scale * float(r_trial @ r_trial)
        except DivergenceError:
            if nonfinite == "raise":
                raise NonFiniteError("trial step diverged", iteration=k) from None
            trial_cost = np.inf
        if not np.isfinite(trial_cost) and nonfinite == "raise":
            raise NonFiniteError("non-finite cost on trial step", iteration=k)

        if np.isfinite(trial_cost) and trial_cost < cost:
            rel_decrease = (cost - trial_cost) / max(cost, 1e-300)
            theta = trial
            cost = trial_cost
            trace.append(TraceEntry(k, cost, mu, True))
            mu /= settings.damping_down
            if rel_decrease < settings.cost_tol:
                status = "converged"
                break
            r, J = eval_fn(theta, True)
            if not np.isfinite(J).all():
                raise NonFiniteError("non-finite Jacobian at accepted point",
                                     iteration=k)
            JtJ = J.T @ J
            g = J.T @ r
        else:
            trace.append(TraceEntry(k, trial_cost, mu, False))
            mu *= settings.damping_up
            if mu > settings.damping_max:
                status = "stalled"
                break

    return LmResult(theta=theta, cost=cost, status=status, trace=trace)
