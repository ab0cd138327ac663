"""Shared helpers and fixtures for the test suite."""

import numpy as np
import pytest

from nlssid.lti import LtiModel


def make_stable_lti(rng, n_x, n_u=1, n_y=1, radius=0.9):
    """Random LtiModel with spectral radius scaled to at most `radius`."""
    A = rng.standard_normal((n_x, n_x))
    rho = max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    A *= radius * rng.uniform(0.3, 1.0) / rho
    B = rng.standard_normal((n_x, n_u))
    C = rng.standard_normal((n_y, n_x))
    D = rng.standard_normal((n_y, n_u))
    return LtiModel(A=A, B=B, C=C, D=D)


@pytest.fixture(scope="session")
def wh_small():
    """A small synthetic dataset shared by tests that just need real-ish
    nonlinear data (not the acceptance-scale default)."""
    from nlssid.bench import WhConfig, generate_wh
    cfg = WhConfig(N_est=800, N_val=1200, seed=11)
    est, val, truth = generate_wh(cfg)
    return est, val, truth


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-report lines, which output capture would
    otherwise hide unless a criterion fails."""
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)
