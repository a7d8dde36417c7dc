"""Shared fixtures.

Every penalized fit made anywhere in the suite goes through a wrapper that
checks two invariants on the spot: the objective never increases between
sweeps, and a converged group fit has one support shared by all subjects.
A violation fails whichever test triggered the fit.
"""
import threading

import numpy as np
import pytest

from covsel import solvers

FITS = []
_lock = threading.Lock()


def _recording_solve(original):
    def solve(covs, cfg, mode, precisions_init=None, backend=None):
        fit = original(covs, cfg, mode, precisions_init, backend)
        bad = objective_increases(fit.objective_trace)
        assert bad.size == 0, f"objective increased at sweeps {bad + 1}"
        if mode == solvers.L21 and fit.converged:
            assert supports_agree(fit.precisions), "converged l21 supports differ"
        with _lock:
            FITS.append((mode, fit))
        return fit

    return solve


@pytest.fixture(autouse=True, scope="session")
def record_fits():
    original = solvers._solve
    solvers._solve = _recording_solve(original)
    yield FITS
    solvers._solve = original


def objective_increases(trace, rtol=1e-12):
    """Indices where the objective went up by more than rounding."""
    t = np.asarray(trace)
    slack = rtol * np.maximum(1.0, np.abs(t[:-1]))
    return np.flatnonzero(t[1:] > t[:-1] + slack)


def supports_agree(precisions):
    masks = [np.asarray(k.matrix) != 0 for k in precisions]
    return all(np.array_equal(m, masks[0]) for m in masks[1:])


def random_spd(rng, p, n=None):
    """Sample covariance of ``n`` Gaussian draws (default ``3p``) with a random mixing."""
    n = n or 3 * p
    mix = rng.standard_normal((p, p)) / np.sqrt(p) + np.eye(p)
    x = rng.standard_normal((n, p)) @ mix
    x -= x.mean(axis=0)
    return x.T @ x / n


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record_criterion(number, title, passed, detail):
    """Store one acceptance verdict; the terminal summary prints them in order."""
    ACCEPTANCE[number] = (title, bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        )
