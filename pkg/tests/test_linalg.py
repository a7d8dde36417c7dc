import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covsel.exceptions import InvalidInput, NotPositiveDefinite
from covsel.linalg import (
    as_symmetric,
    batch_inverse_and_log_det,
    batch_log_det,
    cholesky,
    is_spd,
    log_det,
    spd_inverse,
)
from conftest import random_spd


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(1, 12))
def test_cholesky_reconstructs_and_log_det_matches_slogdet(seed, p):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, p) + 1e-3 * np.eye(p)
    f = cholesky(m)
    np.testing.assert_allclose(f.lower @ f.lower.T, m, atol=1e-12 * np.abs(m).max())
    assert np.all(np.diag(f.lower) > 0)
    assert log_det(m) == pytest.approx(np.linalg.slogdet(m)[1], abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(1, 12))
def test_inverse_is_exactly_symmetric(seed, p):
    rng = np.random.default_rng(seed)
    m = random_spd(rng, p) + 1e-3 * np.eye(p)
    inv = spd_inverse(m)
    assert np.array_equal(inv, inv.T)
    np.testing.assert_allclose(inv @ m, np.eye(p), atol=1e-8)


def test_batched_routines_match_single(rng):
    stack = np.stack([random_spd(rng, 6) for _ in range(4)])
    inv, ld = batch_inverse_and_log_det(stack)
    for s in range(4):
        np.testing.assert_allclose(inv[s], spd_inverse(stack[s]), atol=1e-10)
        assert ld[s] == pytest.approx(log_det(stack[s]), abs=1e-12)
        assert np.array_equal(inv[s], inv[s].T)
    np.testing.assert_allclose(batch_log_det(stack), ld, atol=0)


def test_singular_and_indefinite_matrices_are_rejected(rng):
    x = rng.standard_normal((3, 6))
    rank_deficient = x.T @ x
    with pytest.raises(NotPositiveDefinite):
        cholesky(rank_deficient)
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))
    assert not is_spd(np.zeros((2, 2)))
    assert is_spd(np.eye(3))


def test_asymmetric_and_malformed_inputs(rng):
    with pytest.raises(InvalidInput):
        as_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInput):
        as_symmetric(np.ones((2, 3)))
    with pytest.raises(InvalidInput):
        as_symmetric(np.array([[np.nan]]))
    m = np.array([[2.0, 1.0 + 1e-14], [1.0, 2.0]])
    sym = as_symmetric(m)
    assert sym[0, 1] == sym[1, 0] == 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(1, 10))
def test_log_det_of_inverse_is_negated(seed, p):
    m = random_spd(np.random.default_rng(seed), p) + 1e-2 * np.eye(p)
    assert log_det(spd_inverse(m)) == pytest.approx(-log_det(m), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(1, 10),
       neg=st.floats(-10.0, -1e-9))
def test_cholesky_rejects_any_negative_eigenvalue(seed, p, neg):
    # an eigenvalue placed at exactly zero by rotation comes back as +-1e-17,
    # which is numerically positive; exact singularity is checked below
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eig = rng.uniform(0.1, 5.0, p)
    eig[int(rng.integers(p))] = neg
    m = (q * eig) @ q.T
    assert not is_spd(as_symmetric(m, check=False))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(2, 10))
def test_cholesky_rejects_exactly_repeated_variable(seed, p):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3 * p, p))
    x[:, -1] = x[:, 0]
    assert not is_spd(x.T @ x)
