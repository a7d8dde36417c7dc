"""Dense symmetric linear algebra: Cholesky, log-determinant, SPD inverse.

Positive definiteness is always decided by Cholesky breakdown. A pivot
(squared diagonal of the factor) at or below ``PIVOT_RTOL`` times the
largest diagonal entry of the input counts as a breakdown, which catches
sample covariances that are singular up to rounding.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import InvalidInput, NotPositiveDefinite

PIVOT_RTOL = 1e-12


def as_symmetric(m, check=True, atol=1e-10):
    """Return ``m`` as a float64 array whose two triangles agree bitwise.

    The upper triangle is mirrored from the lower one. With ``check`` set,
    inputs whose triangles differ by more than ``atol`` (relative to the
    largest entry) are rejected.
    """
    m = np.array(m, dtype=np.float64, copy=True)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix has non-finite entries")
    if check:
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > atol * scale:
            raise InvalidInput("matrix is not symmetric")
    lower = np.tril(m)
    return lower + np.tril(m, -1).T


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with positive diagonal such that ``L @ L.T == m``."""

    lower: np.ndarray

    @property
    def order(self):
        return self.lower.shape[0]

    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b):
        return scipy.linalg.cho_solve((self.lower, True), b)


def cholesky(m):
    """Cholesky factor of a symmetric matrix.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is non-positive or below ``PIVOT_RTOL * max(diag(m))``.
    """
    m = as_symmetric(m)
    diag = np.diag(m)
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky breakdown: matrix is not positive definite") from exc
    pivots = np.diag(lower) ** 2
    floor = PIVOT_RTOL * max(diag.max(), 0.0)
    if not np.all(pivots > floor):
        raise NotPositiveDefinite(
            f"Cholesky pivot {pivots.min():.3e} below threshold {floor:.3e}: "
            "matrix is numerically singular"
        )
    return CholeskyFactor(lower)


def is_spd(m):
    try:
        cholesky(m)
    except (NotPositiveDefinite, InvalidInput):
        return False
    return True


def log_det(m):
    """Natural log of the determinant of an SPD matrix, via its Cholesky factor."""
    return cholesky(m).log_det()


def spd_inverse(m):
    """Inverse of an SPD matrix, returned exactly symmetric."""
    factor = cholesky(m)
    p = factor.order
    linv = scipy.linalg.solve_triangular(factor.lower, np.eye(p), lower=True)
    inv = linv.T @ linv
    return as_symmetric(inv, check=False)


def spd_inverse_and_log_det(m):
    factor = cholesky(m)
    linv = scipy.linalg.solve_triangular(factor.lower, np.eye(factor.order), lower=True)
    return as_symmetric(linv.T @ linv, check=False), factor.log_det()


def batch_cholesky(stack):
    """Lower Cholesky factors of a stack of SPD matrices, shape (S, p, p).

    Applies the same pivot rule as :func:`cholesky` to every matrix.
    """
    stack = np.asarray(stack, dtype=np.float64)
    try:
        lower = np.linalg.cholesky(stack)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky breakdown in a stacked matrix") from exc
    pivots = np.diagonal(lower, axis1=1, axis2=2) ** 2
    floor = PIVOT_RTOL * np.maximum(np.diagonal(stack, axis1=1, axis2=2).max(axis=1), 0.0)
    if not np.all(pivots > floor[:, None]):
        raise NotPositiveDefinite("stacked matrix is numerically singular")
    return lower


def batch_log_det(stack):
    lower = batch_cholesky(stack)
    return 2.0 * np.sum(np.log(np.diagonal(lower, axis1=1, axis2=2)), axis=1)


def batch_inverse_and_log_det(stack):
    """Symmetric inverses and log-determinants of a stack of SPD matrices."""
    lower = batch_cholesky(stack)
    p = lower.shape[-1]
    linv = np.linalg.solve(lower, np.broadcast_to(np.eye(p), lower.shape))
    inv = np.matmul(np.swapaxes(linv, 1, 2), linv)
    inv = np.tril(inv) + np.swapaxes(np.tril(inv, -1), 1, 2)
    logdet = 2.0 * np.sum(np.log(np.diagonal(lower, axis1=1, axis2=2)), axis=1)
    return inv, logdet
