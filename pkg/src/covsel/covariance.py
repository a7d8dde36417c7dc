"""Sample covariances, generic preprocessing and closed-form shrinkage.

Covariances use the divisor ``n`` throughout, and standardization uses the
population variance, so standardized data yields a unit-diagonal
covariance (a correlation matrix).
"""
import numpy as np

from .exceptions import InvalidInput, NotPositiveDefinite, ZeroVariance
from .linalg import as_symmetric, spd_inverse
from .matrices import CovarianceMatrix, PrecisionMatrix, as_matrix


def check_data(x, min_samples=2, min_features=2):
    """Validate an ``(n_samples, n_features)`` data matrix and return it as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput(f"data must be 2-D (samples x variables), got {x.ndim}-D")
    n, p = x.shape
    if n < min_samples or p < min_features:
        raise InvalidInput(
            f"data needs at least {min_samples} samples and {min_features} variables, got {n}x{p}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidInput("data contains non-finite values")
    return x


def detrend(x):
    """Subtract the per-column least-squares line in the sample index."""
    x = check_data(x, min_samples=3, min_features=1)
    n = x.shape[0]
    t = np.arange(n, dtype=np.float64)
    design = np.column_stack([np.ones(n), t - t.mean()])
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return x - design @ coef


def standardize(x, rtol=1e-12):
    """Center each column and scale it to unit population variance.

    Raises
    ------
    ZeroVariance
        If a column is constant (its standard deviation is below ``rtol``
        times its largest absolute value).
    """
    x = check_data(x, min_features=1)
    centered = x - x.mean(axis=0)
    std = np.sqrt(np.mean(centered ** 2, axis=0))
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    flat = np.flatnonzero(std <= rtol * scale)
    if flat.size:
        raise ZeroVariance(f"column(s) {flat.tolist()} have zero variance")
    return centered / std


def preprocess(x, detrend=True, standardize=True):
    """Detrend, then standardize, the columns of ``x``.

    Parameters
    ----------
    x : array-like, shape (n_samples, n_features)
    detrend : bool
        Remove a least-squares linear trend from every column (needs n >= 3).
    standardize : bool
        Center and scale every column to unit variance.

    Returns
    -------
    ndarray, shape (n_samples, n_features)
    """
    out = check_data(x, min_features=1)
    if detrend:
        out = _detrend(out)
    if standardize:
        out = _standardize(out)
    return out


_detrend = detrend
_standardize = standardize


def sample_covariance(x, assume_centered=False):
    """Sample covariance ``X.T @ X / n``, centering the columns first unless told not to."""
    x = check_data(x, min_features=1)
    if not assume_centered:
        x = x - x.mean(axis=0)
    n = x.shape[0]
    return CovarianceMatrix(as_symmetric(x.T @ x / n, check=False), n)


def ridge_precision(cov, lam):
    """Precision of the ridge-shrunk covariance, ``inv(S + lam * I)``."""
    if lam < 0:
        raise InvalidInput(f"lambda must be non-negative, got {lam}")
    s = as_matrix(cov)
    try:
        return PrecisionMatrix(spd_inverse(s + lam * np.eye(s.shape[0])))
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(
            f"covariance + {lam} * I is singular; a positive ridge is required"
        ) from exc


def ledoit_wolf_shrinkage(x, assume_centered=False):
    """Ledoit-Wolf optimal shrinkage intensity towards ``mu * I``.

    With ``S`` the sample covariance, ``mu = trace(S) / p``,
    ``d2 = ||S - mu I||_F^2`` and
    ``b2 = min(d2, sum_t ||x_t x_t^T - S||_F^2 / n^2)``, the intensity is
    ``b2 / d2`` (zero when ``S`` already equals ``mu I``).
    """
    x = check_data(x, min_features=1)
    if not assume_centered:
        x = x - x.mean(axis=0)
    n, p = x.shape
    s = x.T @ x / n
    mu = np.trace(s) / p
    d2 = np.sum((s - mu * np.eye(p)) ** 2)
    if d2 <= 0.0:
        return 0.0
    # sum_t ||x_t x_t^T - S||_F^2 == sum_t ||x_t||^4 - n ||S||_F^2
    row_sq = np.sum(x ** 2, axis=1)
    b2_bar = (np.sum(row_sq ** 2) - n * np.sum(s ** 2)) / n ** 2
    b2 = min(d2, max(b2_bar, 0.0))
    return float(b2 / d2)


def ledoit_wolf(x, assume_centered=False):
    """Ledoit-Wolf shrunk covariance and its shrinkage intensity.

    Returns
    -------
    cov : CovarianceMatrix
        ``(1 - rho) * S + rho * mu * I``.
    rho : float in [0, 1]
    """
    x = check_data(x, min_features=1)
    if not assume_centered:
        x = x - x.mean(axis=0)
    n, p = x.shape
    s = x.T @ x / n
    rho = ledoit_wolf_shrinkage(x, assume_centered=True)
    if rho == 0.0:
        shrunk = s
    else:
        mu = np.trace(s) / p
        shrunk = (1.0 - rho) * s + rho * mu * np.eye(p)
    return CovarianceMatrix(as_symmetric(shrunk, check=False), n), rho
