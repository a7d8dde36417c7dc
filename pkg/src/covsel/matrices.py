"""Typed wrappers for covariance and precision matrices."""
from dataclasses import dataclass

import numpy as np

from .linalg import as_symmetric


@dataclass(frozen=True)
class CovarianceMatrix:
    """A sample (or shrunk) covariance and the number of rows it came from."""

    matrix: np.ndarray
    n_samples: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_symmetric(self.matrix))

    @property
    def order(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PrecisionMatrix:
    """An SPD precision matrix with the threshold that defines its support."""

    matrix: np.ndarray
    zero_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_symmetric(self.matrix))

    @property
    def order(self):
        return self.matrix.shape[0]

    @property
    def support(self):
        """Off-diagonal pairs ``(i, j)``, ``i < j``, with ``|K_ij| > zero_threshold``."""
        iu, ju = np.triu_indices(self.order, k=1)
        keep = np.abs(self.matrix[iu, ju]) > self.zero_threshold
        return list(zip(iu[keep].tolist(), ju[keep].tolist()))

    @property
    def n_edges(self):
        iu, ju = np.triu_indices(self.order, k=1)
        return int(np.count_nonzero(np.abs(self.matrix[iu, ju]) > self.zero_threshold))


def as_matrix(obj):
    """Underlying ndarray of a wrapper, or ``np.asarray(obj)``."""
    if isinstance(obj, (CovarianceMatrix, PrecisionMatrix)):
        return obj.matrix
    return np.asarray(obj, dtype=np.float64)
