"""Synthetic cohorts with a shared sparse precision support, and planted graphs.

All randomness comes from numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence``; streams are reproducible within this
implementation for a given seed.
"""
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .exceptions import InvalidSpec
from .linalg import as_symmetric, cholesky, spd_inverse
from .matrices import as_matrix

COEF_LOW = 0.2
COEF_HIGH = 0.6
DOMINANCE_MARGIN = 0.1
MIN_JITTER_FACTOR = 0.05


@dataclass(frozen=True)
class CohortSpec:
    subjects: int = 5
    variables: int = 20
    samples_per_session: int = 40
    support_density: float = 0.1
    coefficient_jitter: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.subjects < 1:
            raise InvalidSpec("need at least one subject")
        if self.variables < 2:
            raise InvalidSpec("need at least two variables")
        if self.samples_per_session < 2:
            raise InvalidSpec("need at least two samples per session")
        if not 0.0 < self.support_density <= 1.0:
            raise InvalidSpec("support_density must lie in (0, 1]")
        if self.coefficient_jitter < 0:
            raise InvalidSpec("coefficient_jitter must be non-negative")
        if self.n_edges < 1:
            raise InvalidSpec(
                f"density {self.support_density} gives no edge at p={self.variables}"
            )

    @property
    def n_edges(self):
        n_pairs = self.variables * (self.variables - 1) // 2
        return int(round(self.support_density * n_pairs))

    def to_dict(self):
        return asdict(self)


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_support(p, n_edges, rng):
    """``n_edges`` distinct pairs ``(i, j)``, ``i < j``, drawn uniformly."""
    iu, ju = np.triu_indices(p, k=1)
    pick = np.sort(rng.choice(iu.size, size=n_edges, replace=False))
    return iu[pick], ju[pick]


def precision_from_coefficients(p, rows, cols, coefs):
    """SPD precision with the given off-diagonal entries.

    The diagonal is made dominant (absolute row sum plus a margin), then the
    matrix is rescaled so that its inverse has unit diagonal. Both steps keep
    the off-diagonal support unchanged.
    """
    k = np.zeros((p, p))
    k[rows, cols] = coefs
    k[cols, rows] = coefs
    k[np.diag_indices(p)] = np.abs(k).sum(axis=1) + DOMINANCE_MARGIN
    scale = np.sqrt(np.diag(spd_inverse(k)))
    return as_symmetric(k * np.outer(scale, scale), check=False)


def _streams(spec):
    """Shared-support stream and per-subject (jitter, sampling) streams."""
    shared, *subjects = np.random.SeedSequence(spec.seed).spawn(1 + spec.subjects)
    return shared, [tuple(ss.spawn(2)) for ss in subjects]


def generate_precisions(spec):
    """True per-subject precisions for ``spec`` (list of S arrays)."""
    shared_ss, subject_ss = _streams(spec)
    rng = _rng(shared_ss)
    rows, cols = random_support(spec.variables, spec.n_edges, rng)
    magnitude = rng.uniform(COEF_LOW, COEF_HIGH, size=rows.size)
    sign = np.where(rng.random(rows.size) < 0.5, -1.0, 1.0)
    base = sign * magnitude
    truths = []
    for jitter_ss, _ in subject_ss:
        sub = _rng(jitter_ss)
        factor = 1.0 + spec.coefficient_jitter * sub.uniform(-1.0, 1.0, size=base.size)
        factor = np.maximum(factor, MIN_JITTER_FACTOR)
        truths.append(precision_from_coefficients(spec.variables, rows, cols, base * factor))
    return truths


def gaussian_sampler(precision, n, seed):
    """``n`` i.i.d. rows from N(0, K^-1).

    Draws standard normals ``e`` and solves ``L^T z = e`` with ``L`` the
    Cholesky factor of ``K``, so ``cov(z) = (L L^T)^-1``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    factor = cholesky(as_matrix(precision))
    rng = seed if isinstance(seed, np.random.Generator) else _rng(seed)
    eps = rng.standard_normal((factor.order, n))
    z = scipy.linalg.solve_triangular(factor.lower.T, eps, lower=False)
    return np.ascontiguousarray(z.T)


def generate_cohort(spec):
    """True precisions and two independent sessions of data per subject.

    Returns
    -------
    truths : list of ndarray, shape (p, p)
    cohort : list of (session_a, session_b) ndarrays, each (n, p)
    """
    truths = generate_precisions(spec)
    _, subject_ss = _streams(spec)
    cohort = []
    for k, (_, sample_ss) in zip(truths, subject_ss):
        rng = _rng(sample_ss)
        cohort.append(
            (gaussian_sampler(k, spec.samples_per_session, rng),
             gaussian_sampler(k, spec.samples_per_session, rng))
        )
    return truths, cohort


def planted_partition(block_sizes, p_in, p_out, seed):
    """Adjacency of a stochastic block model and the planted labels.

    Returns
    -------
    adjacency : ndarray of 0/1, shape (p, p), zero diagonal
    labels : ndarray of int, shape (p,)
    """
    rng = _rng(seed)
    labels = np.repeat(np.arange(len(block_sizes)), block_sizes)
    p = labels.size
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draw = rng.random((p, p)) < prob
    upper = np.triu(draw, k=1)
    adjacency = (upper | upper.T).astype(np.float64)
    return adjacency, labels
