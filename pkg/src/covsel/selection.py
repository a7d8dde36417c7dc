"""Held-out likelihood scoring, two-fold session CV and nested group CV.

Scores are ``log det K - tr(S_test K)``: the Gaussian log-likelihood of the
test data up to a positive factor and an additive constant. Only
differences between estimators are meaningful.
"""
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .covariance import check_data, ledoit_wolf, preprocess, ridge_precision, sample_covariance
from .exceptions import CovselError, ConvergenceWarning, DimensionMismatch, InvalidInput
from .linalg import cholesky, spd_inverse
from .matrices import PrecisionMatrix, as_matrix
from .solvers import L1, L21, PenaltyConfig, fit_path, lambda_max

N_INNER_FOLDS = 3
GRID_SIZE = 20
GRID_DECADES = 3.0


def gaussian_score(precision, test):
    """``log det K - tr(S_test K)``, higher is better.

    ``test`` is either an ``(n, p)`` data matrix, whose sample covariance is
    used, or a ``CovarianceMatrix``.
    """
    k = as_matrix(precision)
    if hasattr(test, "n_samples"):
        s = test.matrix
    else:
        s = sample_covariance(check_data(test, min_features=1)).matrix
    if s.shape != k.shape:
        raise DimensionMismatch(f"precision is {k.shape}, test covariance is {s.shape}")
    return cholesky(k).log_det() - float(np.sum(s * k))


def filling_factor(precision):
    """Fraction of the ``p (p - 1) / 2`` off-diagonal pairs in the support."""
    if isinstance(precision, PrecisionMatrix):
        p, edges = precision.order, precision.n_edges
    else:
        k = np.asarray(precision)
        p = k.shape[0]
        edges = int(np.count_nonzero(np.triu(k, 1)))
    pairs = p * (p - 1) // 2
    return edges / pairs if pairs else 0.0


def log_grid(high, size=GRID_SIZE, decades=GRID_DECADES):
    """``size`` points, log-spaced and decreasing, from ``high`` down ``decades`` decades."""
    return np.logspace(np.log10(high), np.log10(high) - decades, size).tolist()


# -- estimators --------------------------------------------------------------

class Estimator:
    """A precision estimator fitted to one subject's data, optionally helped by others.

    Subclasses set ``name``, ``penalized`` and ``uses_population`` and
    implement :meth:`fit_grid`.
    """

    name = ""
    penalized = False
    uses_population = False

    def __init__(self, solver_config=None):
        self.solver_config = solver_config or PenaltyConfig(lam=1.0)

    def default_grid(self, train, others=()):
        return []

    def fit_grid(self, train, others, grid):
        """Precision for the target subject at each lambda of ``grid``.

        Entries are ``PrecisionMatrix`` or the exception that the fit raised.
        """
        raise NotImplementedError

    def fit(self, train, others=(), lam=None):
        out = self.fit_grid(train, others, [lam])[0]
        if isinstance(out, Exception):
            raise out
        return out

    def __repr__(self):
        return f"{type(self).__name__}()"


def _pool(train, others, use):
    return np.vstack([train, *others]) if use and len(others) else train


class _Unpenalized(Estimator):
    def fit_grid(self, train, others, grid):
        data = _pool(train, others, self.uses_population)
        try:
            out = self._estimate(data)
        except CovselError as exc:
            out = exc
        return [out for _ in grid] if grid else [out]


class MLE(_Unpenalized):
    name = "mle"

    def _estimate(self, data):
        return PrecisionMatrix(spd_inverse(sample_covariance(data).matrix))


class LedoitWolf(_Unpenalized):
    name = "lw"

    def _estimate(self, data):
        return PrecisionMatrix(spd_inverse(ledoit_wolf(data)[0].matrix))


class Ridge(Estimator):
    name = "ridge"
    penalized = True

    def default_grid(self, train, others=()):
        s = sample_covariance(_pool(train, others, self.uses_population)).matrix
        return log_grid(10.0 * np.trace(s) / s.shape[0], decades=4.0)

    def fit_grid(self, train, others, grid):
        cov = sample_covariance(_pool(train, others, self.uses_population))
        out = []
        for lam in grid:
            try:
                out.append(ridge_precision(cov, lam))
            except CovselError as exc:
                out.append(exc)
        return out


class L1Penalized(Estimator):
    name = "l1"
    penalized = True

    def default_grid(self, train, others=()):
        cov = sample_covariance(_pool(train, others, self.uses_population))
        return log_grid(lambda_max([cov]))

    def fit_grid(self, train, others, grid):
        cov = sample_covariance(_pool(train, others, self.uses_population))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                fits = fit_path([cov], grid, self.solver_config, mode=L1)
        except CovselError as exc:
            return [exc for _ in grid]
        return [f.precision for f in fits]


class L21Penalized(Estimator):
    """Joint group-sparse fit of the target and the other subjects; returns the target's precision."""

    name = "l21"
    penalized = True
    uses_population = True

    def default_grid(self, train, others=()):
        covs = [sample_covariance(x) for x in (train, *others)]
        return log_grid(lambda_max(covs))

    def fit_grid(self, train, others, grid):
        covs = [sample_covariance(x) for x in (train, *others)]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                fits = fit_path(covs, grid, self.solver_config, mode=L21)
        except CovselError as exc:
            return [exc for _ in grid]
        return [f.precisions[0] for f in fits]


def _pooled(cls):
    return type(f"Pooled{cls.__name__}", (cls,), {
        "name": f"pooled_{cls.name}",
        "uses_population": True,
        "__doc__": f"{cls.__name__} fitted to the target's rows stacked with the population's.",
    })


PooledMLE = _pooled(MLE)
PooledLedoitWolf = _pooled(LedoitWolf)
PooledRidge = _pooled(Ridge)
PooledL1 = _pooled(L1Penalized)

ESTIMATORS = {
    cls.name: cls
    for cls in (MLE, LedoitWolf, Ridge, L1Penalized,
                PooledMLE, PooledLedoitWolf, PooledRidge, PooledL1, L21Penalized)
}


def make_estimator(name, solver_config=None):
    try:
        return ESTIMATORS[name](solver_config)
    except KeyError:
        raise InvalidInput(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None


# -- cross-validation --------------------------------------------------------

@dataclass
class CVReport:
    """Outcome of selecting lambda for one estimator and one held-out split.

    ``per_fold_scores`` has shape (folds, len(lambda_grid)); unpenalized
    estimators have an empty grid and ``selected_lambda`` None.
    """

    estimator_name: str
    lambda_grid: list
    per_fold_scores: list
    selected_lambda: float | None
    generalization_score: float
    filling_factor: float
    subject: int | None = None
    train_session: int | None = None
    converged: bool = True
    error: str | None = None
    precision: PrecisionMatrix | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "estimator": self.estimator_name,
            "subject": self.subject,
            "train_session": self.train_session,
            "lambda_grid": [float(x) for x in self.lambda_grid],
            "per_fold_scores": [[_finite_or_none(v) for v in row] for row in self.per_fold_scores],
            "selected_lambda": self.selected_lambda,
            "generalization_score": _finite_or_none(self.generalization_score),
            "filling_factor": self.filling_factor,
            "converged": self.converged,
            "error": self.error,
        }


def _finite_or_none(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _score_cells(fits, test):
    row = []
    for k in fits:
        if isinstance(k, Exception):
            row.append(-np.inf)
            continue
        try:
            row.append(gaussian_score(k, test))
        except CovselError:
            row.append(-np.inf)
    return row


def select_lambda(grid, scores):
    """Grid value with the best mean score; ties go to the larger lambda."""
    mean = np.mean(np.asarray(scores, dtype=float), axis=0)
    best = None
    for i, lam in enumerate(grid):
        if not np.isfinite(mean[i]):
            continue
        if best is None or mean[i] > mean[best] or (mean[i] == mean[best] and lam > grid[best]):
            best = i
    return (None if best is None else best), mean


def two_fold_cv(session_a, session_b, estimator, lambda_grid, preprocessed=False):
    """Fit on one session and score on the other, both ways, for every lambda.

    The reported ``generalization_score`` is the best mean cross-session
    score and ``filling_factor`` the mean over the two fits at the selected
    lambda.
    """
    if isinstance(estimator, str):
        estimator = make_estimator(estimator)
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise InvalidInput("lambda grid is empty")
    a, b = (np.asarray(x, float) for x in (session_a, session_b))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"sessions have {a.shape[1]} and {b.shape[1]} variables")
    if not preprocessed:
        a, b = preprocess(a), preprocess(b)
    fits_ab = estimator.fit_grid(a, (), grid)
    fits_ba = estimator.fit_grid(b, (), grid)
    scores = [_score_cells(fits_ab, b), _score_cells(fits_ba, a)]
    best, mean = select_lambda(grid, scores)
    if best is None:
        return CVReport(estimator.name, grid, scores, None, -np.inf, float("nan"),
                        converged=False, error="every cell failed")
    ff = [filling_factor(f[best]) for f in (fits_ab, fits_ba) if not isinstance(f[best], Exception)]
    return CVReport(estimator.name, grid, scores, grid[best], float(mean[best]), float(np.mean(ff)))


def inner_blocks(n, folds=N_INNER_FOLDS):
    """Contiguous index blocks splitting ``range(n)`` into ``folds`` parts."""
    return np.array_split(np.arange(n), folds)


def _nested_one(estimator, sessions, subject, train_session, lambda_grid):
    train = sessions[subject][train_session]
    test = sessions[subject][1 - train_session]
    others = [sessions[o][train_session] for o in range(len(sessions)) if o != subject]
    if not estimator.uses_population:
        others = []

    if estimator.penalized:
        grid = list(lambda_grid) if lambda_grid is not None else estimator.default_grid(train, others)
        scores = []
        for block in inner_blocks(train.shape[0]):
            mask = np.ones(train.shape[0], bool)
            mask[block] = False
            fits = estimator.fit_grid(train[mask], others, grid)
            scores.append(_score_cells(fits, train[block]))
        best, _ = select_lambda(grid, scores)
        if best is None:
            return CVReport(estimator.name, grid, scores, None, -np.inf, float("nan"),
                            subject, train_session, converged=False,
                            error="every inner cell failed")
        lam = grid[best]
    else:
        grid, scores, lam = [], [], None

    final = estimator.fit_grid(train, others, [lam] if lam is not None else [])[0]
    if isinstance(final, Exception):
        return CVReport(estimator.name, grid, scores, lam, -np.inf, float("nan"),
                        subject, train_session, converged=False, error=str(final))
    score = _score_cells([final], test)[0]
    return CVReport(estimator.name, grid, scores, lam, score, filling_factor(final),
                    subject, train_session, precision=final)


def nested_cv_group(cohort, estimator, lambda_grid=None, both_directions=True,
                    preprocessed=False, n_jobs=1):
    """Nested cross-validation of ``estimator`` over a cohort of session pairs.

    For each subject (and each choice of training session when
    ``both_directions``), lambda is chosen on contiguous inner blocks of the
    training session only, the model is refitted on the whole training
    session, and the untouched other session gives ``generalization_score``.
    Population estimators add the other subjects' sessions with the same
    index as the training session.

    Parameters
    ----------
    cohort : list of (session_a, session_b)
    estimator : Estimator or str
    lambda_grid : list of float, optional
        Shared grid. By default each split derives its own from its training
        data.
    n_jobs : int
        Threads used across splits. Results do not depend on it.

    Returns
    -------
    list of CVReport, ordered by (subject, train_session).
    """
    if isinstance(estimator, str):
        estimator = make_estimator(estimator)
    if lambda_grid is not None and len(lambda_grid) == 0:
        raise InvalidInput("lambda grid is empty")
    if not cohort:
        raise InvalidInput("cohort is empty")
    p = np.asarray(cohort[0][0]).shape[1]
    sessions = []
    for pair in cohort:
        if len(pair) != 2:
            raise InvalidInput("every subject needs exactly two sessions")
        pair = [np.asarray(x, float) for x in pair]
        if any(x.shape[1] != p for x in pair):
            raise DimensionMismatch("sessions disagree on the number of variables")
        sessions.append(pair if preprocessed else [preprocess(x) for x in pair])

    directions = (0, 1) if both_directions else (0,)
    tasks = [(s, d) for s in range(len(sessions)) for d in directions]

    def run(task):
        return _nested_one(estimator, sessions, task[0], task[1], lambda_grid)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]


def mean_generalization(reports):
    return float(np.mean([r.generalization_score for r in reports]))


def paired_comparison(reports_a, reports_b):
    """Paired comparison of two estimators' generalization scores over matched splits.

    Returns a dict with the mean difference (a - b), the number of splits
    where ``a`` wins, a two-sided sign-test p-value and a Wilcoxon
    signed-rank p-value.
    """
    a = np.array([r.generalization_score for r in reports_a], float)
    b = np.array([r.generalization_score for r in reports_b], float)
    if a.shape != b.shape:
        raise DimensionMismatch("reports are not paired")
    keep = np.isfinite(a) & np.isfinite(b)
    diff = a[keep] - b[keep]
    wins = int(np.sum(diff > 0))
    nonzero = int(np.sum(diff != 0))
    sign_p = float(scipy.stats.binomtest(wins, nonzero).pvalue) if nonzero else 1.0
    if nonzero:
        wilcoxon_p = float(scipy.stats.wilcoxon(diff[diff != 0]).pvalue)
    else:
        wilcoxon_p = 1.0
    return {
        "n": int(diff.size),
        "mean_difference": float(diff.mean()) if diff.size else float("nan"),
        "wins": wins,
        "sign_test_p": sign_p,
        "wilcoxon_p": wilcoxon_p,
    }
