"""End-to-end support recovery of the group estimator on synthetic cohorts."""
import numpy as np
import pytest

from covsel.covariance import preprocess, sample_covariance
from covsel.selection import nested_cv_group
from covsel.solvers import fit_path, lambda_max
from covsel.synthetic import CohortSpec, generate_cohort


def edge_f1(estimate, truth):
    iu = np.triu_indices(truth.shape[0], 1)
    e, t = estimate[iu] != 0, truth[iu] != 0
    return 2 * np.sum(e & t) / (e.sum() + t.sum())


def test_path_contains_an_accurate_support():
    truths, cohort = generate_cohort(CohortSpec(samples_per_session=200, seed=0))
    covs = [sample_covariance(preprocess(a)) for a, _ in cohort]
    lmax = lambda_max(covs)
    fits = fit_path(covs, list(np.geomspace(lmax, lmax / 10, 8)))
    best = max(np.mean([edge_f1(k.matrix, t) for k, t in zip(f.precisions, truths)]) for f in fits)
    assert best >= 0.9


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "held-out likelihood selects a much smaller lambda than the one that recovers the "
    "support; edge F1 at the selected lambda is about 0.35"))
def test_cv_selected_lambda_recovers_support():
    scores = []
    for seed in range(5):
        truths, cohort = generate_cohort(CohortSpec(samples_per_session=200, seed=seed))
        reports = nested_cv_group(cohort, "l21", both_directions=False)
        scores.append(np.mean([edge_f1(r.precision.matrix, t) for r, t in zip(reports, truths)]))
    assert np.mean(scores) >= 0.8
