"""Command-line interface: ``covsel {fit,cv,communities,integrate,simulate}``.

Exit codes: 0 success, 2 parse/usage error, 3 dimension mismatch,
4 solver did not converge (outputs still written), 5 numerical failure.
"""
import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, io
from .covariance import ledoit_wolf, preprocess, ridge_precision, sample_covariance
from .exceptions import (
    ConvergenceWarning,
    CovselError,
    DimensionMismatch,
    EmptyGraph,
    InvalidInput,
    NotPositiveDefinite,
    ZeroVariance,
)
from .graphs import (
    WEIGHT_KINDS,
    detect_communities,
    integration_graph,
    modularity,
    singleton_partition,
    support_graph,
)
from .linalg import spd_inverse
from .matrices import PrecisionMatrix
from .selection import (
    ESTIMATORS,
    filling_factor,
    make_estimator,
    mean_generalization,
    nested_cv_group,
    paired_comparison,
)
from .solvers import PenaltyConfig, glasso_l1, glasso_l21
from .synthetic import CohortSpec, generate_cohort

log = logging.getLogger("covsel")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIMENSION = 3
EXIT_NOT_CONVERGED = 4
EXIT_NUMERICAL = 5

FIT_ESTIMATORS = ("mle", "lw", "ridge", "l1", "l21")


class UsageError(Exception):
    pass


def _solver_config(args, lam):
    kwargs = {"lam": lam, "max_iterations": args.max_iter}
    if args.gap_tol is not None:
        kwargs["gap_tolerance"] = args.gap_tol
    return PenaltyConfig(**kwargs)


def _config_echo(args):
    # the thread count cannot change any result, so it stays out of the echo
    skip = {"func", "verbose", "threads"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


# -- fit ---------------------------------------------------------------------

def cmd_fit(args):
    out = Path(args.output_dir)
    datasets = [io.read_data(path) for path in args.inputs]
    p = datasets[0].shape[1]
    for path, x in zip(args.inputs, datasets):
        if x.shape[1] != p:
            raise DimensionMismatch(f"{path} has {x.shape[1]} variables, expected {p}")
    if args.preprocess:
        datasets = [preprocess(x) for x in datasets]
    covs = [sample_covariance(x) for x in datasets]
    if args.estimator in ("ridge", "l1", "l21") and args.lam is None:
        raise UsageError(f"--lambda is required for estimator {args.estimator}")

    results = []
    converged = True
    if args.estimator == "l21":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            fit = glasso_l21(covs, _solver_config(args, args.lam))
        converged = fit.converged
        for k in fit.precisions:
            results.append({"objective": fit.objective, "duality_gap": fit.duality_gap,
                            "iterations": fit.iterations, "converged": fit.converged,
                            "precision": k})
    else:
        for cov in covs:
            entry = {}
            if args.estimator == "mle":
                try:
                    k = PrecisionMatrix(spd_inverse(cov.matrix))
                except NotPositiveDefinite as exc:
                    raise NotPositiveDefinite(
                        f"sample covariance is singular (n={cov.n_samples}, p={cov.order}); "
                        "the MLE does not exist"
                    ) from exc
            elif args.estimator == "lw":
                idx = covs.index(cov)
                shrunk, rho = ledoit_wolf(datasets[idx])
                k = PrecisionMatrix(spd_inverse(shrunk.matrix))
                entry["shrinkage"] = rho
            elif args.estimator == "ridge":
                k = ridge_precision(cov, args.lam)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    fit = glasso_l1(cov, _solver_config(args, args.lam))
                k = fit.precision
                converged &= fit.converged
                entry.update(objective=fit.objective, duality_gap=fit.duality_gap,
                             iterations=fit.iterations, converged=fit.converged)
            entry["precision"] = k
            results.append(entry)

    report_rows = []
    for i, entry in enumerate(results):
        k = entry.pop("precision")
        path = out / f"precision_{i:02d}.csv"
        io.write_matrix(path, k.matrix)
        entry.update(input=str(args.inputs[i]), precision_file=path.name,
                     filling_factor=filling_factor(k), n_edges=k.n_edges)
        report_rows.append(entry)
    report = io.make_report("fit", _config_echo(args), args.inputs,
                            {"estimator": args.estimator, "fits": report_rows}, seed=args.seed)
    io.write_json(out / "fit_report.json", report)
    if not converged:
        log.warning("solver did not reach the duality-gap tolerance; see fit_report.json")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# -- cv ----------------------------------------------------------------------

def _parse_grid(text):
    if text is None:
        return None
    try:
        grid = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"cannot parse lambda grid {text!r}") from exc
    if not grid:
        raise UsageError("lambda grid is empty")
    if any(v <= 0 for v in grid):
        raise UsageError("lambda grid values must be positive")
    return grid


def _communities_stats(precision, args):
    graph = support_graph(precision, args.weight_kind)
    try:
        part = detect_communities(graph, args.k_max, args.restarts, args.seed)
    except EmptyGraph:
        return precision.order, None
    return part.k, part.modularity


def cmd_cv(args):
    out = Path(args.output_dir)
    manifest, cohort = io.read_manifest(args.manifest)
    grid = _parse_grid(args.lambda_grid)
    names = [n.strip() for n in args.estimators.split(",") if n.strip()]
    unknown = [n for n in names if n not in ESTIMATORS]
    if unknown or not names:
        raise UsageError(f"unknown estimator(s) {unknown}; choose from {sorted(ESTIMATORS)}")
    if len(cohort) == 1 and any(n == "l21" or n.startswith("pooled_") for n in names):
        log.warning("one subject only: population estimators reduce to their subject-level "
                    "counterparts (l21 behaves as l1)")

    solver_cfg = _solver_config(args, 1.0)
    summary = {}
    all_reports = {}
    for name in names:
        estimator = make_estimator(name, solver_cfg)
        reports = nested_cv_group(cohort, estimator, lambda_grid=grid,
                                  both_directions=not args.single_direction,
                                  n_jobs=args.threads)
        all_reports[name] = reports
        ks, qs = [], []
        for r in reports:
            if r.precision is None:
                continue
            k, q = _communities_stats(r.precision, args)
            ks.append(k)
            if q is not None:
                qs.append(q)
        for s, subject in enumerate(manifest["subjects"]):
            rows = [r.to_dict() for r in reports if r.subject == s]
            io.write_json(out / f"cv_{name}_{subject.get('id', s)}.json",
                          io.make_report("cv", _config_echo(args), [], {"splits": rows},
                                         seed=args.seed))
        finite = [r.generalization_score for r in reports if np.isfinite(r.generalization_score)]
        summary[name] = {
            "mean_generalization_score": mean_generalization(reports) if len(finite) == len(reports)
            else (float(np.mean(finite)) if finite else None),
            "failed_splits": len(reports) - len(finite),
            "mean_filling_factor": float(np.nanmean([r.filling_factor for r in reports]))
            if any(np.isfinite(r.filling_factor) for r in reports) else None,
            "mean_communities": float(np.mean(ks)) if ks else None,
            "mean_modularity": float(np.mean(qs)) if qs else None,
            "selected_lambdas": [r.selected_lambda for r in reports],
        }
    ranked = sorted(
        (n for n in names if summary[n]["mean_generalization_score"] is not None),
        key=lambda n: -summary[n]["mean_generalization_score"],
    )
    comparisons = {}
    if len(ranked) > 1:
        best = ranked[0]
        for other in ranked[1:]:
            comparisons[f"{best}-vs-{other}"] = paired_comparison(all_reports[best], all_reports[other])
    report = io.make_report("cv", _config_echo(args), io.manifest_inputs(args.manifest),
                            {"estimators": summary, "ranking": ranked, "comparisons": comparisons},
                            seed=args.seed)
    io.write_json(out / "cv_summary.json", report)
    print(_summary_table(names, summary))
    return EXIT_OK


def _fmt(v, spec):
    return "-" if v is None else format(v, spec)


def _summary_table(names, summary):
    head = f"{'estimator':<14}{'gen. score':>12}{'filling':>10}{'communities':>13}{'modularity':>12}"
    lines = [head]
    for n in names:
        s = summary[n]
        lines.append(
            f"{n:<14}{_fmt(s['mean_generalization_score'], '12.3f')}"
            f"{_fmt(s['mean_filling_factor'], '10.3f')}"
            f"{_fmt(s['mean_communities'], '13.2f')}{_fmt(s['mean_modularity'], '12.3f')}"
        )
    return "\n".join(lines)


# -- communities / integrate ---------------------------------------------------

def _labels(args, p):
    return io.read_labels(args.labels, expected=p) if args.labels else None


def cmd_communities(args):
    out = Path(args.output_dir)
    k = PrecisionMatrix(io.read_matrix(args.precision))
    labels = _labels(args, k.order)
    graph = support_graph(k, args.weight_kind, labels)
    try:
        part = detect_communities(graph, args.k_max, args.restarts, args.seed)
        q = part.modularity
    except EmptyGraph:
        part, q = singleton_partition(k.order), None
    io.atomic_write_text(out / "partition.tsv", io.partition_text(part, labels))
    io.atomic_write_text(out / "graph_edges.tsv", io.edge_list_text(graph))
    io.atomic_write_text(out / "graph.dot", io.dot_text(graph, partition=part))
    results = {"n_nodes": k.order, "n_edges": graph.n_edges, "n_communities": part.k,
               "modularity": q, "weight_kind": args.weight_kind,
               "filling_factor": filling_factor(k)}
    io.write_json(out / "communities_report.json",
                  io.make_report("communities", _config_echo(args), [args.precision], results,
                                 seed=args.seed))
    print(f"{part.k} communities, modularity {_fmt(q, '.4f')}")
    return EXIT_OK


def cmd_integrate(args):
    out = Path(args.output_dir)
    k = PrecisionMatrix(io.read_matrix(args.precision))
    labels = _labels(args, k.order)
    comm = io.read_partition(args.partition, expected=k.order, labels=labels)
    ig = integration_graph(k, comm)
    io.atomic_write_text(out / "integration_graph.tsv", io.integration_graph_text(ig))
    io.atomic_write_text(out / "integration_graph.dot", io.integration_dot_text(ig))
    graph = support_graph(k)
    q = None
    if graph.n_edges:
        q = modularity(graph, comm)
    results = {
        "integration": {str(c): v for c, v in sorted(ig.node_values.items())},
        "mutual_information": [{"communities": [a, b], "value": v}
                               for (a, b), v in sorted(ig.edge_values.items())],
        "modularity": q,
    }
    io.write_json(out / "integration_report.json",
                  io.make_report("integrate", _config_echo(args),
                                 [args.precision, args.partition], results, seed=args.seed))
    print(f"{len(ig.node_values)} communities, {len(ig.edge_values)} mutual-information edges")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.output_dir)
    spec = CohortSpec(subjects=args.subjects, variables=args.variables,
                      samples_per_session=args.samples, support_density=args.density,
                      coefficient_jitter=args.jitter, seed=args.seed)
    truths, cohort = generate_cohort(spec)
    subjects = []
    for s, (truth, sessions) in enumerate(zip(truths, cohort)):
        sid = f"sub-{s:02d}"
        files = []
        for t, x in enumerate(sessions):
            name = f"{sid}_ses-{t}.csv"
            io.write_data(out / name, x)
            files.append(name)
        truth_name = f"truth/{sid}_precision.csv"
        io.write_matrix(out / truth_name, truth)
        subjects.append({"id": sid, "sessions": files, "truth": truth_name})
    io.write_manifest(out / "manifest.json", subjects, spec.variables,
                      spec.samples_per_session, spec.seed, spec.to_dict())
    print(f"wrote {len(subjects)} subjects x 2 sessions to {out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random draw")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker threads (results do not depend on it)")
    common.add_argument("--output-dir", default=".", help="directory for outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--max-iter", type=_positive_int, default=500)
    solver.add_argument("--gap-tol", type=float, default=None,
                        help="duality-gap tolerance (default 1e-5 * p)")

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--k-max", type=int, default=10)
    graph.add_argument("--restarts", type=_positive_int, default=10)
    graph.add_argument("--weight-kind", choices=WEIGHT_KINDS, default="binary_support")

    parser = argparse.ArgumentParser(prog="covsel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"covsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, solver], help="estimate precision matrices")
    p.add_argument("inputs", nargs="+", help="data CSV files (rows = samples)")
    p.add_argument("--estimator", choices=FIT_ESTIMATORS, default="l1")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--no-preprocess", dest="preprocess", action="store_false",
                   help="skip detrending and standardization")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", parents=[common, solver, graph],
                       help="nested cross-validation over a cohort manifest")
    p.add_argument("manifest")
    p.add_argument("--estimators", default="mle,lw,ridge,l1,l21",
                   help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--lambda-grid", default=None,
                   help="explicit lambda values (default: 20 log-spaced per split)")
    p.add_argument("--single-direction", action="store_true",
                   help="train on session 0 and test on session 1 only")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("communities", parents=[common, graph],
                       help="spectral communities of a precision's support graph")
    p.add_argument("precision")
    p.add_argument("--labels", default=None, help="file with one node name per line")
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("integrate", parents=[common],
                       help="integration / mutual-information graph between communities")
    p.add_argument("precision")
    p.add_argument("partition")
    p.add_argument("--labels", default=None)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic cohort")
    p.add_argument("--subjects", type=int, default=5)
    p.add_argument("--variables", type=int, default=20)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--jitter", type=float, default=0.3)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except DimensionMismatch as exc:
        log.error("dimension mismatch: %s", exc)
        return EXIT_DIMENSION
    except (NotPositiveDefinite, ZeroVariance) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (InvalidInput, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except CovselError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
