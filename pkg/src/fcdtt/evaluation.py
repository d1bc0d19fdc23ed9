"""Hyperparameter selection and the three-way test comparison.

Stage one pools the paths of the first training days and picks the ridge
weight by k-fold cross validation. Stage two picks the lasso weight by
leave-one-out over each day of the second training set. The test stage
holds out each path of each test day in turn and predicts it with the
historic model, the historic model plus that day's lasso deviations, and
the median-backprojection baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, UnobservedLinkError, ValidationError
from .estimator import (
    HistoricModel,
    build_observations,
    lasso_lambda_max,
    predict_backprojected,
    predict_travel_time,
    solve_lasso,
    solve_ridge,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("historic", "historic+incidence", "median_backproject")
Z_95 = 1.96


@dataclass(frozen=True)
class DayBlock:
    day_id: str
    paths: tuple

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ValidationError(f"day {self.day_id} has no paths")


@dataclass(frozen=True)
class CvCurve:
    lambdas: tuple
    errors: tuple
    best_lambda: float

    def to_json(self):
        return {"lambdas": list(self.lambdas), "errors": list(self.errors), "best_lambda": self.best_lambda}


@dataclass(frozen=True)
class AlgorithmScore:
    error_rate: float
    std: float
    n: int
    ci95: tuple

    @classmethod
    def from_errors(cls, errors):
        errors = np.asarray(errors, dtype=np.float64)
        n = errors.size
        if n == 0:
            return cls(math.nan, math.nan, 0, (math.nan, math.nan))
        mean = float(errors.mean())
        std = float(errors.std(ddof=1)) if n > 1 else 0.0
        return cls(mean, std, n, confidence_interval(mean, std, n))

    def to_json(self):
        return {"error_rate": self.error_rate, "std": self.std, "n": self.n, "ci95": list(self.ci95)}


@dataclass(frozen=True)
class PredictionRecord:
    day_id: str
    index: int
    true_s: float
    predicted: dict  # algorithm -> seconds, or None when unavailable


@dataclass(frozen=True)
class EvaluationReport:
    algorithms: dict
    records: tuple = field(default=(), repr=False)

    def to_json(self):
        return {"algorithms": {k: v.to_json() for k, v in self.algorithms.items()}}


def error_rate(predicted, true_tt) -> float:
    """Absolute error as a fraction of the true travel time."""
    if not true_tt > 0:
        raise ValidationError(f"true travel time must be positive, got {true_tt}")
    return abs(predicted - true_tt) / true_tt


def confidence_interval(mean, std, n, z=Z_95):
    half = z * std / math.sqrt(n)
    return (mean - half, mean + half)


def select_best(lambdas, errors) -> float:
    """Arg-min of the CV curve; exact ties go to the larger lambda."""
    best = None
    for lam, err in zip(lambdas, errors):
        if best is None or err < best[1] or (err == best[1] and lam > best[0]):
            best = (lam, err)
    return float(best[0])


def blocks_from_paths(day_paths) -> list[DayBlock]:
    """Group ``(day_id, PathIntegral)`` pairs into day blocks sorted by day."""
    by_day = {}
    for day, path in day_paths:
        by_day.setdefault(day, []).append(path)
    return [DayBlock(day, tuple(sorted(ps, key=lambda p: (p.t_start, p.t_end)))) for day, ps in sorted(by_day.items())]


def random_split(blocks, sizes, seed):
    """Seeded disjoint partition of day blocks into (train1, train2, test)."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or min(sizes) < 0:
        raise ConfigurationError(f"split sizes must be three non-negative counts, got {sizes}")
    if sum(sizes) > len(blocks):
        raise ConfigurationError(f"split sizes {sizes} need {sum(sizes)} days, only {len(blocks)} available")
    ordered = sorted(blocks, key=lambda b: b.day_id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    picked = [ordered[i] for i in perm]
    a, b, c = sizes
    return picked[:a], picked[a:a + b], picked[a + b:a + b + c]


def _map(fn, items, executor):
    if executor is None:
        return [fn(x) for x in items]
    return list(executor.map(fn, items))


def kfold_cv_lambda1(blocks, D, lambda_grid, k=5, seed=0, executor=None):
    """Pick the ridge weight by k-fold CV over pooled paths; refit on everything.

    Returns ``(CvCurve, HistoricModel)``.
    """
    lambdas = tuple(float(x) for x in lambda_grid)
    if not lambdas:
        raise ConfigurationError("lambda1 grid is empty")
    paths = [p for b in blocks for p in b.paths]
    if k < 2:
        raise ConfigurationError("need at least 2 folds")
    if len(paths) < k:
        raise ConfigurationError(f"{len(paths)} paths cannot fill {k} folds")
    obs = build_observations(paths, D.shape[1])
    order = np.random.default_rng(seed).permutation(len(paths))
    folds = np.array_split(order, k)
    if any(f.size == 0 for f in folds):
        raise ConfigurationError("empty CV fold")

    def fold_errors(lam):
        per_fold = []
        for held in folds:
            train = np.setdiff1d(order, held)
            theta = solve_ridge(obs.subset(train), D, lam).theta
            pred = obs.X[held] @ theta
            per_fold.append(float(np.mean(np.abs(pred - obs.Y[held]) / obs.Y[held])))
        return float(np.mean(per_fold))

    errors = tuple(_map(fold_errors, lambdas, executor))
    best = select_best(lambdas, errors)
    return CvCurve(lambdas, errors, best), solve_ridge(obs, D, best)


def _usable_blocks(blocks):
    usable = []
    for b in blocks:
        if len(b.paths) < 2:
            log.warning("day %s has a single path; skipped for leave-one-out", b.day_id)
            continue
        usable.append(b)
    return usable


def _loo_predictions(block, theta, lambda2):
    """Leave-one-out incidence predictions for every path of one day."""
    obs = build_observations(block.paths, theta.shape[0])
    out = []
    for i in range(len(obs)):
        keep = np.arange(len(obs)) != i
        delta = solve_lasso(obs.subset(keep), theta, lambda2).delta
        out.append(float(obs.X[i] @ (theta + delta)))
    return np.array(out), obs.Y


def default_lambda2_grid(blocks, theta, n=25, low=1e-3):
    lam_max = max(lasso_lambda_max(build_observations(b.paths, theta.shape[0]), theta) for b in blocks)
    if lam_max == 0:
        return (0.0,)
    return tuple(float(x) for x in np.geomspace(low * lam_max, lam_max, n))


def default_lambda1_grid(n=25):
    return tuple(float(x) for x in np.geomspace(1e-2, 1e3, n))


def loo_cv_lambda2(blocks, model: HistoricModel, lambda_grid, executor=None) -> CvCurve:
    lambdas = tuple(float(x) for x in lambda_grid)
    if not lambdas:
        raise ConfigurationError("lambda2 grid is empty")
    usable = _usable_blocks(blocks)
    if not usable:
        raise ConfigurationError("no day has enough paths for leave-one-out")
    theta = np.asarray(model.theta, dtype=np.float64)

    def mean_error(lam):
        errs = []
        for b in usable:
            pred, y = _loo_predictions(b, theta, lam)
            errs.extend(np.abs(pred - y) / y)
        return float(np.mean(errs))

    errors = tuple(_map(mean_error, lambdas, executor))
    return CvCurve(lambdas, errors, select_best(lambdas, errors))


def evaluate_test(blocks, model: HistoricModel, lambda2, baseline_theta, executor=None) -> EvaluationReport:
    """Leave-one-out comparison of the three algorithms on test days."""
    theta = np.asarray(model.theta, dtype=np.float64)
    baseline = np.asarray(baseline_theta, dtype=np.float64)
    usable = _usable_blocks(blocks)

    def day_records(block):
        incidence, _ = _loo_predictions(block, theta, lambda2)
        records = []
        for i, path in enumerate(block.paths):
            try:
                base = predict_backprojected(path.coverage, baseline)
            except UnobservedLinkError as exc:
                log.warning("day %s path %d: baseline has no samples for link %d", block.day_id, i, exc.link_id)
                base = None
            records.append(
                PredictionRecord(
                    block.day_id,
                    i,
                    path.travel_time_s,
                    {
                        "historic": predict_travel_time(path.coverage, theta),
                        "historic+incidence": float(incidence[i]),
                        "median_backproject": base,
                    },
                )
            )
        return records

    records = [r for recs in _map(day_records, usable, executor) for r in recs]
    scores = {}
    for name in ALGORITHMS:
        errs = [error_rate(r.predicted[name], r.true_s) for r in records if r.predicted[name] is not None]
        scores[name] = AlgorithmScore.from_errors(errs)
    return EvaluationReport(scores, tuple(records))


def support_scores(delta_hat, delta_true, threshold):
    """Support precision/recall counts for significant deviations.

    A true deviation counts toward recall when ``|delta_true| > threshold``
    and is recalled if the estimate on that link is nonzero. An estimated
    deviation counts toward precision when ``|delta_hat| > threshold`` and
    is correct if the true deviation on that link is nonzero.

    Returns ``(true_positive_recall, n_relevant, true_positive_precision, n_detected)``.
    """
    delta_hat = np.asarray(delta_hat)
    delta_true = np.asarray(delta_true)
    relevant = np.abs(delta_true) > threshold
    detected = np.abs(delta_hat) > threshold
    return (
        int(np.count_nonzero(relevant & (delta_hat != 0))),
        int(np.count_nonzero(relevant)),
        int(np.count_nonzero(detected & (delta_true != 0))),
        int(np.count_nonzero(detected)),
    )
