"""End-to-end stages: traces to path integrals, two-stage training, testing."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from .estimator import HistoricModel, backprojection_samples, build_observations, _medians
from .evaluation import (
    default_lambda1_grid,
    default_lambda2_grid,
    evaluate_test,
    kfold_cv_lambda1,
    loo_cv_lambda2,
    random_split,
)
from .exceptions import ConfigurationError
from .matcher import DEFAULT_MAX_GAP_S, DEFAULT_MAX_SNAP_M, PathIntegral, build_path_integrals, match_trace
from .network import build_difference_matrix
from .preprocess import StopDetectorConfig, clean_trace


def day_of(t) -> str:
    return dt.datetime.fromtimestamp(t, tz=dt.timezone.utc).date().isoformat()


def hour_of(t) -> float:
    d = dt.datetime.fromtimestamp(t, tz=dt.timezone.utc)
    return d.hour + d.minute / 60 + d.second / 3600


@dataclass(frozen=True)
class PreprocessSettings:
    stop: StopDetectorConfig = field(default_factory=StopDetectorConfig)
    max_snap_m: float = DEFAULT_MAX_SNAP_M
    max_gap_s: float = DEFAULT_MAX_GAP_S
    window: tuple | None = None  # (start_hour, end_hour) UTC, applied to t_start


@dataclass
class TraceResult:
    paths: list
    matched: list
    n_raw: int


def process_trace(trace, net, settings: PreprocessSettings) -> TraceResult:
    paths, matched = [], []
    for piece in clean_trace(trace, settings.stop):
        m = match_trace(piece, net, settings.max_snap_m)
        matched.extend(m)
        paths.extend(build_path_integrals(m, net, settings.max_gap_s))
    if settings.window is not None:
        lo, hi = settings.window
        paths = [p for p in paths if lo <= hour_of(p.t_start) < hi]
    return TraceResult(paths, matched, len(trace.fixes))


def preprocess_traces(traces, net, settings: PreprocessSettings, executor=None):
    """Clean, match and cut traces; returns ``(day_paths, matched, raw_counts)``.

    ``day_paths`` is a list of ``(day_id, PathIntegral)`` in trace order and
    ``raw_counts`` maps day id to the number of raw fixes seen that day.
    """
    def run(trace):
        return process_trace(trace, net, settings)

    results = list(executor.map(run, traces)) if executor is not None else [run(t) for t in traces]
    day_paths, matched = [], []
    raw_counts = {}
    for trace, res in zip(traces, results):
        for f in trace.fixes:
            day = day_of(f.t)
            raw_counts[day] = raw_counts.get(day, 0) + 1
        day_paths.extend((day_of(p.t_start), p) for p in res.paths)
        matched.extend(res.matched)
    return day_paths, matched, raw_counts


def count_summary(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"min": 0, "max": 0, "mean": 0.0, "std": 0.0}
    return {"min": int(v.min()), "max": int(v.max()), "mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


def statistics_table(raw_counts, day_paths) -> str:
    per_day = {}
    for day, _ in day_paths:
        per_day[day] = per_day.get(day, 0) + 1
    days = sorted(raw_counts)
    rows = [
        ("Raw Data in Sector", count_summary([raw_counts[d] for d in days])),
        ("Processed Path Integrals", count_summary([per_day.get(d, 0) for d in days])),
    ]
    lines = [f"{'min':>6} {'max':>6} {'mean':>8} {'std':>8}  ({len(days)} days)"]
    for label, s in rows:
        lines.append(f"{s['min']:>6} {s['max']:>6} {s['mean']:>8.1f} {s['std']:>8.1f}  {label}")
    return "\n".join(lines)


def write_paths_jsonl(day_paths, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for day, p in day_paths:
            fh.write(json.dumps(p.to_json(day)) + "\n")


def read_paths_jsonl(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                out.append((doc["day"], PathIntegral.from_json(doc)))
    return out


# -- training and testing -----------------------------------------------------

@dataclass(frozen=True)
class ProtocolSettings:
    split: tuple = (10, 6, 6)
    folds: int = 5
    lambda1_grid: tuple | None = None
    lambda2_grid: tuple | None = None
    lambda2_override: float | None = None


@dataclass
class TrainResult:
    seed: int
    train1: list
    train2: list
    test: list
    cv1: object
    model: HistoricModel
    cv2: object
    lambda2: float
    baseline: np.ndarray

    def split_manifest(self) -> dict:
        return {
            "seed": self.seed,
            "train1": [b.day_id for b in self.train1],
            "train2": [b.day_id for b in self.train2],
            "test": [b.day_id for b in self.test],
        }

    def model_json(self) -> dict:
        return {
            "theta": self.model.theta.tolist(),
            "lambda1": self.model.lambda1,
            "lambda2": self.lambda2,
            "n_links": self.model.n_links,
            "clamped_links": list(self.model.clamped_links),
            "baseline_theta": [None if np.isnan(x) else float(x) for x in self.baseline],
            "cv_lambda1": self.cv1.to_json(),
            "cv_lambda2": None if self.cv2 is None else self.cv2.to_json(),
            "seed": self.seed,
        }


def fit_baseline(blocks, net) -> np.ndarray:
    paths = [p for b in blocks for p in b.paths]
    obs = build_observations(paths, net.n_links)
    return _medians(backprojection_samples(obs.X, obs.Y, net.lengths))


def train(blocks, net, settings: ProtocolSettings, seed, executor=None) -> TrainResult:
    train1, train2, test = random_split(blocks, settings.split, seed)
    if not train1:
        raise ConfigurationError("the first training set needs at least one day")
    D = build_difference_matrix(net)
    grid1 = settings.lambda1_grid or default_lambda1_grid()
    cv1, model = kfold_cv_lambda1(train1, D, grid1, k=settings.folds, seed=seed, executor=executor)
    cv2 = None
    if settings.lambda2_override is not None:
        lambda2 = float(settings.lambda2_override)
    else:
        if not train2:
            raise ConfigurationError("the second training set needs at least one day to select lambda2")
        grid2 = settings.lambda2_grid or default_lambda2_grid(train2, model.theta)
        cv2 = loo_cv_lambda2(train2, model, grid2, executor=executor)
        lambda2 = cv2.best_lambda
    return TrainResult(seed, train1, train2, test, cv1, model, cv2, lambda2, fit_baseline(train1, net))


def run_protocol(blocks, net, settings: ProtocolSettings, seed, executor=None):
    result = train(blocks, net, settings, seed, executor)
    report = evaluate_test(result.test, result.model, result.lambda2, result.baseline, executor)
    return result, report
