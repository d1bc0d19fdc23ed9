from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from fcdtt.pipeline import (
    PreprocessSettings,
    ProtocolSettings,
    count_summary,
    preprocess_traces,
    read_paths_jsonl,
    run_protocol,
    statistics_table,
    write_paths_jsonl,
)
from fcdtt.evaluation import blocks_from_paths
from fcdtt.synth import SynthConfig, generate_truth, simulate_day

QUIET = dict(gps_noise_sigma_m=0.0, obs_noise_sigma_s=0.0, stop_injection_prob=0.0, sample_jitter=0.0)


def day_runs(cfg, day=0):
    net, truth = generate_truth(cfg)
    return net, truth, simulate_day(net, truth, day, cfg)


def test_noise_free_pair_count_matches_sampling():
    cfg = SynthConfig(seed=6, paths_per_day=8, **QUIET)
    net, truth, runs = day_runs(cfg)
    expected = 0
    for run in runs:
        phase = run.trace.fixes[0].t - run.t_entry
        expected += int((truth.day_link_times(0).sum() - phase) // cfg.sample_interval_s)
    day_paths, _, _ = preprocess_traces([r.trace for r in runs], net, PreprocessSettings())
    assert len(day_paths) == expected


def test_noise_free_paths_are_exact_sums():
    cfg = SynthConfig(seed=6, paths_per_day=4, incident_prob=0.3, **QUIET)
    net, truth, runs = day_runs(cfg, day=2)
    day_paths, _, _ = preprocess_traces([r.trace for r in runs], net, PreprocessSettings())
    link_times = truth.day_link_times(2)
    for _, p in day_paths:
        pred = sum(f * link_times[k] for k, f in p.coverage.items())
        assert pred == pytest.approx(p.travel_time_s, rel=1e-6)


def test_stop_fixes_never_reach_path_integrals():
    cfg = SynthConfig(seed=8, paths_per_day=10, stop_injection_prob=1.0, gps_noise_sigma_m=0.0)
    net, _, runs = day_runs(cfg)
    day_paths, _, _ = preprocess_traces([r.trace for r in runs], net, PreprocessSettings())
    stop_times = {t for r in runs for t in r.stop_times}
    assert stop_times
    assert all(p.t_start not in stop_times and p.t_end not in stop_times for _, p in day_paths)


@pytest.mark.filterwarnings("ignore::sklearn.exceptions.ConvergenceWarning")
def test_threads_do_not_change_results():
    cfg = SynthConfig(seed=1, n_days=6, paths_per_day=3)
    net, truth = generate_truth(cfg)
    traces = [r.trace for d in range(cfg.n_days) for r in simulate_day(net, truth, d, cfg)]
    serial = preprocess_traces(traces, net, PreprocessSettings())
    with ThreadPoolExecutor(4) as pool:
        parallel = preprocess_traces(traces, net, PreprocessSettings(), pool)
    assert serial[0] == parallel[0] and serial[2] == parallel[2]
    blocks = blocks_from_paths(serial[0])
    settings = ProtocolSettings(split=(3, 2, 1), folds=3)
    res_a, rep_a = run_protocol(blocks, net, settings, 0)
    with ThreadPoolExecutor(4) as pool:
        res_b, rep_b = run_protocol(blocks, net, settings, 0, pool)
    assert res_a.model_json() == res_b.model_json()
    assert rep_a.to_json() == rep_b.to_json()


def test_paths_jsonl_round_trip(tmp_path):
    cfg = SynthConfig(seed=1, n_days=2, paths_per_day=2)
    net, truth = generate_truth(cfg)
    traces = [r.trace for d in range(2) for r in simulate_day(net, truth, d, cfg)]
    day_paths, _, _ = preprocess_traces(traces, net, PreprocessSettings())
    write_paths_jsonl(day_paths, tmp_path / "p.jsonl")
    assert read_paths_jsonl(tmp_path / "p.jsonl") == day_paths


def test_statistics_table_layout():
    table = statistics_table({"d1": 10, "d2": 20}, [("d1", None)] * 4 + [("d2", None)] * 6)
    lines = table.splitlines()
    assert lines[1].split()[:4] == ["10", "20", "15.0", "7.1"]
    assert lines[1].endswith("Raw Data in Sector")
    assert lines[2].split()[:4] == ["4", "6", "5.0", "1.4"]
    assert lines[2].endswith("Processed Path Integrals")


def test_count_summary_empty():
    assert count_summary([]) == {"min": 0, "max": 0, "mean": 0.0, "std": 0.0}
    assert count_summary([3])["std"] == 0.0
    assert count_summary([1, 2, 3])["std"] == pytest.approx(np.std([1, 2, 3], ddof=1))
