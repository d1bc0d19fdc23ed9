import json

import numpy as np
import pytest

from fcdtt.exceptions import ConfigurationError
from fcdtt.geo import geodesic_distance
from fcdtt.matcher import match_point
from fcdtt.network import load_network
from fcdtt.preprocess import StopDetectorConfig, detect_stops, parse_traces
from fcdtt.synth import (
    LINK_TIME_FLOOR_S,
    GroundTruth,
    SynthConfig,
    calibrate_vehicles,
    expected_pairs_per_vehicle,
    generate_day_traces,
    generate_truth,
    simulate_day,
    simulate_vehicle,
    write_dataset,
)

QUIET = dict(gps_noise_sigma_m=0.0, obs_noise_sigma_s=0.0, stop_injection_prob=0.0, sample_jitter=0.0)


def test_no_incidents():
    _, truth = generate_truth(SynthConfig(incident_prob=0.0, n_days=5))
    assert not truth.delta_star.any()


def test_truth_deterministic():
    cfg = SynthConfig(seed=11)
    (n1, t1), (n2, t2) = generate_truth(cfg), generate_truth(cfg)
    assert n1 == n2
    np.testing.assert_array_equal(t1.theta_star, t2.theta_star)
    np.testing.assert_array_equal(t1.delta_star, t2.delta_star)


def test_incident_sparsity_within_binomial_band():
    _, truth = generate_truth(SynthConfig(n_links=50, n_days=200, incident_prob=0.1, seed=3))
    per_day = np.count_nonzero(truth.delta_star, axis=1)
    assert 3.0 <= per_day.mean() <= 7.0


def test_truth_positivity_and_floor():
    for seed in range(10):
        _, truth = generate_truth(SynthConfig(seed=seed, incident_scale_s=40.0, incident_prob=0.3))
        assert np.all(truth.theta_star > 0)
        assert np.all(truth.theta_star + truth.delta_star >= LINK_TIME_FLOOR_S - 1e-12)


def test_truth_changes_with_seed_only():
    _, a = generate_truth(SynthConfig(seed=1, paths_per_day=3))
    _, b = generate_truth(SynthConfig(seed=1, paths_per_day=9))
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    np.testing.assert_array_equal(a.delta_star, b.delta_star)


def test_adding_vehicles_keeps_existing_traces():
    cfg = SynthConfig(seed=5, paths_per_day=2)
    net, truth = generate_truth(cfg)
    few = generate_day_traces(net, truth, 1, cfg)
    more = generate_day_traces(net, truth, 1, SynthConfig(seed=5, paths_per_day=4))
    assert few == more[:2]


def test_noise_free_traces_lie_on_corridor():
    cfg = SynthConfig(seed=2, **QUIET)
    net, truth = generate_truth(cfg)
    for run in simulate_day(net, truth, 0, cfg):
        t = [f.t for f in run.trace.fixes]
        assert set(np.diff(t)) == {cfg.sample_interval_s}
        for f in run.trace.fixes:
            assert match_point(f.pos, net)[1].distance_m < 1e-6


def test_noise_free_duration_is_sum_of_link_times():
    cfg = SynthConfig(seed=2, incident_prob=0.3, **QUIET)
    net, truth = generate_truth(cfg)
    for day in range(3):
        run = simulate_vehicle(net, truth, day, 0, cfg)
        np.testing.assert_array_equal(run.link_times, truth.day_link_times(day))
        # absolute timestamps near 1.2e9 s carry ~1e-7 s of float resolution
        assert run.t_exit - run.t_entry == pytest.approx(truth.day_link_times(day).sum(), abs=1e-6)


def test_end_to_end_noise_std():
    cfg = SynthConfig(obs_noise_sigma_s=5.0, gps_noise_sigma_m=0.0, n_days=1, seed=9)
    net, truth = generate_truth(cfg)
    durations = [simulate_vehicle(net, truth, 0, v, cfg).t_exit - simulate_vehicle(net, truth, 0, v, cfg).t_entry
                 for v in range(500)]
    assert np.std(durations, ddof=1) == pytest.approx(5.0, abs=1.0)


def test_injected_stop_cluster_geometry():
    cfg = SynthConfig(seed=4, stop_injection_prob=1.0, gps_noise_sigma_m=0.0)
    net, truth = generate_truth(cfg)
    run = simulate_vehicle(net, truth, 0, 0, cfg)
    stop = [f for f in run.trace.fixes if f.t in run.stop_times]
    assert len(stop) == cfg.stop_n_max + 2
    centre = stop[0].pos
    assert max(geodesic_distance(centre, f.pos) for f in stop) <= cfg.stop_d_max_m / 2
    labels = detect_stops(run.trace, StopDetectorConfig(cfg.stop_d_max_m, cfg.stop_n_max))
    invalid = {f.t for f, ok in zip(run.trace.fixes, labels) if not ok}
    assert invalid == set(run.stop_times)


@pytest.mark.parametrize(
    "kw", [dict(n_links=0), dict(incident_prob=1.5), dict(incident_scale_s=0.0), dict(stop_n_max=1)]
)
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        SynthConfig(**kw)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        SynthConfig.from_dict({"n_linkz": 3})
    assert SynthConfig.from_dict({"n_links": 3}).n_links == 3


def test_calibration_targets_path_count():
    cfg = calibrate_vehicles(SynthConfig(seed=0), 26.8)
    _, truth = generate_truth(cfg)
    per_vehicle = expected_pairs_per_vehicle(truth, cfg)
    assert abs(cfg.paths_per_day * per_vehicle - 26.8) <= per_vehicle / 2 + 1e-9


def test_write_dataset(tmp_path):
    cfg = SynthConfig(n_days=3, seed=1)
    net, truth = write_dataset(cfg, tmp_path)
    assert load_network(tmp_path / "network.json") == net
    doc = json.loads((tmp_path / "truth.json").read_text())
    back = GroundTruth.from_json(doc)
    np.testing.assert_array_equal(back.theta_star, truth.theta_star)
    assert doc["days"] == ["2008-04-05", "2008-04-06", "2008-04-07"]
    files = sorted(p.name for p in (tmp_path / "traces").iterdir())
    assert files == [f"{d}.csv" for d in doc["days"]]
    traces = parse_traces(tmp_path / "traces" / files[0])
    assert len(traces) == cfg.paths_per_day
