"""Synthetic corridor, ground-truth link times and probe traces.

All randomness derives from ``SynthConfig.seed`` through named streams
(truth, traces), each further keyed by day and vehicle, so e.g. adding
vehicles per day never changes the ground truth or the other vehicles.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError
from .geo import GeoPoint, destination, interpolate, offset_point
from .network import RoadNetwork, save_network
from .preprocess import GpsFix, Trace, write_traces

STREAM_TRUTH = 0
STREAM_TRACES = 1
LINK_TIME_FLOOR_S = 0.1


@dataclass(frozen=True)
class SynthConfig:
    n_links: int = 30
    link_length_m: float = 160.0
    n_days: int = 22
    paths_per_day: int = 6  # vehicles traversing the corridor each day
    sample_interval_s: int = 150
    gps_noise_sigma_m: float = 10.0
    incident_prob: float = 0.1
    incident_scale_s: float = 10.0
    obs_noise_sigma_s: float = 2.0
    stop_injection_prob: float = 0.0
    seed: int = 0
    base_link_time_s: float = 24.0
    theta_step_frac: float = 0.1
    theta_floor_frac: float = 0.25
    sample_jitter: float = 0.1
    stop_n_max: int = 2
    stop_d_max_m: float = 50.0
    origin_lat: float = 28.55
    origin_lon: float = 77.20
    bearing_deg: float = 30.0
    start_date: str = "2008-04-05"
    window_start_hour: int = 8
    window_length_s: int = 3600

    def __post_init__(self):
        for name in ("n_links", "n_days", "paths_per_day", "sample_interval_s", "window_length_s"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("incident_prob", "stop_injection_prob", "sample_jitter"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        for name in ("link_length_m", "base_link_time_s", "incident_scale_s", "stop_d_max_m"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("gps_noise_sigma_m", "obs_noise_sigma_s", "theta_step_frac", "theta_floor_frac"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.stop_n_max < 2:
            raise ConfigurationError("stop_n_max must be >= 2")
        dt.date.fromisoformat(self.start_date)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown synth settings: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        return asdict(self)

    def day_id(self, day: int) -> str:
        return (dt.date.fromisoformat(self.start_date) + dt.timedelta(days=day)).isoformat()

    def day_start(self, day: int) -> int:
        d = dt.date.fromisoformat(self.start_date) + dt.timedelta(days=day)
        start = dt.datetime(d.year, d.month, d.day, self.window_start_hour, tzinfo=dt.timezone.utc)
        return int(start.timestamp())


@dataclass(frozen=True)
class GroundTruth:
    theta_star: np.ndarray
    delta_star: np.ndarray  # shape (n_days, n_links)

    def day_link_times(self, day: int) -> np.ndarray:
        return self.theta_star + self.delta_star[day]

    def to_json(self, cfg: SynthConfig | None = None) -> dict:
        doc = {"theta_star": self.theta_star.tolist(), "delta_star": self.delta_star.tolist()}
        if cfg is not None:
            doc["days"] = [cfg.day_id(d) for d in range(cfg.n_days)]
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["theta_star"], float), np.asarray(doc["delta_star"], float))


@dataclass(frozen=True)
class VehicleRun:
    trace: Trace
    t_entry: int
    t_exit: float
    link_times: np.ndarray
    stop_times: tuple = ()  # timestamps of injected stationary fixes


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def corridor(cfg: SynthConfig) -> RoadNetwork:
    """Straight great-circle corridor of equal-length links."""
    origin = GeoPoint(cfg.origin_lat, cfg.origin_lon)
    nodes = [destination(origin, cfg.bearing_deg, k * cfg.link_length_m) for k in range(cfg.n_links + 1)]
    return RoadNetwork.from_nodes(nodes)


def generate_truth(cfg: SynthConfig):
    rng = stream(cfg.seed, STREAM_TRUTH)
    n = cfg.n_links
    base = cfg.base_link_time_s
    floor = max(cfg.theta_floor_frac * base, LINK_TIME_FLOOR_S)
    theta = np.empty(n)
    theta[0] = base
    steps = rng.normal(0.0, cfg.theta_step_frac * base, size=n - 1)
    for k in range(1, n):
        theta[k] = max(theta[k - 1] + steps[k - 1], floor)

    hit = rng.random((cfg.n_days, n)) < cfg.incident_prob
    size = rng.laplace(0.0, cfg.incident_scale_s, size=(cfg.n_days, n))
    delta = np.where(hit, size, 0.0)
    # keep every day's link time above the physical floor
    delta = np.where(hit, np.maximum(delta, LINK_TIME_FLOOR_S - theta), 0.0)
    return corridor(cfg), GroundTruth(theta, delta)


def vehicle_link_times(truth: GroundTruth, day: int, cfg: SynthConfig, rng) -> np.ndarray:
    # per-link noise scaled so an end-to-end traversal has std obs_noise_sigma_s
    n = truth.theta_star.shape[0]
    noise = rng.normal(0.0, cfg.obs_noise_sigma_s / math.sqrt(n), size=n)
    return np.maximum(truth.day_link_times(day) + noise, LINK_TIME_FLOOR_S)


def _position(net, cum, link_times, m):
    k = int(np.searchsorted(cum, m, side="right")) - 1
    k = min(max(k, 0), net.n_links - 1)
    frac = min(max((m - cum[k]) / link_times[k], 0.0), 1.0)
    seg = net.segments[k]
    return interpolate(seg.a, seg.b, 1.0 - frac)


def _gps(p, sigma, rng):
    east, north = rng.normal(0.0, 1.0, size=2) * sigma
    if sigma == 0:
        return p
    return offset_point(p, east, north)


def simulate_vehicle(net, truth, day, vehicle, cfg: SynthConfig) -> VehicleRun:
    rng = stream(cfg.seed, STREAM_TRACES, day, vehicle)
    link_times = vehicle_link_times(truth, day, cfg, rng)
    cum = np.concatenate([[0.0], np.cumsum(link_times)])
    total = float(cum[-1])
    interval = int(cfg.sample_interval_s)
    t_entry = cfg.day_start(day) + int(rng.integers(0, cfg.window_length_s))
    phase = int(rng.integers(0, interval))
    inject = rng.random() < cfg.stop_injection_prob
    n_expected = int((total - phase) // interval) + 1
    stop_at = int(rng.integers(1, n_expected - 1)) if inject and n_expected >= 3 else -1
    vid = f"d{day:03d}v{vehicle:03d}"

    def next_step():
        if cfg.sample_jitter == 0:
            return interval
        return max(1, int(round(interval * rng.uniform(1 - cfg.sample_jitter, 1 + cfg.sample_jitter))))

    fixes = []
    stop_times = []
    wall = t_entry + phase
    stopped = 0
    k = 0
    while wall - t_entry - stopped <= total:
        m = wall - t_entry - stopped
        true_pos = _position(net, cum, link_times, m)
        if k == stop_at:
            # stationary dwell: n_max + 2 fixes within d_max/4 of the stop point
            t0 = wall
            for i in range(cfg.stop_n_max + 2):
                if i:
                    wall += next_step()
                r = 0.25 * cfg.stop_d_max_m * math.sqrt(rng.random())
                ang = 2 * math.pi * rng.random()
                p = offset_point(true_pos, r * math.cos(ang), r * math.sin(ang))
                fixes.append(GpsFix(wall, p, vid))
                stop_times.append(wall)
            stopped += wall - t0
        else:
            fixes.append(GpsFix(wall, _gps(true_pos, cfg.gps_noise_sigma_m, rng), vid))
        wall += next_step()
        k += 1
    return VehicleRun(Trace(vid, tuple(fixes)), t_entry, t_entry + stopped + total, link_times, tuple(stop_times))


def simulate_day(net, truth, day, cfg: SynthConfig) -> list[VehicleRun]:
    if not 0 <= day < cfg.n_days:
        raise ConfigurationError(f"day {day} outside 0..{cfg.n_days - 1}")
    return [simulate_vehicle(net, truth, day, v, cfg) for v in range(cfg.paths_per_day)]


def generate_day_traces(net, truth, day, cfg: SynthConfig) -> list[Trace]:
    return [run.trace for run in simulate_day(net, truth, day, cfg)]


def write_dataset(cfg: SynthConfig, out_dir, log=None):
    """Write network, truth and one trace CSV per day under ``out_dir``."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    net, truth = generate_truth(cfg)
    save_network(net, out / "network.json")
    (out / "truth.json").write_text(json.dumps(truth.to_json(cfg)) + "\n", encoding="utf-8")
    for day in range(cfg.n_days):
        traces = generate_day_traces(net, truth, day, cfg)
        write_traces(traces, out / "traces" / f"{cfg.day_id(day)}.csv")
        if log is not None:
            n_inc = int(np.count_nonzero(truth.delta_star[day]))
            log(f"{cfg.day_id(day)}: {len(traces)} vehicles, {sum(len(t) for t in traces)} fixes, {n_inc} incident links")
    return net, truth


def expected_pairs_per_vehicle(truth: GroundTruth, cfg: SynthConfig) -> float:
    """Mean number of consecutive-fix pairs one end-to-end traversal yields."""
    transit = float(truth.theta_star.sum())
    return max(transit / cfg.sample_interval_s - 0.5, 0.0)


def calibrate_vehicles(cfg: SynthConfig, target_paths_per_day: float = 26.8) -> SynthConfig:
    """Copy of ``cfg`` with enough vehicles per day to yield about the target path count."""
    _, truth = generate_truth(cfg)
    per_vehicle = expected_pairs_per_vehicle(truth, cfg)
    vehicles = max(1, int(round(target_paths_per_day / per_vehicle))) if per_vehicle > 0 else 1
    return replace(cfg, paths_per_day=vehicles)
