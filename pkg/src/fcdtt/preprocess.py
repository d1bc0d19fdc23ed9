"""Trace ingestion and stop removal.

A stop is a run of consecutive fixes each lying within ``d_max_m`` of its
predecessor. Runs longer than ``n_max`` fixes are labelled invalid in their
entirety; everything else is valid motion.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ValidationError
from .geo import GeoPoint, geodesic_distance

TRACE_HEADER = ("vehicle_id", "timestamp", "lat", "lon")


@dataclass(frozen=True)
class GpsFix:
    t: int
    pos: GeoPoint
    vehicle_id: str

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise ValidationError(f"timestamp {self.t} must be positive and finite")


@dataclass(frozen=True)
class Trace:
    vehicle_id: str
    fixes: tuple

    def __post_init__(self):
        fixes = tuple(self.fixes)
        object.__setattr__(self, "fixes", fixes)
        for prev, cur in zip(fixes, fixes[1:]):
            if cur.t <= prev.t:
                raise ValidationError(f"vehicle {self.vehicle_id}: timestamps not strictly increasing at t={cur.t}")
        for f in fixes:
            if f.vehicle_id != self.vehicle_id:
                raise ValidationError(f"fix from {f.vehicle_id} inside trace of {self.vehicle_id}")

    def __len__(self):
        return len(self.fixes)


@dataclass(frozen=True)
class StopDetectorConfig:
    d_max_m: float = 50.0
    n_max: int = 2

    def __post_init__(self):
        if not self.d_max_m > 0:
            raise ValidationError("d_max_m must be positive")
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ValidationError("n_max must be an integer >= 2")


def parse_traces(path) -> list[Trace]:
    """Read a ``vehicle_id,timestamp,lat,lon`` CSV into one trace per vehicle."""
    by_vehicle = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ParseError(f"expected header {','.join(TRACE_HEADER)}, got {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            vid = row[0].strip()
            try:
                t = int(row[1])
                lat = float(row[2])
                lon = float(row[3])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            try:
                fix = GpsFix(t, GeoPoint(lat, lon), vid)
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if t in by_vehicle[vid]:
                raise ParseError(f"duplicate fix for vehicle {vid} at t={t}", line=lineno)
            by_vehicle[vid][t] = fix
    return [
        Trace(vid, tuple(fixes[t] for t in sorted(fixes)))
        for vid, fixes in sorted(by_vehicle.items())
    ]


def write_traces(traces, path, decimals=10) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for trace in traces:
            for f in trace.fixes:
                writer.writerow([f.vehicle_id, int(f.t), f"{f.pos.lat:.{decimals}f}", f"{f.pos.lon:.{decimals}f}"])


def detect_stops(trace: Trace, cfg: StopDetectorConfig) -> np.ndarray:
    """Boolean mask, True where a fix is valid motion."""
    n = len(trace.fixes)
    valid = np.ones(n, dtype=bool)
    run_start = 0
    for i in range(1, n + 1):
        continues = i < n and geodesic_distance(trace.fixes[i - 1].pos, trace.fixes[i].pos) < cfg.d_max_m
        if continues:
            continue
        if i - run_start > cfg.n_max:
            valid[run_start:i] = False
        run_start = i
    return valid


def split_at_stops(trace: Trace, labels) -> list[Trace]:
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (len(trace.fixes),):
        raise ValidationError(f"{labels.size} labels for {len(trace.fixes)} fixes")
    pieces = []
    current = []
    for fix, ok in zip(trace.fixes, labels):
        if ok:
            current.append(fix)
            continue
        if len(current) >= 2:
            pieces.append(Trace(trace.vehicle_id, tuple(current)))
        current = []
    if len(current) >= 2:
        pieces.append(Trace(trace.vehicle_id, tuple(current)))
    return pieces


def clean_trace(trace: Trace, cfg: StopDetectorConfig) -> list[Trace]:
    return split_at_stops(trace, detect_stops(trace, cfg))
