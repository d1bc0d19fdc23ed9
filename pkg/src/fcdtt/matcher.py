"""Snap GPS fixes onto the corridor and turn fix pairs into path integrals.

Chain position is measured in link units: a fix on segment ``s`` at
parameter ``alpha`` sits at ``s + (1 - alpha)``, so position grows from
0 at the first node to ``N`` at the last.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .exceptions import ValidationError
from .geo import point_to_segment_distance
from .preprocess import GpsFix, Trace

DEFAULT_MAX_SNAP_M = 50.0
DEFAULT_MAX_GAP_S = 600.0
TIE_TOLERANCE_M = 1e-9
# coverage fractions below this are floating-point residue at link boundaries
MIN_FRACTION = 1e-12


@dataclass(frozen=True)
class MatchedFix:
    fix: GpsFix
    segment_id: int
    alpha: float
    snap_distance_m: float

    @property
    def chain_position(self) -> float:
        return self.segment_id + (1.0 - self.alpha)

    def to_json(self) -> dict:
        return {
            "t": self.fix.t,
            "seg": self.segment_id,
            "alpha": self.alpha,
            "snap_m": self.snap_distance_m,
        }


@dataclass(frozen=True)
class PathIntegral:
    t_start: float
    t_end: float
    coverage: dict

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValidationError(f"path integral needs t_end > t_start, got {self.t_start}..{self.t_end}")
        if not self.coverage:
            raise ValidationError("path integral covers no links")
        cov = {int(k): float(v) for k, v in sorted(self.coverage.items(), key=lambda kv: int(kv[0]))}
        ids = list(cov)
        if ids != list(range(ids[0], ids[-1] + 1)):
            raise ValidationError(f"covered links {ids} are not contiguous")
        for k, frac in cov.items():
            if not 0.0 < frac <= 1.0:
                raise ValidationError(f"coverage of link {k} is {frac}, outside (0, 1]")
            if k not in (ids[0], ids[-1]) and frac != 1.0:
                raise ValidationError(f"interior link {k} has partial coverage {frac}")
        object.__setattr__(self, "coverage", cov)

    @property
    def travel_time_s(self) -> float:
        return self.t_end - self.t_start

    def to_json(self, day=None) -> dict:
        doc = {} if day is None else {"day": day}
        doc.update(
            t_start=self.t_start,
            t_end=self.t_end,
            coverage={str(k): v for k, v in self.coverage.items()},
        )
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(doc["t_start"], doc["t_end"], {int(k): float(v) for k, v in doc["coverage"].items()})


def match_point(p, net, max_snap_m=DEFAULT_MAX_SNAP_M):
    """Nearest segment as ``(segment_id, SegmentProjection)``, or None if off-network.

    Every segment is scored; on (near-)ties the lowest id wins.
    """
    best_id, best = None, None
    for seg in net.segments:
        proj = point_to_segment_distance(p, seg.a, seg.b)
        if best is None or proj.distance_m < best.distance_m - TIE_TOLERANCE_M:
            best_id, best = seg.id, proj
    if best.distance_m > max_snap_m:
        return None
    return best_id, best


def match_trace(trace: Trace, net, max_snap_m=DEFAULT_MAX_SNAP_M) -> list[MatchedFix]:
    """Match fixes independently, then keep only forward progress along the chain.

    A fix behind the furthest position reached so far is dropped. Jumps of
    more than one link backward are GPS glitches; smaller ones are jitter.
    Either way the kept positions are nondecreasing.
    """
    out = []
    furthest = -math.inf
    for fix in trace.fixes:
        hit = match_point(fix.pos, net, max_snap_m)
        if hit is None:
            continue
        seg_id, proj = hit
        mf = MatchedFix(fix, seg_id, proj.alpha, proj.distance_m)
        if mf.chain_position < furthest:
            continue
        furthest = mf.chain_position
        out.append(mf)
    return out


def coverage_between(pos_start: float, pos_end: float, n_links: int) -> dict:
    """Fraction of each link traversed between two chain positions."""
    cov = {}
    first = min(int(math.floor(pos_start)), n_links - 1)
    for k in range(max(first, 0), n_links):
        if k >= pos_end:
            break
        frac = min(pos_end, k + 1.0) - max(pos_start, float(k))
        if frac > MIN_FRACTION:
            cov[k] = 1.0 if k > pos_start and k + 1.0 < pos_end else min(frac, 1.0)
    return cov


def build_path_integrals(matched, net, max_gap_s=DEFAULT_MAX_GAP_S) -> list[PathIntegral]:
    paths = []
    for m0, m1 in zip(matched, matched[1:]):
        dt = m1.fix.t - m0.fix.t
        if dt <= 0 or dt > max_gap_s:
            continue
        if m1.chain_position <= m0.chain_position:
            continue
        cov = coverage_between(m0.chain_position, m1.chain_position, net.n_links)
        if not cov:
            continue
        paths.append(PathIntegral(float(m0.fix.t), float(m1.fix.t), cov))
    return paths


def chain_distance_m(coverage: dict, net) -> float:
    return sum(frac * net.segments[k].length_m for k, frac in coverage.items())


def write_matched_jsonl(matched, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in matched:
            fh.write(json.dumps(m.to_json()) + "\n")
