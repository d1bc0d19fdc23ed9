"""Corridor road model: an ordered chain of straight links."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .geo import GeoPoint, geodesic_distance

NODE_TOLERANCE_DEG = 1e-9


@dataclass(frozen=True)
class RoadSegment:
    id: int
    a: GeoPoint
    b: GeoPoint
    length_m: float = field(default=None)

    def __post_init__(self):
        if self.a == self.b:
            raise ValidationError(f"segment {self.id} has zero length")
        length = geodesic_distance(self.a, self.b)
        if self.length_m is None:
            object.__setattr__(self, "length_m", length)
        elif not (self.length_m > 0 and abs(self.length_m - length) <= 1e-3 * length):
            raise ValidationError(
                f"segment {self.id}: stated length {self.length_m} m disagrees "
                f"with endpoint distance {length:.3f} m"
            )


@dataclass(frozen=True)
class RoadNetwork:
    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValidationError("network has no segments")
        for i, seg in enumerate(segs):
            if seg.id != i:
                raise ValidationError(f"segment at position {i} has id {seg.id}; ids must be 0..N-1 in order")
        for i in range(len(segs) - 1):
            b, a = segs[i].b, segs[i + 1].a
            if abs(b.lat - a.lat) > NODE_TOLERANCE_DEG or abs(b.lon - a.lon) > NODE_TOLERANCE_DEG:
                raise ValidationError(
                    f"chain broken at index {i}: segment {i} ends at ({b.lat}, {b.lon}) "
                    f"but segment {i + 1} starts at ({a.lat}, {a.lon})"
                )

    def __len__(self):
        return len(self.segments)

    @property
    def n_links(self) -> int:
        return len(self.segments)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.length_m for s in self.segments])

    @property
    def total_length_m(self) -> float:
        return float(sum(s.length_m for s in self.segments))

    def to_json(self) -> dict:
        return {
            "segments": [
                {"id": s.id, "a": [s.a.lat, s.a.lon], "b": [s.b.lat, s.b.lon]} for s in self.segments
            ]
        }

    @classmethod
    def from_nodes(cls, nodes):
        """Chain through consecutive ``GeoPoint`` nodes."""
        nodes = list(nodes)
        return cls(tuple(RoadSegment(i, nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1)))


def network_from_json(doc) -> RoadNetwork:
    try:
        raw = doc["segments"]
    except (TypeError, KeyError):
        raise ValidationError('network document needs a "segments" array') from None
    if not isinstance(raw, list):
        raise ValidationError('"segments" must be an array')
    segments = []
    for pos, entry in enumerate(raw):
        try:
            a = GeoPoint(float(entry["a"][0]), float(entry["a"][1]))
            b = GeoPoint(float(entry["b"][0]), float(entry["b"][1]))
            seg_id = int(entry.get("id", pos))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ValidationError(f"segment entry {pos} is malformed: {exc}") from None
        # lengths in the file are ignored; coordinates are the source of truth
        segments.append(RoadSegment(seg_id, a, b))
    return RoadNetwork(tuple(segments))


def load_network(path) -> RoadNetwork:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return network_from_json(doc)


def save_network(net: RoadNetwork, path) -> None:
    Path(path).write_text(json.dumps(net.to_json(), indent=1) + "\n", encoding="utf-8")


def build_difference_matrix(net_or_n) -> np.ndarray:
    """First-difference operator ``D`` with ``(D @ theta)[m] = theta[m+1] - theta[m]``.

    Accepts a :class:`RoadNetwork` or a link count. For a single link the
    result has zero rows, so any penalty built from it vanishes.
    """
    n = net_or_n.n_links if isinstance(net_or_n, RoadNetwork) else int(net_or_n)
    if n < 1:
        raise ValidationError("need at least one link")
    D = np.zeros((max(n - 1, 0), n))
    idx = np.arange(n - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D
