"""Tag normalization and fixed-width binary encoding of road segments.

The default schema covers ten tag keys with 88 columns total. Numeric keys
(maxspeed, lanes, width) bin by half-open intervals [lo, hi); categorical
keys match lowercased values against per-bin match lists, falling back to
the key's `other` bin. A key missing from a segment contributes all-zero
columns, so every key is at most one-hot.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .roads import RoadNetwork, RoadSegment

SCHEMA_VERSION = "1"

MPH_TO_KMH = 1.609344

_NUMERIC_KEYS = ("maxspeed", "lanes", "width")


@dataclass(frozen=True)
class Bin:
    """One output column: a named value bin of a tag key."""

    name: str
    match: tuple[str, ...] | None = None
    lo: float | None = None
    hi: float | None = None

    @property
    def is_interval(self) -> bool:
        return self.lo is not None or self.hi is not None

    def contains(self, value: float) -> bool:
        lo = -math.inf if self.lo is None else self.lo
        hi = math.inf if self.hi is None else self.hi
        return lo <= value < hi


@dataclass
class KeySchema:
    key: str
    bins: list[Bin]

    @property
    def other_index(self) -> int | None:
        for idx, b in enumerate(self.bins):
            if b.name == "other":
                return idx
        return None


@dataclass
class FeatureSchema:
    version: str
    keys: list[KeySchema]

    def __post_init__(self) -> None:
        self._index: dict[tuple[str, str], int] = {}
        col = 0
        for ks in self.keys:
            names = [b.name for b in ks.bins]
            if len(set(names)) != len(names):
                raise DataError(f"duplicate bin names for key {ks.key!r}")
            if "other" in names and names[-1] != "other":
                raise DataError(f"`other` bin must be last for key {ks.key!r}")
            for b in ks.bins:
                self._index[(ks.key, b.name)] = col
                col += 1
        self._width = col

    @property
    def width(self) -> int:
        return self._width

    @property
    def key_names(self) -> list[str]:
        return [ks.key for ks in self.keys]

    def columns(self) -> list[str]:
        return [f"{ks.key}:{b.name}" for ks in self.keys for b in ks.bins]

    def column_index(self, key: str, bin_name: str) -> int:
        return self._index[(key, bin_name)]

    def normalize(self, key: str, raw: str) -> str | None:
        """Bin name for a raw tag value, or None when unrecognized."""
        ks = next((k for k in self.keys if k.key == key), None)
        if ks is None:
            raise KeyError(f"key {key!r} is not in the schema")
        if key in _NUMERIC_KEYS:
            value = _parse_numeric(key, raw)
            if value is None:
                return None
            for b in ks.bins:
                if b.is_interval and b.contains(value):
                    return b.name
            return "other" if ks.other_index is not None else None
        lowered = raw.strip().lower()
        for b in ks.bins:
            if b.match and lowered in b.match:
                return b.name
        return "other" if ks.other_index is not None else None

    def to_dict(self) -> dict:
        keys = []
        for ks in self.keys:
            bins = []
            for b in ks.bins:
                if b.is_interval:
                    bins.append({"name": b.name, "lo": b.lo, "hi": b.hi})
                elif b.match is not None:
                    bins.append({"name": b.name, "match": list(b.match)})
                else:
                    bins.append({"name": b.name})
            keys.append({"key": ks.key, "bins": bins})
        return {"version": self.version, "keys": keys}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        keys = []
        for kd in doc["keys"]:
            bins = []
            for bd in kd["bins"]:
                bins.append(
                    Bin(
                        name=bd["name"],
                        match=tuple(bd["match"]) if "match" in bd else None,
                        lo=bd.get("lo"),
                        hi=bd.get("hi"),
                    )
                )
            keys.append(KeySchema(key=kd["key"], bins=bins))
        return cls(version=str(doc["version"]), keys=keys)


def _categorical(key: str, names: list[str], extra: dict[str, list[str]] | None = None) -> KeySchema:
    extra = extra or {}
    bins = []
    for name in names:
        matches = [name] + extra.get(name, [])
        bins.append(Bin(name=name, match=tuple(matches)))
    bins.append(Bin(name="other"))
    return KeySchema(key=key, bins=bins)


def _intervals(key: str, names: list[str], edges: list[float], with_other: bool) -> KeySchema:
    """Interval bins from edges; len(edges) == len(names) leaves the last bin
    open above, len(names) + 1 closes it (values beyond fall to `other`)."""
    bins = []
    for idx, name in enumerate(names):
        lo = edges[idx]
        hi = edges[idx + 1] if idx + 1 < len(edges) else None
        bins.append(Bin(name=name, lo=lo, hi=hi))
    if with_other:
        bins.append(Bin(name="other"))
    return KeySchema(key=key, bins=bins)


def default_schema() -> FeatureSchema:
    """The pinned 88-column schema (3+17+16+13+8+4+4+6+4+13)."""
    oneway = KeySchema(
        key="oneway",
        bins=[
            Bin(name="yes", match=("yes", "true", "1")),
            Bin(name="no", match=("no", "false", "0")),
            Bin(name="reversed", match=("-1", "reverse")),
        ],
    )
    highway = _categorical(
        "highway",
        [
            "motorway", "trunk", "primary", "secondary", "tertiary",
            "unclassified", "residential", "living_street", "service", "road",
            "motorway_link", "trunk_link", "primary_link", "secondary_link",
            "tertiary_link", "track",
        ],
    )
    surface = _categorical(
        "surface",
        [
            "asphalt", "paved", "concrete", "concrete_plates", "paving_stones",
            "sett", "cobblestone", "unpaved", "compacted", "gravel",
            "fine_gravel", "ground", "dirt", "grass", "sand",
        ],
        extra={"concrete_plates": ["concrete:plates"]},
    )
    speeds = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120]
    speed_edges = [0.0] + [(a + b) / 2.0 for a, b in zip(speeds, speeds[1:])]
    maxspeed = _intervals("maxspeed", [str(s) for s in speeds], speed_edges, with_other=True)
    lanes = _intervals(
        "lanes",
        [str(v) for v in range(1, 8)] + ["8+"],
        [float(v) for v in range(1, 9)],
        with_other=False,
    )
    bridge = _categorical("bridge", ["yes", "viaduct", "movable"])
    junction = _categorical("junction", ["roundabout", "circular", "jughandle"])
    access = _categorical("access", ["yes", "permissive", "no", "private", "destination"])
    tunnel = _categorical("tunnel", ["yes", "building_passage", "culvert"])
    width = _intervals(
        "width",
        [str(v) for v in range(1, 13)],
        [v - 0.5 for v in range(1, 14)],
        with_other=True,
    )
    return FeatureSchema(
        version=SCHEMA_VERSION,
        keys=[oneway, highway, surface, maxspeed, lanes, bridge, junction, access, tunnel, width],
    )


# Driveable filter default: the named highway bins, i.e. everything but `other`.
DEFAULT_DRIVEABLE_HIGHWAYS = frozenset(
    b.name for b in default_schema().keys[1].bins if b.name != "other"
)


_MPH_RE = re.compile(r"^\s*(\d+(?:[.,]\d+)?)\s*mph\s*$", re.IGNORECASE)
_KMH_RE = re.compile(r"^\s*(\d+(?:[.,]\d+)?)\s*(?:km/h|kmh|kph)?\s*$", re.IGNORECASE)
_WIDTH_RE = re.compile(r"^\s*(\d+(?:[.,]\d+)?)\s*m?\s*$", re.IGNORECASE)
_INT_RE = re.compile(r"^\s*(\d+)\s*$")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _parse_numeric(key: str, raw: str) -> float | None:
    """Consolidated numeric value for a tag, or None when unparseable.

    maxspeed comes out in km/h (mph converted at 1.609344 and rounded half
    up, `walk` treated as 10), width in whole meters (rounded half up,
    decimal comma accepted), lanes as a strict integer. Nonpositive values
    are rejected.
    """
    if key == "maxspeed":
        if raw.strip().lower() == "walk":
            return 10.0
        m = _MPH_RE.match(raw)
        if m:
            mph = float(m.group(1).replace(",", "."))
            if mph <= 0:
                return None
            return float(_round_half_up(mph * MPH_TO_KMH))
        m = _KMH_RE.match(raw)
        if m:
            kmh = float(m.group(1).replace(",", "."))
            return kmh if kmh > 0 else None
        return None
    if key == "width":
        m = _WIDTH_RE.match(raw)
        if not m:
            return None
        meters = float(m.group(1).replace(",", "."))
        if meters <= 0:
            return None
        rounded = _round_half_up(meters)
        return float(rounded) if rounded > 0 else None
    if key == "lanes":
        m = _INT_RE.match(raw)
        if not m:
            return None
        n = int(m.group(1))
        return float(n) if n > 0 else None
    raise KeyError(key)


def normalize_tag(key: str, raw: str) -> str | None:
    """Normalize against the default schema (None = unrecognized)."""
    return default_schema().normalize(key, raw)


def encode_segment(seg: RoadSegment, schema: FeatureSchema) -> np.ndarray:
    """Binary feature vector of length schema.width (uint8)."""
    bits = np.zeros(schema.width, dtype=np.uint8)
    for ks in schema.keys:
        raw = seg.tags.get(ks.key)
        if raw is None:
            continue
        bin_name = schema.normalize(ks.key, raw)
        if bin_name is None:
            idx = ks.other_index
            if idx is None:
                continue
            bin_name = "other"
        bits[schema.column_index(ks.key, bin_name)] = 1
    return bits


def encode_network(net: RoadNetwork, schema: FeatureSchema) -> tuple[list[str], np.ndarray]:
    ids = [s.id for s in net.segments]
    matrix = np.zeros((len(ids), schema.width), dtype=np.uint8)
    for row, seg in enumerate(net.segments):
        matrix[row] = encode_segment(seg, schema)
    return ids, matrix


@dataclass
class CoverageStats:
    total_segments: int
    shares: dict[str, float]
    value_counts: dict[str, list[tuple[str, int]]] = field(default_factory=dict)


def tag_coverage_stats(net: RoadNetwork, keys: list[str] | None = None) -> CoverageStats:
    """Per-key occurrence share and value frequency table for a corpus."""
    if not net.segments:
        raise DataError("cannot compute tag statistics of an empty network")
    if keys is None:
        keys = default_schema().key_names
    shares: dict[str, float] = {}
    value_counts: dict[str, list[tuple[str, int]]] = {}
    for key in keys:
        counts: dict[str, int] = {}
        present = 0
        for seg in net.segments:
            raw = seg.tags.get(key)
            if raw is None:
                continue
            present += 1
            counts[raw] = counts.get(raw, 0) + 1
        shares[key] = present / len(net.segments)
        value_counts[key] = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return CoverageStats(
        total_segments=len(net.segments), shares=shares, value_counts=value_counts
    )


def save_schema(schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(path: str) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def write_feature_csv(ids: list[str], matrix: np.ndarray, schema: FeatureSchema, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("segment_id," + ",".join(schema.columns()) + "\n")
        for sid, row in zip(ids, matrix):
            fh.write(sid + "," + ",".join(str(int(v)) for v in row) + "\n")


def read_feature_csv(path: str) -> tuple[list[str], np.ndarray, list[str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[0] != "segment_id":
            raise DataError(f"unexpected feature header in {path}")
        columns = header[1:]
        ids: list[str] = []
        rows: list[list[int]] = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            ids.append(parts[0])
            rows.append([int(v) for v in parts[1:]])
    return ids, np.array(rows, dtype=np.uint8), columns
