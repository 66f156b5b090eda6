"""Parse GeoJSON road extracts into validated in-memory road networks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError


@dataclass
class RoadSegment:
    """One driveable way: id, (lon, lat) polyline, raw tag map, city label."""

    id: str
    geometry: list[tuple[float, float]]
    tags: dict[str, str]
    city: str


@dataclass
class RoadNetwork:
    segments: list[RoadSegment] = field(default_factory=list)

    @property
    def city_set(self) -> set[str]:
        return {s.city for s in self.segments}

    def __len__(self) -> int:
        return len(self.segments)


@dataclass
class ParseStats:
    """Counters for everything the parser had to work around."""

    skipped_features: int = 0
    list_valued_tags: int = 0
    messages: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.messages.append(message)


def _clean_tags(props: dict, stats: ParseStats, feature_id: str) -> dict[str, str]:
    tags: dict[str, str] = {}
    for key, value in props.items():
        if value is None:
            continue
        if isinstance(value, list):
            stats.list_valued_tags += 1
            stats.warn(f"{feature_id}: list-valued tag {key!r}, keeping first element")
            if not value:
                continue
            value = value[0]
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif not isinstance(value, str):
            value = str(value)
        if value == "":
            continue
        tags[str(key).lower()] = value
    return tags


def _valid_ring(coords, stats: ParseStats, feature_id: str) -> list[tuple[float, float]] | None:
    if not isinstance(coords, list) or len(coords) < 2:
        stats.skipped_features += 1
        stats.warn(f"{feature_id}: fewer than 2 geometry points, skipped")
        return None
    out = []
    for pt in coords:
        lon, lat = float(pt[0]), float(pt[1])
        if not (-180.0 <= lon <= 180.0) or not (-90.0 <= lat <= 90.0):
            stats.skipped_features += 1
            stats.warn(f"{feature_id}: coordinate out of WGS84 range, skipped")
            return None
        out.append((lon, lat))
    return out


def _feature_id(feature: dict, ordinal: int, stats: ParseStats) -> str:
    for candidate in (feature.get("id"), feature.get("properties", {}).get("id"),
                      feature.get("properties", {}).get("osmid")):
        if candidate is None:
            continue
        if isinstance(candidate, list):
            stats.list_valued_tags += 1
            candidate = candidate[0] if candidate else None
            if candidate is None:
                continue
        return str(candidate)
    return f"f{ordinal}"


def parse_road_collection(data: bytes | str, city: str) -> tuple[RoadNetwork, ParseStats]:
    """Parse a GeoJSON FeatureCollection of LineStrings into a RoadNetwork.

    MultiLineStrings split into one segment per part with ids suffixed `#k`;
    features with other geometry types are skipped and counted.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed GeoJSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise DataError("input is not a GeoJSON FeatureCollection")

    stats = ParseStats()
    net = RoadNetwork()
    seen_ids: set[str] = set()
    for ordinal, feature in enumerate(doc.get("features", [])):
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        fid = _feature_id(feature, ordinal, stats)
        props = feature.get("properties") or {}
        if gtype == "LineString":
            parts = [geom.get("coordinates")]
            ids = [fid]
        elif gtype == "MultiLineString":
            parts = geom.get("coordinates") or []
            ids = [f"{fid}#{k}" for k in range(len(parts))]
        else:
            stats.skipped_features += 1
            stats.warn(f"{fid}: geometry type {gtype!r} is not a line, skipped")
            continue
        tags = _clean_tags(props, stats, fid)
        for sid, coords in zip(ids, parts):
            ring = _valid_ring(coords, stats, sid)
            if ring is None:
                continue
            if sid in seen_ids:
                raise DataError(f"duplicate segment id {sid!r}")
            seen_ids.add(sid)
            net.segments.append(RoadSegment(id=sid, geometry=ring, tags=tags.copy(), city=city))
    if not net.segments:
        raise DataError("no usable line features in input")
    return net, stats


def filter_driveable(net: RoadNetwork, allowed_highway_values: set[str]) -> RoadNetwork:
    """Keep segments whose `highway` tag value is in the allowed set."""
    if not allowed_highway_values:
        raise DataError("allowed highway set must not be empty")
    kept = [s for s in net.segments if s.tags.get("highway") in allowed_highway_values]
    return RoadNetwork(segments=kept)


def merge_networks(nets: list[RoadNetwork]) -> RoadNetwork:
    merged = RoadNetwork()
    seen: set[str] = set()
    for net in nets:
        for seg in net.segments:
            if seg.id in seen:
                raise DataError(f"duplicate segment id across inputs: {seg.id!r}")
            seen.add(seg.id)
            merged.segments.append(seg)
    return merged


def network_to_geojson(net: RoadNetwork) -> dict:
    """GeoJSON FeatureCollection that reparses to an equal network."""
    features = []
    for seg in net.segments:
        features.append(
            {
                "type": "Feature",
                "id": seg.id,
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[lon, lat] for lon, lat in seg.geometry],
                },
                "properties": dict(seg.tags),
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_roads_jsonl(net: RoadNetwork, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for seg in net.segments:
            record = {
                "id": seg.id,
                "city": seg.city,
                "coords": [[lon, lat] for lon, lat in seg.geometry],
                "tags": seg.tags,
            }
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def read_roads_jsonl(path: str) -> RoadNetwork:
    net = RoadNetwork()
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
            sid = record["id"]
            if sid in seen:
                raise DataError(f"{path}:{lineno}: duplicate segment id {sid!r}")
            seen.add(sid)
            net.segments.append(
                RoadSegment(
                    id=sid,
                    geometry=[(float(c[0]), float(c[1])) for c in record["coords"]],
                    tags={str(k): str(v) for k, v in record["tags"].items()},
                    city=record["city"],
                )
            )
    if not net.segments:
        raise DataError(f"{path}: empty dataset")
    return net
