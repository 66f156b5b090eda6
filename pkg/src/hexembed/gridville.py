"""Bundled synthetic fixture: three small grid cities with planted road types.

Three archetypes are planted in spatially separated zones of each city:
arterial one-way multi-lane roads, paved residential streets, and unpaved
residential streets. The third city carries an extra zone interleaving
arterial and paved-residential streets, which yields genuinely mixed
microregions for the embedding-arithmetic experiment. A handful of footways
and one MultiLineString feature per city exercise the ingest filters. The
generator is fully deterministic (variant choice is positional, no RNG), so
the emitted GeoJSON is byte-stable.
"""

from __future__ import annotations

import json
import os

CITIES = ("gridville", "hexton", "wardham")

_ANCHORS = {
    "gridville": (17.00, 51.10),
    "hexton": (17.60, 51.40),
    "wardham": (16.40, 50.80),
}

# ~120 m street spacing at ~51 N.
_DLAT = 0.001078
_DLON = 0.001713
_LINES = 10  # streets per direction per zone
_PIECES = 3  # segments per street
_ZONE_OFFSET_LON = 0.04  # ~2.8 km between zone anchors

_VARIANTS = {
    "arterial": [
        {"highway": "primary", "oneway": "yes", "lanes": "3", "maxspeed": "80", "surface": "asphalt"},
        {"highway": "primary", "oneway": "yes", "lanes": "2", "maxspeed": "70", "surface": "asphalt"},
        {"highway": "primary", "oneway": "yes", "lanes": "3", "maxspeed": "80", "surface": "asphalt", "bridge": "yes"},
    ],
    "paved": [
        {"highway": "residential", "oneway": "no", "lanes": "2", "maxspeed": "30", "surface": "asphalt", "width": "5"},
        {"highway": "residential", "oneway": "no", "lanes": "2", "maxspeed": "30", "surface": "asphalt", "width": "6"},
        {"highway": "residential", "oneway": "no", "lanes": "2", "maxspeed": "40", "surface": "asphalt", "width": "5"},
    ],
    "unpaved": [
        {"highway": "residential", "oneway": "no", "lanes": "1", "maxspeed": "30", "surface": "ground", "width": "4"},
        {"highway": "track", "oneway": "no", "lanes": "1", "maxspeed": "30", "surface": "gravel", "width": "3"},
        {"highway": "residential", "oneway": "no", "lanes": "1", "maxspeed": "30", "surface": "dirt", "width": "4"},
    ],
}

_ZONES = ("arterial", "paved", "unpaved")


def segment_archetype(tags: dict[str, str]) -> str | None:
    """Planted archetype of a segment, recovered from its tags."""
    highway = tags.get("highway")
    if highway == "primary":
        return "arterial"
    if highway in ("residential", "track"):
        if tags.get("surface") in ("ground", "gravel", "dirt"):
            return "unpaved"
        return "paved"
    return None


def _line_coords(lon0: float, lat0: float, horizontal: bool, index: int, piece: int):
    """A street piece spanning _LINES-1 intervals split into _PIECES parts."""
    span = _LINES - 1
    per = span / _PIECES
    start, stop = piece * per, (piece + 1) * per
    steps = [start + s * (stop - start) / 3.0 for s in range(4)]
    coords = []
    for s in steps:
        if horizontal:
            coords.append([round(lon0 + s * _DLON, 7), round(lat0 + index * _DLAT, 7)])
        else:
            coords.append([round(lon0 + index * _DLON, 7), round(lat0 + s * _DLAT, 7)])
    return coords


def _zone_features(city: str, zone: str, lon0: float, lat0: float, mixed: bool = False):
    features = []
    for horizontal in (True, False):
        axis = "h" if horizontal else "v"
        for index in range(_LINES):
            for piece in range(_PIECES):
                if mixed:
                    kind = ("arterial", "paved")[(index + (0 if horizontal else 1)) % 2]
                else:
                    kind = zone
                tags = _VARIANTS[kind][(index + piece) % 3]
                features.append(
                    {
                        "type": "Feature",
                        "id": f"{city}-{zone}-{axis}{index}-{piece}",
                        "geometry": {
                            "type": "LineString",
                            "coordinates": _line_coords(lon0, lat0, horizontal, index, piece),
                        },
                        "properties": dict(tags),
                    }
                )
    return features


def generate_city(city: str) -> dict:
    """GeoJSON FeatureCollection for one fixture city."""
    if city not in _ANCHORS:
        raise KeyError(f"unknown fixture city {city!r}")
    lon, lat = _ANCHORS[city]
    features = []
    for z, zone in enumerate(_ZONES):
        features.extend(_zone_features(city, zone, lon + z * _ZONE_OFFSET_LON, lat))
    if city == "wardham":
        features.extend(
            _zone_features(city, "mixed", lon + 3 * _ZONE_OFFSET_LON, lat, mixed=True)
        )
    # Footways inside the paved zone: present in the extract, dropped by the
    # driveable filter.
    for k in range(5):
        features.append(
            {
                "type": "Feature",
                "id": f"{city}-footway-{k}",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [
                        [round(lon + _ZONE_OFFSET_LON + k * _DLON, 7), round(lat - 2 * _DLAT, 7)],
                        [round(lon + _ZONE_OFFSET_LON + (k + 1) * _DLON, 7), round(lat - 2 * _DLAT, 7)],
                    ],
                },
                "properties": {"highway": "footway", "surface": "paving_stones"},
            }
        )
    # One MultiLineString arterial feature to exercise part splitting.
    base_lat = lat + (_LINES + 1) * _DLAT
    features.append(
        {
            "type": "Feature",
            "id": f"{city}-ml",
            "geometry": {
                "type": "MultiLineString",
                "coordinates": [
                    [
                        [round(lon, 7), round(base_lat, 7)],
                        [round(lon + 4 * _DLON, 7), round(base_lat, 7)],
                    ],
                    [
                        [round(lon + 5 * _DLON, 7), round(base_lat, 7)],
                        [round(lon + 9 * _DLON, 7), round(base_lat, 7)],
                    ],
                ],
            },
            "properties": _VARIANTS["arterial"][0],
        }
    )
    return {"type": "FeatureCollection", "features": features}


def write_fixture(out_dir: str) -> list[str]:
    """Write all fixture city files; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for city in CITIES:
        path = os.path.join(out_dir, f"{city}.geojson")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(generate_city(city), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        paths.append(path)
    return paths
