"""Assign road segments to hexagonal grid cells.

A segment belongs to every cell its polyline touches. Touching is evaluated
on a dense logical grid of sample points along each chord (spacing 1 m at
the default resolution, half the minimum cell inradius where that is
smaller); a cell whose overlap with the polyline is shorter than the grid
step is not recorded. The grid is evaluated lazily: cells are convex, so an
interval whose endpoints share a cell contains no other cell and the whole
interval is skipped, giving O(crossings * log n) point lookups per chord.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import DataError
from .geodesy import EARTH_RADIUS_M, haversine_m
from .hexindex import RES0_SPACING, CellId, cell_of_point
from .roads import RoadNetwork, RoadSegment

# Worst-case gnomonic-to-sphere compression at a face corner.
_MIN_COMPRESSION = 0.62


def grid_step_m(resolution: int) -> float:
    """Sample spacing along chords: min(1 m, half the minimum inradius)."""
    min_spacing = RES0_SPACING * 7.0 ** (-resolution / 2.0) * EARTH_RADIUS_M
    min_inradius = 0.5 * min_spacing * _MIN_COMPRESSION
    return min(1.0, 0.5 * min_inradius)


def cells_of_segment(seg: RoadSegment, resolution: int) -> list[CellId]:
    """Every cell the segment's polyline touches, ordered by first touch."""
    found: list[CellId] = []
    seen: set[CellId] = set()
    for k in range(len(seg.geometry) - 1):
        for cell in _cells_of_chord(seg.geometry[k], seg.geometry[k + 1], resolution):
            if cell not in seen:
                seen.add(cell)
                found.append(cell)
    if not found:
        lon, lat = seg.geometry[0]
        found.append(cell_of_point(lon, lat, resolution))
    return found


def _cells_of_chord(
    a: tuple[float, float], b: tuple[float, float], resolution: int
) -> list[CellId]:
    length = haversine_m(a[0], a[1], b[0], b[1])
    if length == 0.0:
        return [cell_of_point(a[0], a[1], resolution)]
    n = max(1, math.ceil(length / grid_step_m(resolution)))
    cache: dict[int, CellId] = {}

    def cell_at(k: int) -> CellId:
        cell = cache.get(k)
        if cell is None:
            t = k / n
            cell = cell_of_point(
                a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, resolution
            )
            cache[k] = cell
        return cell

    def refine(lo: int, hi: int) -> None:
        # Same cell at both ends: the straight chord cannot leave a convex
        # cell in between, skip the interval.
        if cell_at(lo) == cell_at(hi) or hi - lo == 1:
            return
        mid = (lo + hi) // 2
        refine(lo, mid)
        refine(mid, hi)

    cell_at(0)
    cell_at(n)
    refine(0, n)
    ordered: list[CellId] = []
    last = None
    for k in sorted(cache):
        if cache[k] != last:
            ordered.append(cache[k])
            last = cache[k]
    return ordered


@dataclass
class CellAssignment:
    """Bidirectional segment/cell incidence maps at one resolution."""

    resolution: int
    segment_to_cells: dict[str, list[CellId]] = field(default_factory=dict)
    cell_to_segments: dict[CellId, list[str]] = field(default_factory=dict)

    @property
    def cells(self) -> list[CellId]:
        return sorted(self.cell_to_segments)


def assign_network(
    net: RoadNetwork, resolution: int, threads: int | None = None
) -> CellAssignment:
    """Cell assignment for every segment; only touched cells appear."""
    if not net.segments:
        raise DataError("cannot assign an empty road network")
    if threads is None:
        threads = int(os.environ.get("HEXEMBED_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_cells = list(
                pool.map(lambda s: cells_of_segment(s, resolution), net.segments)
            )
    else:
        all_cells = [cells_of_segment(s, resolution) for s in net.segments]

    assignment = CellAssignment(resolution=resolution)
    for seg, cells in zip(net.segments, all_cells):
        assignment.segment_to_cells[seg.id] = cells
        for cell in cells:
            assignment.cell_to_segments.setdefault(cell, []).append(seg.id)
    return assignment


def write_assignment_csv(assignment: CellAssignment, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("segment_id,cell_address\n")
        for sid, cells in assignment.segment_to_cells.items():
            for cell in cells:
                fh.write(f"{sid},{cell}\n")


def read_assignment_csv(path: str, resolution: int) -> CellAssignment:
    assignment = CellAssignment(resolution=resolution)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "segment_id,cell_address":
            raise DataError(f"unexpected assignment header in {path}: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sid, address = line.rsplit(",", 1)
            cell = CellId.from_string(address)
            if cell.resolution != resolution:
                raise DataError(
                    f"{path}: cell {address} has resolution {cell.resolution}, "
                    f"expected {resolution}; re-run the index stage"
                )
            assignment.segment_to_cells.setdefault(sid, []).append(cell)
            assignment.cell_to_segments.setdefault(cell, []).append(sid)
    return assignment
