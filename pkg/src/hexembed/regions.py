"""Average segment embeddings into per-cell region embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .hexgrid import CellAssignment
from .hexindex import CellId


@dataclass
class RegionEmbedding:
    cell: CellId
    values: np.ndarray
    segment_count: int


def aggregate_mean(
    assignment: CellAssignment,
    segment_embeddings: dict[str, np.ndarray],
    weights: dict[str, float] | None = None,
) -> dict[CellId, RegionEmbedding]:
    """Mean of member segment embeddings per cell.

    A segment spanning k cells contributes to all k regions. `weights` turns
    the unweighted mean into a weighted one (e.g. by road length); default is
    weight 1 per segment. Summation runs in sorted segment-id order so the
    reduction is deterministic.
    """
    out: dict[CellId, RegionEmbedding] = {}
    for cell in sorted(assignment.cell_to_segments):
        sids = sorted(assignment.cell_to_segments[cell])
        total = None
        wsum = 0.0
        for sid in sids:
            emb = segment_embeddings.get(sid)
            if emb is None:
                raise DataError(f"segment {sid!r} has no embedding")
            w = 1.0 if weights is None else float(weights[sid])
            contrib = np.asarray(emb, dtype=np.float64) * w
            total = contrib if total is None else total + contrib
            wsum += w
        if wsum == 0.0:
            raise DataError(f"zero total weight for cell {cell}")
        out[cell] = RegionEmbedding(
            cell=cell, values=total / wsum, segment_count=len(sids)
        )
    return out


def region_feature_share(
    assignment: CellAssignment,
    feature_ids: list[str],
    feature_matrix: np.ndarray,
    region_set: set[CellId],
    per_membership: bool = True,
) -> np.ndarray:
    """Per-column share of set bits across the regions' member segments.

    With `per_membership` (default) a segment counts once per region it
    belongs to, matching the aggregation's double-counting semantics;
    otherwise each distinct segment counts once.
    """
    if not region_set:
        raise DataError("region set must not be empty")
    row_of = {sid: i for i, sid in enumerate(feature_ids)}
    matrix = np.asarray(feature_matrix, dtype=np.float64)
    total = np.zeros(matrix.shape[1])
    count = 0
    if per_membership:
        for cell in sorted(region_set):
            for sid in assignment.cell_to_segments.get(cell, []):
                total += matrix[row_of[sid]]
                count += 1
    else:
        members: set[str] = set()
        for cell in region_set:
            members.update(assignment.cell_to_segments.get(cell, []))
        for sid in sorted(members):
            total += matrix[row_of[sid]]
            count += 1
    if count == 0:
        raise DataError("region set has no member segments")
    return total / count


def write_region_csv(regions: dict[CellId, RegionEmbedding], path: str) -> None:
    cells = sorted(regions)
    dim = len(regions[cells[0]].values) if cells else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(
            "cell_address," + ",".join(f"v{i}" for i in range(dim)) + ",segment_count\n"
        )
        for cell in cells:
            reg = regions[cell]
            values = ",".join(repr(float(v)) for v in reg.values)
            fh.write(f"{cell},{values},{reg.segment_count}\n")


def read_region_csv(path: str) -> dict[CellId, RegionEmbedding]:
    out: dict[CellId, RegionEmbedding] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[0] != "cell_address" or header[-1] != "segment_count":
            raise DataError(f"unexpected region header in {path}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            cell = CellId.from_string(parts[0])
            out[cell] = RegionEmbedding(
                cell=cell,
                values=np.array([float(v) for v in parts[1:-1]]),
                segment_count=int(parts[-1]),
            )
    return out
