"""Agglomerative clustering of region embeddings (Ward criterion).

Merge criterion between clusters A, B: (|A||B| / (|A|+|B|)) * ||mean(A) -
mean(B)||^2, i.e. the increase in total within-cluster variance; pairwise
distances are maintained with the Lance-Williams update. Nodes are numbered
scipy-style: leaves 0..n-1 in leaf order, internal nodes n..2n-2 in merge
order. Ties on the criterion resolve to the lexicographically smallest
(left, right) node pair, which makes merge sequences reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .hexgrid import CellAssignment
from .hexindex import CellId
from .regions import RegionEmbedding, region_feature_share


@dataclass
class Merge:
    left: int
    right: int
    distance: float
    size: int


@dataclass
class Dendrogram:
    leaf_ids: list[str]
    merges: list[Merge]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)


@dataclass
class ClusterCut:
    k: int
    labels: dict[str, int]


def ward_linkage(ids: list[str], points: np.ndarray) -> Dendrogram:
    """Full merge history for rows of `points` labeled by `ids`."""
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DataError("clustering needs at least 2 items")
    if not np.all(np.isfinite(x)):
        raise DataError("clustering input contains non-finite values")
    if len(ids) != n:
        raise DataError("ids and points disagree in length")

    # Slot-reuse distance matrix: merged cluster takes the left slot.
    sq = np.sum(x * x, axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(dist, np.inf)
    dist = np.maximum(dist, 0.0) * 0.5
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(n)
    node_of = list(range(n))
    active = np.ones(n, dtype=bool)

    merges: list[Merge] = []
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], dist, np.inf)
        dmin = masked.min()
        pairs = np.argwhere(masked == dmin)
        best = None
        for a, b in pairs:
            if a >= b:
                continue
            pair = (min(node_of[a], node_of[b]), max(node_of[a], node_of[b]))
            if best is None or pair < best[0]:
                best = (pair, int(a), int(b))
        (left, right), a, b = best
        na, nb = sizes[a], sizes[b]
        size = na + nb
        merges.append(Merge(left=left, right=right, distance=float(dmin), size=int(size)))

        others = active.copy()
        others[a] = others[b] = False
        nc = sizes[others]
        dist[a, others] = (
            (na + nc) * dist[a, others] + (nb + nc) * dist[b, others] - nc * dmin
        ) / (na + nb + nc)
        dist[others, a] = dist[a, others]
        dist[a, a] = np.inf
        active[b] = False
        sizes[a] = size
        node_of[a] = n + step
    return Dendrogram(leaf_ids=list(ids), merges=merges)


def agglomerative_ward(embeddings: dict[CellId, RegionEmbedding]) -> Dendrogram:
    """Ward dendrogram over region embeddings, leaves sorted by address."""
    cells = sorted(embeddings)
    if len(cells) < 2:
        raise DataError("clustering needs at least 2 regions")
    matrix = np.stack([embeddings[c].values for c in cells])
    return ward_linkage([str(c) for c in cells], matrix)


def _component_members(dendro: Dendrogram, n_merges: int) -> list[list[int]]:
    n = dendro.n_leaves
    parent = list(range(2 * n - 1))

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for idx in range(n_merges):
        m = dendro.merges[idx]
        node = n + idx
        parent[find(m.left)] = node
        parent[find(m.right)] = node
    groups: dict[int, list[int]] = {}
    for leaf in range(n):
        groups.setdefault(find(leaf), []).append(leaf)
    return list(groups.values())


def cut_tree(dendro: Dendrogram, k: int) -> ClusterCut:
    """Flat clustering with exactly k clusters (undo the last k-1 merges).

    Cluster ids are ordered by descending size, ties by the smallest member
    id.
    """
    n = dendro.n_leaves
    if not (1 <= k <= n):
        raise DataError(f"k must be in [1, {n}], got {k}")
    groups = _component_members(dendro, n - k)
    keyed = sorted(
        groups, key=lambda g: (-len(g), min(dendro.leaf_ids[leaf] for leaf in g))
    )
    labels: dict[str, int] = {}
    for cid, group in enumerate(keyed):
        for leaf in group:
            labels[dendro.leaf_ids[leaf]] = cid
    return ClusterCut(k=k, labels=labels)


@dataclass
class SplitDifference:
    """Per-column share delta between the new (smaller) and old child."""

    new_cells: list[CellId]
    old_cells: list[CellId]
    new_share: np.ndarray
    old_share: np.ndarray
    delta: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.delta = self.new_share - self.old_share


def split_difference(
    cut_k: ClusterCut,
    cut_k1: ClusterCut,
    assignment: CellAssignment,
    feature_ids: list[str],
    feature_matrix: np.ndarray,
    per_membership: bool = True,
) -> SplitDifference:
    """Feature-share difference across the single split between two cuts."""
    if cut_k1.k != cut_k.k + 1:
        raise DataError("cuts must differ by exactly one cluster")
    if set(cut_k.labels) != set(cut_k1.labels):
        raise DataError("cuts cover different region sets")
    children: dict[int, set[int]] = {}
    for leaf, coarse in cut_k.labels.items():
        children.setdefault(coarse, set()).add(cut_k1.labels[leaf])
    split_parents = [c for c, subs in children.items() if len(subs) > 1]
    if len(split_parents) != 1 or len(children[split_parents[0]]) != 2:
        raise DataError("finer cut is not a single-split refinement")
    sub_a, sub_b = sorted(children[split_parents[0]])

    def cells_of(fine_label: int) -> list[CellId]:
        return sorted(
            CellId.from_string(leaf)
            for leaf, lab in cut_k1.labels.items()
            if lab == fine_label
        )

    cells_a, cells_b = cells_of(sub_a), cells_of(sub_b)
    if len(cells_a) < len(cells_b):
        new_cells, old_cells = cells_a, cells_b
    elif len(cells_b) < len(cells_a):
        new_cells, old_cells = cells_b, cells_a
    else:
        # Tie: new is the child holding the smaller cell address.
        new_cells, old_cells = sorted((cells_a, cells_b), key=lambda cs: cs[0])
    new_share = region_feature_share(
        assignment, feature_ids, feature_matrix, set(new_cells), per_membership
    )
    old_share = region_feature_share(
        assignment, feature_ids, feature_matrix, set(old_cells), per_membership
    )
    return SplitDifference(
        new_cells=new_cells, old_cells=old_cells, new_share=new_share, old_share=old_share
    )


def key_normalized_shares(
    shares: np.ndarray, columns: list[str]
) -> np.ndarray:
    """Renormalize shares so each tag key's columns sum to 1 (0 if empty)."""
    out = np.zeros_like(shares)
    key_of = [c.split(":", 1)[0] for c in columns]
    for key in dict.fromkeys(key_of):
        idx = [i for i, k in enumerate(key_of) if k == key]
        total = shares[idx].sum()
        if total > 0:
            out[idx] = shares[idx] / total
    return out


def write_dendrogram_csv(dendro: Dendrogram, path: str, max_merges: int = 100) -> None:
    """Merge list CSV; by default only the last (topmost) 100 merges."""
    start = max(0, len(dendro.merges) - max_merges)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("merge_index,left,right,distance,size\n")
        for idx in range(start, len(dendro.merges)):
            m = dendro.merges[idx]
            fh.write(f"{idx},{m.left},{m.right},{m.distance!r},{m.size}\n")


def write_leaves_csv(dendro: Dendrogram, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("leaf_index,cell_address\n")
        for idx, leaf in enumerate(dendro.leaf_ids):
            fh.write(f"{idx},{leaf}\n")


def write_cut_csv(cut: ClusterCut, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_address,cluster_id\n")
        for leaf in sorted(cut.labels):
            fh.write(f"{leaf},{cut.labels[leaf]}\n")


def read_cut_csv(path: str) -> ClusterCut:
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "cell_address,cluster_id":
            raise DataError(f"unexpected cut header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            address, label = line.rsplit(",", 1)
            labels[address] = int(label)
    return ClusterCut(k=len(set(labels.values())), labels=labels)
