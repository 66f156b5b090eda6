"""Latent-space analysis: projections, color coding, embedding arithmetic.

The t-SNE here is the exact O(n^2) variant: per-point Gaussian bandwidths
calibrated by binary search to the target perplexity, symmetrized
affinities, and gradient descent on the KL divergence with early
exaggeration, the two-stage momentum schedule and per-coordinate gain
factors. Everything is seeded and single-threaded, so outputs are
bit-reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .hexindex import CellId
from .regions import RegionEmbedding


@dataclass
class Projection:
    dims: int
    coords: dict[CellId, np.ndarray]
    method: str
    method_params: dict = field(default_factory=dict)


@dataclass
class PcaFit:
    components: np.ndarray  # (dims, d) rows orthonormal
    mean: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def _vectors(embeddings: dict[CellId, RegionEmbedding | np.ndarray]):
    cells = sorted(embeddings)
    rows = []
    for c in cells:
        e = embeddings[c]
        rows.append(np.asarray(e.values if isinstance(e, RegionEmbedding) else e, dtype=np.float64))
    return cells, np.stack(rows) if rows else np.zeros((0, 0))


def pca_fit(points: np.ndarray, dims: int) -> PcaFit:
    """Top principal directions via eigendecomposition of the covariance."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < dims + 1:
        raise DataError(f"PCA needs at least dims+1 = {dims + 1} rows")
    if not np.all(np.isfinite(x)):
        raise DataError("PCA input contains non-finite values")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    floor = max(eigvals[0], 0.0) * 1e-12
    rank = int(np.sum(eigvals > floor))
    if rank < dims:
        raise DataError(f"data rank {rank} is below the requested {dims} dimensions")
    components = eigvecs[:, :dims].T.copy()
    # Sign convention: the largest-magnitude loading of each component is
    # positive, so projections are reproducible across platforms.
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = float(np.sum(np.maximum(eigvals, 0.0)))
    ratios = np.maximum(eigvals[:dims], 0.0) / total if total > 0 else np.zeros(dims)
    return PcaFit(components=components, mean=mean, explained_variance_ratio=ratios)


def pca_project(
    embeddings: dict[CellId, RegionEmbedding | np.ndarray], dims: int
) -> tuple[Projection, PcaFit]:
    if dims not in (2, 3):
        raise DataError("projection dims must be 2 or 3")
    cells, x = _vectors(embeddings)
    fit = pca_fit(x, dims)
    coords = fit.transform(x)
    return (
        Projection(
            dims=dims,
            coords={c: coords[i] for i, c in enumerate(cells)},
            method="pca",
            method_params={"explained_variance_ratio": fit.explained_variance_ratio.tolist()},
        ),
        fit,
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def rgb_encode(projection: Projection) -> dict[CellId, tuple[int, int, int]]:
    """Min-max scale a 3-d projection to 8-bit RGB; constant axes map to 128."""
    if projection.dims != 3:
        raise DataError("rgb encoding needs a 3-d projection")
    cells = sorted(projection.coords)
    coords = np.stack([projection.coords[c] for c in cells])
    los = coords.min(axis=0)
    his = coords.max(axis=0)
    out: dict[CellId, tuple[int, int, int]] = {}
    for i, c in enumerate(cells):
        channel = []
        for axis in range(3):
            if his[axis] <= los[axis]:
                channel.append(128)
            else:
                frac = (coords[i, axis] - los[axis]) / (his[axis] - los[axis])
                channel.append(_round_half_up(frac * 255.0))
        out[c] = tuple(channel)
    return out


def _pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def conditional_affinities(
    points: np.ndarray, perplexity: float, max_iter: int = 50, tol: float = 1e-3
) -> tuple[np.ndarray, np.ndarray]:
    """Row-conditional Gaussian affinities calibrated to a perplexity.

    Returns (P_conditional, achieved_perplexity_per_point). The per-point
    precision is bisected until the achieved perplexity is within `tol` of
    the target, up to `max_iter` rounds.
    """
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    d = _pairwise_sq_dists(x)
    beta = np.ones(n)
    beta_lo = np.zeros(n)
    beta_hi = np.full(n, np.inf)
    p = np.zeros((n, n))
    achieved = np.zeros(n)
    active = np.arange(n)
    for _ in range(max_iter):
        # Only unconverged rows are recomputed.
        logits = -beta[active, None] * d[active]
        logits[np.arange(len(active)), active] = -np.inf
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w[np.arange(len(active)), active] = 0.0
        w /= w.sum(axis=1, keepdims=True)
        p[active] = w
        plogp = np.zeros_like(w)
        np.log(w, where=w > 0.0, out=plogp)
        plogp *= w
        achieved[active] = np.exp(-plogp.sum(axis=1))
        diff = achieved[active] - perplexity
        done = np.abs(diff) <= tol
        if done.all():
            break
        # Too high a perplexity means the kernel is too wide: raise beta.
        wide = active[(diff > 0) & ~done]
        narrow = active[(diff < 0) & ~done]
        beta_lo[wide] = beta[wide]
        beta_hi[narrow] = beta[narrow]
        beta[wide] = np.where(
            np.isinf(beta_hi[wide]), beta[wide] * 2.0, (beta[wide] + beta_hi[wide]) / 2.0
        )
        beta[narrow] = np.where(
            beta_lo[narrow] > 0.0, (beta[narrow] + beta_lo[narrow]) / 2.0, beta[narrow] / 2.0
        )
        active = active[~done]
    return p, achieved


@dataclass
class TsneResult:
    projection: Projection
    kl_history: dict[int, float]
    achieved_perplexity: np.ndarray


def tsne_fit(
    points: np.ndarray,
    perplexity: float = 100.0,
    seed: int = 42,
    n_iter: int = 1000,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    momentum_switch_iter: int = 250,
    kl_every: int = 10,
) -> tuple[np.ndarray, dict[int, float], np.ndarray]:
    """Exact t-SNE to 2 dimensions.

    Returns (coords, kl_history, achieved_perplexities); kl_history maps
    iteration number to the (unexaggerated) KL divergence, recorded every
    `kl_every` iterations and at the final one.
    """
    x = np.asarray(points, dtype=np.float64)
    n = len(x)
    if n < 5:
        raise DataError("t-SNE needs at least 5 points")
    if not np.all(np.isfinite(x)):
        raise DataError("t-SNE input contains non-finite values")
    if n <= 3.0 * perplexity:
        clamped = (n - 1) / 3.0
        warnings.warn(
            f"perplexity {perplexity} too large for {n} points; clamped to {clamped}",
            stacklevel=2,
        )
        perplexity = clamped
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    # Duplicate rows make the bandwidth search degenerate; jitter them apart.
    if len(np.unique(x, axis=0)) < n:
        x = x + rng.normal(0.0, 1e-10, x.shape)

    cond, achieved = conditional_affinities(x, perplexity)
    p = (cond + cond.T) / (2.0 * n)
    plogp = np.zeros_like(p)
    np.log(p, where=p > 0.0, out=plogp)
    p_log_p = float(np.sum(p * plogp))
    p_exag = p * early_exaggeration

    y = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history: dict[int, float] = {}
    num = np.empty((n, n))
    l = np.empty((n, n))
    for it in range(1, n_iter + 1):
        # num = 1 / (1 + squared distances), reusing one buffer throughout.
        np.dot(y, y.T, out=num)
        sq = np.einsum("ij,ij->i", y, y)
        num *= -2.0
        num += sq[:, None]
        num += sq[None, :]
        np.maximum(num, 0.0, out=num)
        num += 1.0
        np.reciprocal(num, out=num)
        np.fill_diagonal(num, 0.0)
        z = num.sum()
        p_eff = p_exag if it <= exaggeration_iters else p
        np.divide(num, z, out=l)
        if it % kl_every == 0 or it == n_iter:
            q = np.log(np.maximum(l, 1e-12))
            q *= p
            kl_history[it] = p_log_p - float(q.sum())
        np.subtract(p_eff, l, out=l)
        l *= num
        grad = 4.0 * (l.sum(axis=1)[:, None] * y - l @ y)
        momentum = 0.5 if it <= momentum_switch_iter else 0.8
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y, kl_history, achieved


def tsne_project(
    embeddings: dict[CellId, RegionEmbedding | np.ndarray],
    perplexity: float = 100.0,
    seed: int = 42,
    **kwargs,
) -> TsneResult:
    cells, x = _vectors(embeddings)
    coords, kl_history, achieved = tsne_fit(x, perplexity=perplexity, seed=seed, **kwargs)
    projection = Projection(
        dims=2,
        coords={c: coords[i] for i, c in enumerate(cells)},
        method="tsne",
        method_params={"perplexity": perplexity, "seed": seed},
    )
    return TsneResult(projection=projection, kl_history=kl_history, achieved_perplexity=achieved)


@dataclass
class ArithmeticResult:
    terms: list[tuple[str, CellId]]
    target: np.ndarray
    result: CellId
    distance: float


def _embedding_vector(e) -> np.ndarray:
    return np.asarray(e.values if isinstance(e, RegionEmbedding) else e, dtype=np.float64)


def embed_arithmetic(
    terms: list[tuple[str, CellId]],
    constraint: set[CellId],
    embeddings: dict[CellId, RegionEmbedding | np.ndarray],
    keep_operands: bool = False,
) -> ArithmeticResult:
    """Signed sum of term embeddings resolved to the nearest constrained cell.

    Term cells are excluded from the constraint set unless `keep_operands`.
    """
    if not terms:
        raise DataError("arithmetic needs at least one term")
    target = None
    for sign, cell in terms:
        if cell not in embeddings:
            raise DataError(f"no embedding for term cell {cell}")
        vec = _embedding_vector(embeddings[cell])
        signed = vec if sign == "+" else -vec
        target = signed if target is None else target + signed
    effective = set(constraint)
    if not keep_operands:
        effective -= {cell for _, cell in terms}
    if not effective:
        raise DataError("constraint set is empty after removing operands")
    ranked = nearest_regions(target, embeddings, effective, k=1)
    result, distance = ranked[0]
    return ArithmeticResult(terms=list(terms), target=target, result=result, distance=distance)


def nearest_regions(
    query: np.ndarray,
    embeddings: dict[CellId, RegionEmbedding | np.ndarray],
    constraint: set[CellId],
    k: int,
) -> list[tuple[CellId, float]]:
    """Exact k nearest constrained cells by Euclidean distance."""
    if k < 1:
        raise DataError("k must be >= 1")
    if not constraint:
        raise DataError("constraint set must not be empty")
    missing = [c for c in constraint if c not in embeddings]
    if missing:
        raise DataError(f"no embedding for constraint cell {sorted(missing)[0]}")
    if k > len(constraint):
        warnings.warn(
            f"k={k} exceeds constraint size {len(constraint)}; returning all",
            stacklevel=2,
        )
        k = len(constraint)
    q = np.asarray(query, dtype=np.float64)
    scored = sorted(
        (float(np.linalg.norm(_embedding_vector(embeddings[c]) - q)), c)
        for c in constraint
    )
    return [(c, d) for d, c in scored[:k]]
