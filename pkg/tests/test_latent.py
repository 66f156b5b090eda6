"""Projections, RGB coding, t-SNE, and embedding arithmetic."""

import numpy as np
import pytest

from hexembed.errors import DataError
from hexembed.hexindex import cell_of_point
from hexembed.latent import (
    Projection,
    conditional_affinities,
    embed_arithmetic,
    nearest_regions,
    pca_fit,
    pca_project,
    rgb_encode,
    tsne_fit,
    tsne_project,
)

CELLS = [cell_of_point(17.0 + i * 0.01, 51.0 + (i % 7) * 0.01, 9) for i in range(40)]


def cell_embeddings(matrix):
    return {CELLS[i]: matrix[i] for i in range(len(matrix))}


def test_pca_exact_subspace(rng):
    basis = rng.normal(0, 1, (2, 30))
    x = rng.normal(0, 2, (200, 2)) @ basis + 5.0
    fit = pca_fit(x, 2)
    assert abs(fit.explained_variance_ratio.sum() - 1.0) < 1e-9
    ratios = fit.explained_variance_ratio
    assert ratios[0] >= ratios[1] >= 0.0


def test_pca_orthonormal_components(rng):
    x = rng.normal(0, 1, (500, 30))
    fit = pca_fit(x, 3)
    gram = fit.components @ fit.components.T
    assert np.abs(gram - np.eye(3)).max() < 1e-8


def test_pca_isotropic_ratios(rng):
    x = rng.normal(0, 1, (10000, 30))
    fit = pca_fit(x, 2)
    for ratio in fit.explained_variance_ratio:
        assert 0.02 < ratio < 0.05
    assert fit.explained_variance_ratio[0] - fit.explained_variance_ratio[1] < 0.05


def test_pca_mean_projects_to_origin(rng):
    x = rng.normal(3, 2, (100, 10))
    fit = pca_fit(x, 2)
    assert np.abs(fit.transform(x.mean(axis=0))).max() < 1e-9


def test_pca_rank3_recovery(rng):
    basis = rng.normal(0, 1, (3, 30))
    x = rng.normal(0, 1, (300, 3)) @ basis
    fit = pca_fit(x, 3)
    recon = fit.transform(x) @ fit.components + fit.mean
    assert np.abs(recon - x).max() < 1e-9


def test_pca_rank_error(rng):
    x = np.tile(rng.normal(0, 1, 30), (50, 1))  # rank 0 after centering
    with pytest.raises(DataError) as err:
        pca_fit(x, 2)
    assert "rank" in str(err.value)


def test_pca_sign_convention(rng):
    x = rng.normal(0, 1, (300, 8))
    fit = pca_fit(x, 3)
    for row in fit.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_rgb_edges():
    proj = Projection(
        dims=3,
        coords={
            CELLS[0]: np.array([0.0, 0.0, 5.0]),
            CELLS[1]: np.array([1.0, 0.0, 7.0]),
            CELLS[2]: np.array([2.0, 0.0, 9.0]),
        },
        method="pca",
    )
    rgb = rgb_encode(proj)
    assert rgb[CELLS[0]] == (0, 128, 0)
    assert rgb[CELLS[1]] == (128, 128, 128)
    assert rgb[CELLS[2]] == (255, 128, 255)


def test_tsne_calibration(rng):
    x = rng.normal(0, 1, (200, 10))
    _, achieved = conditional_affinities(x, perplexity=30.0)
    assert np.abs(achieved - 30.0).max() <= 1e-3


def test_tsne_determinism_and_separation(rng):
    a = rng.normal(0, 1, (100, 6))
    b = rng.normal(0, 1, (100, 6)) + 30.0
    x = np.vstack([a, b])
    y1, kl1, _ = tsne_fit(x, perplexity=20, seed=5)
    y2, _, _ = tsne_fit(x, perplexity=20, seed=5)
    assert np.array_equal(y1, y2)
    from sklearn.cluster import KMeans
    from sklearn.metrics import adjusted_rand_score

    labels = KMeans(2, n_init=10, random_state=0).fit_predict(y1)
    truth = [0] * 100 + [1] * 100
    assert adjusted_rand_score(truth, labels) >= 0.99


def test_tsne_perplexity_clamped(rng):
    x = rng.normal(0, 1, (30, 4))
    with pytest.warns(UserWarning, match="clamped"):
        tsne_fit(x, perplexity=100, seed=1, n_iter=20)


def test_tsne_duplicate_points_jittered(rng):
    x = np.vstack([np.zeros((5, 4)), rng.normal(0, 1, (25, 4))])
    y, _, achieved = tsne_fit(x, perplexity=5, seed=2, n_iter=30)
    assert np.all(np.isfinite(y))
    assert np.abs(achieved - 5.0).max() <= 1e-3


def test_tsne_project_wrapper(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 10)))
    result = tsne_project(emb, perplexity=8, seed=3, n_iter=30)
    assert result.projection.dims == 2
    assert set(result.projection.coords) == set(CELLS)


def test_pca_project_wrapper(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 10)))
    proj, fit = pca_project(emb, dims=3)
    assert proj.dims == 3
    assert len(proj.coords) == 40


def test_arith_self_nearest(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 5)))
    a = CELLS[3]
    res = embed_arithmetic([("+", a)], set(CELLS), emb, keep_operands=True)
    assert res.result == a
    assert res.distance == 0.0


def test_arith_cancellation(rng):
    # b is itself an operand, so resolving to it needs the retention flag.
    emb = cell_embeddings(rng.normal(0, 1, (40, 5)))
    a, b = CELLS[0], CELLS[7]
    res = embed_arithmetic([("+", a), ("-", a), ("+", b)], set(CELLS), emb, keep_operands=True)
    assert res.result == b
    assert res.distance == 0.0


def test_arith_excludes_operands_by_default(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 5)))
    a = CELLS[3]
    res = embed_arithmetic([("+", a)], set(CELLS), emb)
    assert res.result != a


def test_arith_scaling_invariance(rng):
    matrix = rng.normal(0, 1, (40, 5))
    emb = cell_embeddings(matrix)
    terms = [("+", CELLS[1]), ("-", CELLS[2]), ("+", CELLS[3])]
    base = embed_arithmetic(terms, set(CELLS), emb)
    for scale in (0.001, 3.7, 4000.0):
        scaled = cell_embeddings(matrix * scale)
        assert embed_arithmetic(terms, set(CELLS), scaled).result == base.result


def test_arith_empty_constraint(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 5)))
    with pytest.raises(DataError):
        embed_arithmetic([("+", CELLS[0])], {CELLS[0]}, emb)


def test_nearest_matches_full_scan(rng):
    matrix = rng.normal(0, 1, (40, 5))
    emb = cell_embeddings(matrix)
    query = rng.normal(0, 1, 5)
    got = nearest_regions(query, emb, set(CELLS), k=7)
    brute = sorted(
        ((float(np.linalg.norm(matrix[i] - query)), CELLS[i]) for i in range(40))
    )
    assert [c for c, _ in got] == [c for _, c in brute[:7]]
    dists = [d for _, d in got]
    assert dists == sorted(dists)


def test_nearest_k_overflow_warns(rng):
    emb = cell_embeddings(rng.normal(0, 1, (40, 5)))
    with pytest.warns(UserWarning, match="exceeds"):
        got = nearest_regions(np.zeros(5), emb, set(CELLS[:4]), k=10)
    assert len(got) == 4
