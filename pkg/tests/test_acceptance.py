"""Acceptance criteria, one test per criterion.

Each test prints a `ACCEPTANCE <n> <name>: PASS` line when its assertions
hold (run with `pytest -s` to see them interleaved). Tolerances are pinned
here, not configurable.
"""

import json
import shutil
import warnings
from pathlib import Path

import numpy as np
import pytest
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score

from conftest import FIXTURE_DIR, run_cli, run_full_pipeline
from hexembed import autoencoder as ae
from hexembed.clustering import read_cut_csv, ward_linkage
from hexembed.features import default_schema
from hexembed.gridville import segment_archetype
from hexembed.hexgrid import (
    cells_of_segment,
    grid_step_m,
    read_assignment_csv,
)
from hexembed.hexindex import cell_of_point
from hexembed.latent import conditional_affinities, embed_arithmetic, pca_fit, tsne_fit
from hexembed.pipeline import default_config, read_segment_embeddings
from hexembed.regions import read_region_csv, region_feature_share
from hexembed.roads import RoadSegment, read_roads_jsonl
from oracles import (
    dense_chord_cells,
    latlng_to_cell_bulk,
    region_means_naive,
    ward_merges_naive,
)


def report(number: int, name: str) -> None:
    print(f"ACCEPTANCE {number} {name}: PASS")


def test_01_configuration_parity():
    cfg = default_config()
    assert cfg["input_dim"] == 88
    assert cfg["hidden_dim"] == 64
    assert cfg["latent_dim"] == 30
    assert cfg["learning_rate"] == 0.001
    assert cfg["batch_size"] == 200
    assert cfg["epochs"] == 50
    assert cfg["test_ratio"] == 0.2
    assert cfg["perplexity"] == 100.0
    assert cfg["resolution"] == 9
    assert cfg["k"] == 8
    # The library defaults behind the CLI agree.
    tc = ae.TrainConfig()
    assert (tc.learning_rate, tc.batch_size, tc.epochs, tc.test_ratio) == (0.001, 200, 50, 0.2)
    assert tc.dims == (88, 64, 30)
    assert default_schema().width == 88
    report(1, "configuration parity")


def test_02_gradient_oracle():
    rng = np.random.default_rng(1021)
    eps, tol = 1e-5, 1e-4
    for trial in range(20):
        dims = tuple(int(rng.integers(2, 9)) for _ in range(3))
        params = ae.init_params(int(rng.integers(0, 2**31)), dims)
        for key in params.fields():
            arr = getattr(params, key)
            setattr(params, key, arr + rng.normal(0, 0.4, arr.shape))
        batch = rng.normal(0.4, 0.6, (int(rng.integers(2, 7)), dims[0]))
        grads = ae.backward(params, batch)
        for key in params.fields():
            arr = getattr(params, key)
            analytic = getattr(grads, key)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                lp = ae.batch_loss(params, batch)
                arr[idx] = orig - eps
                lm = ae.batch_loss(params, batch)
                arr[idx] = orig
                fd = (lp - lm) / (2 * eps)
                denom = max(abs(fd), abs(analytic[idx]), 1e-6)
                assert abs(fd - analytic[idx]) / denom < tol, (trial, key, idx)
    report(2, "gradient oracle (20 nets)")


def test_03_ward_oracle():
    rng = np.random.default_rng(1031)
    for trial in range(25):
        n = int(rng.integers(4, 51))
        d = int(rng.integers(1, 11))
        pts = rng.normal(0, 1, (n, d))
        mine = ward_linkage([f"{i:03d}" for i in range(n)], pts)
        ref = ward_merges_naive(pts)
        assert len(mine.merges) == len(ref) == n - 1
        for merge, (left, right, dist, size) in zip(mine.merges, ref):
            assert (merge.left, merge.right) == (left, right), trial
            assert merge.size == size
            assert abs(merge.distance - dist) <= 1e-9
    report(3, "ward merge oracle (25 datasets)")


def test_04_aggregation_oracle(pipeline_ws: Path):
    assignment = read_assignment_csv(str(pipeline_ws / "assignment.csv"), 9)
    embeddings = read_segment_embeddings(str(pipeline_ws / "segment_embeddings.csv"))
    regions = read_region_csv(str(pipeline_ws / "region_embeddings.csv"))
    naive = region_means_naive(assignment, embeddings)
    assert set(regions) == set(naive)
    for cell, reg in regions.items():
        assert np.abs(reg.values - np.array(naive[cell])).max() <= 1e-12
    report(4, "aggregation oracle (gridville)")


def test_05_cell_assignment_oracles():
    rng = np.random.default_rng(1051)
    # (a) 200 random segments vs the dense-sampling oracle.
    anchors = [(17.0, 51.1), (-0.1, 51.5), (151.2, -33.9), (-74.0, 40.7)]
    checked = 0
    for i in range(200):
        lon0, lat0 = anchors[i % len(anchors)]
        lon = lon0 + rng.uniform(-0.03, 0.03)
        lat = lat0 + rng.uniform(-0.02, 0.02)
        pts = [(lon, lat)]
        for _ in range(int(rng.integers(1, 4))):
            lon += rng.uniform(-500, 500) / 70000.0
            lat += rng.uniform(-500, 500) / 111320.0
            pts.append((lon, lat))
        seg = RoadSegment(id=f"s{i}", geometry=pts, tags={}, city="x")
        assert cells_of_segment(seg, 9) == dense_chord_cells(pts, 9, grid_step_m(9))
        checked += 1
    assert checked == 200
    # (b) 1000 random global points vs the independent index implementation.
    lats = np.degrees(np.arcsin(rng.uniform(-1, 1, 1000)))
    lons = rng.uniform(-180, 180, 1000)
    mine = [cell_of_point(lon, lat, 9) for lon, lat in zip(lons, lats)]
    assert mine == latlng_to_cell_bulk(lons, lats, 9)
    report(5, "cell assignment oracles (200 segments, 1000 points)")


def test_06_end_to_end_recovery(pipeline_ws: Path):
    net = read_roads_jsonl(str(pipeline_ws / "roads.jsonl"))
    assignment = read_assignment_csv(str(pipeline_ws / "assignment.csv"), 9)
    cut = read_cut_csv(str(pipeline_ws / "cut.csv"))
    assert cut.k == 3
    archetype = {s.id: segment_archetype(s.tags) for s in net.segments}
    truth, predicted = [], []
    for cell, sids in assignment.cell_to_segments.items():
        kinds = {archetype[sid] for sid in sids}
        if len(kinds) == 1:
            truth.append(next(iter(kinds)))
            predicted.append(cut.labels[str(cell)])
    ari = adjusted_rand_score(truth, predicted)
    assert ari >= 0.9, ari
    history = (pipeline_ws / "loss_history.csv").read_text().splitlines()
    final = history[-1].split(",")
    assert final[0] == "50"
    assert float(final[1]) < 0.01
    report(6, f"end-to-end recovery (ARI {ari:.3f}, train mse {float(final[1]):.4f})")


def test_07_tsne_calibration_and_separation():
    rng = np.random.default_rng(1071)
    n = 2000
    blob_a = rng.normal(0, 1, (n // 2, 10))
    blob_b = rng.normal(0, 1, (n // 2, 10)) + 40.0
    data = np.vstack([blob_a, blob_b])
    coords, kl, achieved = tsne_fit(data, perplexity=100.0, seed=42)
    assert np.abs(achieved - 100.0).max() <= 1e-3
    labels = KMeans(2, n_init=10, random_state=0).fit_predict(coords)
    truth = [0] * (n // 2) + [1] * (n // 2)
    ari = adjusted_rand_score(truth, labels)
    assert ari >= 0.99
    assert kl[1000] < kl[300]
    report(7, f"t-SNE calibration and separation (ARI {ari:.3f}, KL {kl[300]:.3f}->{kl[1000]:.3f})")


def test_08_pca_properties():
    rng = np.random.default_rng(1081)
    x = rng.normal(0, 1, (400, 30))
    fit = pca_fit(x, 3)
    assert np.abs(fit.components @ fit.components.T - np.eye(3)).max() <= 1e-8
    ratios = fit.explained_variance_ratio
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    basis = rng.normal(0, 1, (3, 30))
    planted = rng.normal(0, 1.5, (300, 3)) @ basis + rng.normal(0, 1, 30)
    fit3 = pca_fit(planted, 3)
    recon = fit3.transform(planted) @ fit3.components + fit3.mean
    assert np.abs(recon - planted).max() < 1e-9
    report(8, "PCA properties")


def test_09_arithmetic_semantics(pipeline_ws: Path):
    rng = np.random.default_rng(1091)
    cells = [cell_of_point(17.0 + i * 0.01, 51.0 + (i % 9) * 0.01, 9) for i in range(60)]
    for trial in range(100):
        matrix = rng.normal(0, 1, (60, 8))
        emb = {cells[i]: matrix[i] for i in range(60)}
        a, b = cells[int(rng.integers(0, 60))], cells[int(rng.integers(0, 60))]
        res = embed_arithmetic(
            [("+", a), ("-", a), ("+", b)], set(cells), emb, keep_operands=True
        )
        assert res.result == b, trial
        self_res = embed_arithmetic([("+", a)], set(cells), emb, keep_operands=True)
        assert self_res.result == a
        scale = float(rng.uniform(0.01, 100.0))
        terms = [("+", a), ("+", b)]
        base = embed_arithmetic(terms, set(cells), emb)
        scaled = embed_arithmetic(
            terms, set(cells), {c: v * scale for c, v in emb.items()}
        )
        assert scaled.result == base.result, trial

    # Planted-archetype merger on the fixture, resolved in the third city.
    net = read_roads_jsonl(str(pipeline_ws / "roads.jsonl"))
    assignment = read_assignment_csv(str(pipeline_ws / "assignment.csv"), 9)
    regions = read_region_csv(str(pipeline_ws / "region_embeddings.csv"))
    ids = [s.id for s in net.segments]
    from hexembed.features import encode_network

    _, matrix = encode_network(net, default_schema())
    city_of = {s.id: s.city for s in net.segments}
    archetype = {s.id: segment_archetype(s.tags) for s in net.segments}

    def pure_region(city, kind):
        for cell in sorted(assignment.cell_to_segments):
            sids = assignment.cell_to_segments[cell]
            if (
                all(city_of[s] == city for s in sids)
                and {archetype[s] for s in sids} == {kind}
                and len(sids) >= 3
            ):
                return cell
        raise AssertionError(f"no pure {kind} region in {city}")

    arterial = pure_region("gridville", "arterial")
    residential = pure_region("gridville", "paved")
    wardham = {
        cell
        for cell, sids in assignment.cell_to_segments.items()
        if any(city_of[s] == "wardham" for s in sids)
    }
    resolved = embed_arithmetic([("+", arterial), ("+", residential)], wardham, regions)
    share_a = region_feature_share(assignment, ids, matrix, {arterial})
    share_b = region_feature_share(assignment, ids, matrix, {residential})
    share_r = region_feature_share(assignment, ids, matrix, {resolved.result})
    lo = np.minimum(share_a, share_b)
    hi = np.maximum(share_a, share_b)
    active = (share_a > 0) | (share_b > 0)
    inside = (share_r >= lo - 1e-12) & (share_r <= hi + 1e-12)
    fraction = inside[active].mean()
    assert fraction >= 0.7, fraction
    report(9, f"arithmetic semantics (interval fraction {fraction:.2f})")


TERMINAL_ARTIFACTS = (
    "model.json", "cut.csv", "pca.csv", "rgb.csv", "tsne.csv",
    "map_clusters.geojson", "segment_embeddings.csv", "region_embeddings.csv",
    "manifest.json",
)


def test_10_determinism(pipeline_ws: Path, tmp_path: Path):
    second = tmp_path / "second"
    run_full_pipeline(second, seed=42, k=3)
    for name in TERMINAL_ARTIFACTS:
        a = (pipeline_ws / name).read_bytes()
        b = (second / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    report(10, "determinism (byte-identical artifacts)")
