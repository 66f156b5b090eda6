"""Pipeline stages over a workspace, and the default configuration."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import autoencoder as ae
from . import clustering, features, hexgrid, latent, regions, roads
from .errors import DataError
from .geodesy import polyline_length_m
from .hexindex import CellId, cell_boundary
from .workspace import Workspace


def default_config() -> dict:
    """Built-in defaults; CLI flags and a config file may override them."""
    return {
        "seed": 42,
        "resolution": 9,
        "k": 8,
        "perplexity": 100.0,
        "input_dim": 88,
        "hidden_dim": 64,
        "latent_dim": 30,
        "learning_rate": 0.001,
        "batch_size": 200,
        "epochs": 50,
        "test_ratio": 0.2,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "loss": "mse",
        "stratify_by_city": False,
        "length_weighted": False,
        "share_mode": "membership",
        "tsne_iterations": 1000,
        "tsne_learning_rate": 200.0,
        "tsne_early_exaggeration": 12.0,
        "tsne_exaggeration_iters": 250,
        "tsne_momentum_switch_iter": 250,
        "allowed_highways": sorted(features.DEFAULT_DRIVEABLE_HIGHWAYS),
        "dendrogram_merges": 100,
    }


def effective_config(config_file: str | None, overrides: dict) -> dict:
    """default < config file < explicit CLI flags."""
    config = default_config()
    if config_file:
        with open(config_file, encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(config)
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    config.update({k: v for k, v in overrides.items() if v is not None})
    return config


def _threads() -> int:
    return max(1, int(os.environ.get("HEXEMBED_THREADS", "1") or "1"))


def stage_ingest(ws: Workspace, cfg: dict, inputs: list[str], cities: list[str]) -> None:
    if len(inputs) != len(cities):
        raise DataError("--input and --city must be given the same number of times")
    if not inputs:
        raise DataError("ingest needs at least one --input/--city pair")
    for path in inputs:
        if not os.path.exists(path):
            raise DataError(f"missing input file {path}")

    def parse_one(pair):
        path, city = pair
        with open(path, "rb") as fh:
            return roads.parse_road_collection(fh.read(), city)

    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parsed = list(pool.map(parse_one, zip(inputs, cities)))
    else:
        parsed = [parse_one(pair) for pair in zip(inputs, cities)]
    for (path, _), (_, stats) in zip(zip(inputs, cities), parsed):
        for message in stats.messages:
            print(f"warning: {path}: {message}")
    net = roads.merge_networks([n for n, _ in parsed])
    net = roads.filter_driveable(net, set(cfg["allowed_highways"]))
    if not net.segments:
        raise DataError("no driveable segments left after filtering")
    roads.write_roads_jsonl(net, ws.path("roads.jsonl"))
    ws.record_stage(
        "ingest",
        {**_stage_cfg(cfg, "allowed_highways"), "cities": cities},
        inputs=[],
        outputs=["roads.jsonl"],
        external_inputs=inputs,
    )


def stage_featurize(ws: Workspace, cfg: dict, schema_file: str | None = None) -> None:
    ws.require_artifacts("featurize", ["roads.jsonl"])
    schema = features.load_schema(schema_file) if schema_file else features.default_schema()
    net = roads.read_roads_jsonl(ws.path("roads.jsonl"))
    ids, matrix = features.encode_network(net, schema)
    features.save_schema(schema, ws.path("schema.json"))
    features.write_feature_csv(ids, matrix, schema, ws.path("features.csv"))
    stats = features.tag_coverage_stats(net, schema.key_names)
    with open(ws.path("stats.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(
            {
                "total_segments": stats.total_segments,
                "shares": stats.shares,
                "value_counts": {
                    k: [[v, c] for v, c in vs] for k, vs in stats.value_counts.items()
                },
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    ws.record_stage(
        "featurize",
        {"schema_version": schema.version, "width": schema.width},
        inputs=["roads.jsonl"],
        outputs=["schema.json", "features.csv", "stats.json"],
        external_inputs=[schema_file] if schema_file else None,
    )


def stage_index(ws: Workspace, cfg: dict) -> None:
    ws.require_artifacts("index", ["roads.jsonl"])
    net = roads.read_roads_jsonl(ws.path("roads.jsonl"))
    assignment = hexgrid.assign_network(net, cfg["resolution"], threads=_threads())
    hexgrid.write_assignment_csv(assignment, ws.path("assignment.csv"))
    ws.record_stage(
        "index",
        _stage_cfg(cfg, "resolution"),
        inputs=["roads.jsonl"],
        outputs=["assignment.csv"],
    )


def _train_config(cfg: dict, input_dim: int) -> ae.TrainConfig:
    return ae.TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        test_ratio=cfg["test_ratio"],
        seed=cfg["seed"],
        adam_beta1=cfg["adam_beta1"],
        adam_beta2=cfg["adam_beta2"],
        adam_eps=cfg["adam_eps"],
        loss=cfg["loss"],
        dims=(input_dim, cfg["hidden_dim"], cfg["latent_dim"]),
    )


def stage_train(ws: Workspace, cfg: dict) -> None:
    ws.require_artifacts("train", ["features.csv", "schema.json"])
    ids, matrix, _ = features.read_feature_csv(ws.path("features.csv"))
    schema = features.load_schema(ws.path("schema.json"))
    groups = None
    if cfg["stratify_by_city"]:
        net = roads.read_roads_jsonl(ws.path("roads.jsonl"))
        city_of = {s.id: s.city for s in net.segments}
        groups = [city_of[sid] for sid in ids]
    result = ae.train(matrix.astype(np.float64), _train_config(cfg, matrix.shape[1]), groups)
    ae.save_model(result.params, ws.path("model.json"), cfg["seed"], schema.version)
    ae.write_history_csv(result.history, ws.path("loss_history.csv"))
    final = result.history[-1]
    print(f"epoch {final[0]}: train={final[1]:.6f} test={final[2]:.6f}")
    ws.record_stage(
        "train",
        _stage_cfg(
            cfg,
            "seed", "learning_rate", "batch_size", "epochs", "test_ratio",
            "adam_beta1", "adam_beta2", "adam_eps", "loss",
            "hidden_dim", "latent_dim", "stratify_by_city",
        ),
        inputs=["features.csv", "schema.json"],
        outputs=["model.json", "loss_history.csv"],
    )


def stage_embed(ws: Workspace, cfg: dict) -> None:
    ws.require_artifacts("embed", ["features.csv", "model.json"])
    ids, matrix, _ = features.read_feature_csv(ws.path("features.csv"))
    params, meta = ae.load_model(ws.path("model.json"))
    if meta["dims"][0] != matrix.shape[1]:
        raise DataError(
            f"model input width {meta['dims'][0]} does not match features {matrix.shape[1]}"
        )
    latent_rows = ae.encode(params, matrix.astype(np.float64))
    with open(ws.path("segment_embeddings.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("segment_id," + ",".join(f"e{i}" for i in range(latent_rows.shape[1])) + "\n")
        for sid, row in zip(ids, latent_rows):
            fh.write(sid + "," + ",".join(repr(float(v)) for v in row) + "\n")
    ws.record_stage(
        "embed",
        {},
        inputs=["features.csv", "model.json"],
        outputs=["segment_embeddings.csv"],
    )


def read_segment_embeddings(path: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("segment_id,"):
            raise DataError(f"unexpected embeddings header in {path}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            out[parts[0]] = np.array([float(v) for v in parts[1:]])
    return out


def stage_aggregate(ws: Workspace, cfg: dict) -> None:
    needed = ["assignment.csv", "segment_embeddings.csv"]
    if cfg["length_weighted"]:
        needed.append("roads.jsonl")
    ws.require_artifacts("aggregate", needed)
    assignment = hexgrid.read_assignment_csv(ws.path("assignment.csv"), cfg["resolution"])
    embeddings = read_segment_embeddings(ws.path("segment_embeddings.csv"))
    weights = None
    if cfg["length_weighted"]:
        net = roads.read_roads_jsonl(ws.path("roads.jsonl"))
        weights = {s.id: polyline_length_m(s.geometry) for s in net.segments}
    region_map = regions.aggregate_mean(assignment, embeddings, weights)
    regions.write_region_csv(region_map, ws.path("region_embeddings.csv"))
    ws.record_stage(
        "aggregate",
        _stage_cfg(cfg, "length_weighted"),
        inputs=needed,
        outputs=["region_embeddings.csv"],
    )


def stage_cluster(ws: Workspace, cfg: dict) -> None:
    ws.require_artifacts("cluster", ["region_embeddings.csv", "features.csv", "assignment.csv"])
    region_map = regions.read_region_csv(ws.path("region_embeddings.csv"))
    dendro = clustering.agglomerative_ward(region_map)
    clustering.write_dendrogram_csv(dendro, ws.path("dendrogram.csv"), cfg["dendrogram_merges"])
    clustering.write_leaves_csv(dendro, ws.path("dendrogram_leaves.csv"))
    cut = clustering.cut_tree(dendro, cfg["k"])
    clustering.write_cut_csv(cut, ws.path("cut.csv"))

    outputs = ["dendrogram.csv", "dendrogram_leaves.csv", "cut.csv"]
    if cfg["k"] >= 2:
        ids, matrix, columns = features.read_feature_csv(ws.path("features.csv"))
        assignment = hexgrid.read_assignment_csv(ws.path("assignment.csv"), cfg["resolution"])
        prev = clustering.cut_tree(dendro, cfg["k"] - 1) if cfg["k"] > 1 else None
        split = clustering.split_difference(
            prev, cut, assignment, ids, matrix,
            per_membership=cfg["share_mode"] == "membership",
        )
        keynorm = clustering.key_normalized_shares(
            split.new_share, columns
        ) - clustering.key_normalized_shares(split.old_share, columns)
        with open(ws.path("splits.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write("column,new_share,old_share,delta,delta_keynorm\n")
            for i, col in enumerate(columns):
                fh.write(
                    f"{col},{float(split.new_share[i])!r},{float(split.old_share[i])!r},"
                    f"{float(split.delta[i])!r},{float(keynorm[i])!r}\n"
                )
        outputs.append("splits.csv")
    ws.record_stage(
        "cluster",
        _stage_cfg(cfg, "k", "share_mode", "dendrogram_merges"),
        inputs=["region_embeddings.csv", "features.csv", "assignment.csv"],
        outputs=outputs,
    )


def cells_of_city(ws: Workspace, cfg: dict, city: str) -> set[CellId]:
    net = roads.read_roads_jsonl(ws.path("roads.jsonl"))
    assignment = hexgrid.read_assignment_csv(ws.path("assignment.csv"), cfg["resolution"])
    wanted = {s.id for s in net.segments if s.city == city}
    if not wanted:
        raise DataError(f"no segments for city {city!r}")
    cells: set[CellId] = set()
    for cell, sids in assignment.cell_to_segments.items():
        if any(sid in wanted for sid in sids):
            cells.add(cell)
    return cells


def _write_projection_csv(path: str, coords: dict, dims: int) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_address," + ",".join(["x", "y", "z"][:dims]) + "\n")
        for cell in sorted(coords):
            row = ",".join(repr(float(v)) for v in coords[cell])
            fh.write(f"{cell},{row}\n")


def stage_project(ws: Workspace, cfg: dict, city: str | None = None) -> None:
    needed = ["region_embeddings.csv"]
    if city:
        needed += ["assignment.csv", "roads.jsonl"]
    ws.require_artifacts("project", needed)
    region_map = regions.read_region_csv(ws.path("region_embeddings.csv"))
    if city:
        keep = cells_of_city(ws, cfg, city)
        region_map = {c: r for c, r in region_map.items() if c in keep}
        if not region_map:
            raise DataError(f"no regions for city {city!r}")
    pca3, _ = latent.pca_project(region_map, dims=3)
    _write_projection_csv(ws.path("pca.csv"), pca3.coords, 3)
    rgb = latent.rgb_encode(pca3)
    with open(ws.path("rgb.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_address,r,g,b\n")
        for cell in sorted(rgb):
            r, g, b = rgb[cell]
            fh.write(f"{cell},{r},{g},{b}\n")
    tsne = latent.tsne_project(
        region_map,
        perplexity=cfg["perplexity"],
        seed=cfg["seed"],
        n_iter=cfg["tsne_iterations"],
        learning_rate=cfg["tsne_learning_rate"],
        early_exaggeration=cfg["tsne_early_exaggeration"],
        exaggeration_iters=cfg["tsne_exaggeration_iters"],
        momentum_switch_iter=cfg["tsne_momentum_switch_iter"],
    )
    _write_projection_csv(ws.path("tsne.csv"), tsne.projection.coords, 2)
    ws.record_stage(
        "project",
        {**_stage_cfg(cfg, "seed", "perplexity", "tsne_iterations", "tsne_learning_rate",
                      "tsne_early_exaggeration", "tsne_exaggeration_iters",
                      "tsne_momentum_switch_iter"), "city": city},
        inputs=needed,
        outputs=["pca.csv", "rgb.csv", "tsne.csv"],
    )


def stage_arith(
    ws: Workspace,
    cfg: dict,
    plus: list[str],
    minus: list[str],
    within: str,
    keep_operands: bool = False,
) -> latent.ArithmeticResult:
    ws.require_artifacts("arith", ["region_embeddings.csv", "assignment.csv", "roads.jsonl"])
    region_map = regions.read_region_csv(ws.path("region_embeddings.csv"))
    terms = [("+", CellId.from_string(c)) for c in plus]
    terms += [("-", CellId.from_string(c)) for c in minus]
    constraint = cells_of_city(ws, cfg, within)
    result = latent.embed_arithmetic(terms, constraint, region_map, keep_operands)
    with open(ws.path("arith.json"), "w", encoding="utf-8", newline="") as fh:
        json.dump(
            {
                "terms": [[sign, str(cell)] for sign, cell in result.terms],
                "within": within,
                "keep_operands": keep_operands,
                "result": str(result.result),
                "distance": result.distance,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    ws.record_stage(
        "arith",
        {"plus": plus, "minus": minus, "within": within, "keep_operands": keep_operands},
        inputs=["region_embeddings.csv", "assignment.csv", "roads.jsonl"],
        outputs=["arith.json"],
    )
    return result


def _ring_coords(cell: CellId) -> list[list[float]]:
    ring = [[lon, lat] for lon, lat in cell_boundary(cell)]
    # Counterclockwise exterior ring, closed.
    area = 0.0
    for i in range(len(ring)):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % len(ring)]
        area += x1 * y2 - x2 * y1
    if area < 0:
        ring.reverse()
    ring.append(list(ring[0]))
    return ring


def stage_export(ws: Workspace, cfg: dict, color_by: str = "cluster") -> None:
    if color_by not in ("cluster", "rgb"):
        raise DataError(f"unknown export mode {color_by!r}")
    source = "cut.csv" if color_by == "cluster" else "rgb.csv"
    ws.require_artifacts("export", [source, "region_embeddings.csv"])
    region_map = regions.read_region_csv(ws.path("region_embeddings.csv"))
    feats = []
    if color_by == "cluster":
        cut = clustering.read_cut_csv(ws.path("cut.csv"))
        rows = sorted(cut.labels.items())
        out_name = "map_clusters.geojson"
    else:
        rows = []
        with open(ws.path("rgb.csv"), encoding="utf-8") as fh:
            fh.readline()
            for line in fh:
                line = line.strip()
                if line:
                    address, r, g, b = line.split(",")
                    rows.append((address, (int(r), int(g), int(b))))
        rows.sort()
        out_name = "map_rgb.geojson"
    for address, value in rows:
        cell = CellId.from_string(address)
        props = {"cell_address": address}
        if color_by == "cluster":
            props["cluster_id"] = value
        else:
            props["r"], props["g"], props["b"] = value
        if cell in region_map:
            props["segment_count"] = region_map[cell].segment_count
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [_ring_coords(cell)]},
                "properties": props,
            }
        )
    with open(ws.path(out_name), "w", encoding="utf-8", newline="") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh,
                  sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    ws.record_stage(
        "export",
        {"color_by": color_by},
        inputs=[source, "region_embeddings.csv"],
        outputs=[out_name],
    )


def _stage_cfg(cfg: dict, *keys: str) -> dict:
    return {k: cfg[k] for k in keys}


STAGES = (
    "ingest", "featurize", "index", "train", "embed",
    "aggregate", "cluster", "project", "arith", "export",
)


def run_stage(ws: Workspace, name: str, cfg: dict, **kwargs) -> None:
    """Run one named stage with timing and a run log."""
    handlers = {
        "ingest": stage_ingest,
        "featurize": stage_featurize,
        "index": stage_index,
        "train": stage_train,
        "embed": stage_embed,
        "aggregate": stage_aggregate,
        "cluster": stage_cluster,
        "project": stage_project,
        "arith": stage_arith,
        "export": stage_export,
    }
    if name not in handlers:
        raise DataError(f"unknown stage {name!r}")
    start = time.monotonic()
    result = handlers[name](ws, cfg, **kwargs)
    ws.write_log(name, cfg, time.monotonic() - start)
    return result
