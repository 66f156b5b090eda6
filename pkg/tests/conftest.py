"""Shared fixtures: the bundled corpus and one full pipeline run."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parent.parent
FIXTURE_DIR = REPO / "fixtures" / "gridville"


def run_cli(*args: str, expect: int = 0) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        [sys.executable, "-m", "hexembed.cli", *args],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == expect, (
        f"hexembed {' '.join(args)} -> {proc.returncode}\n"
        f"stdout: {proc.stdout}\nstderr: {proc.stderr}"
    )
    return proc


def run_full_pipeline(workspace: Path, seed: int = 42, k: int = 3) -> None:
    base = ["--workspace", str(workspace), "--seed", str(seed), "--k", str(k)]
    ingest = ["ingest"]
    for city in ("gridville", "hexton", "wardham"):
        ingest += ["--input", str(FIXTURE_DIR / f"{city}.geojson"), "--city", city]
    run_cli(*base, *ingest)
    for stage in ("featurize", "index", "train", "embed", "aggregate", "cluster",
                  "project", "export"):
        run_cli(*base, stage)


@pytest.fixture(scope="session")
def pipeline_ws(tmp_path_factory) -> Path:
    """One full seed-42 pipeline run over the bundled fixture."""
    ws = tmp_path_factory.mktemp("pipeline") / "ws"
    run_full_pipeline(ws)
    return ws


@pytest.fixture(scope="session")
def corpus():
    """Parsed, driveable-filtered fixture corpus with features and assignment."""
    from hexembed.features import DEFAULT_DRIVEABLE_HIGHWAYS, default_schema, encode_network
    from hexembed.gridville import CITIES
    from hexembed.hexgrid import assign_network
    from hexembed.roads import filter_driveable, merge_networks, parse_road_collection

    nets = []
    for city in CITIES:
        data = (FIXTURE_DIR / f"{city}.geojson").read_bytes()
        net, _ = parse_road_collection(data, city)
        nets.append(net)
    net = filter_driveable(merge_networks(nets), set(DEFAULT_DRIVEABLE_HIGHWAYS))
    schema = default_schema()
    ids, matrix = encode_network(net, schema)
    assignment = assign_network(net, 9)
    return {
        "net": net,
        "schema": schema,
        "ids": ids,
        "matrix": matrix,
        "assignment": assignment,
    }


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
