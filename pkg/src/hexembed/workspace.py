"""File-based workspace with content-hash staleness tracking.

Every stage records the sha256 of the inputs it read and the outputs it
wrote into `manifest.json`. Before a stage runs, the current hash of each
input artifact is compared against the hash recorded by the stage that
produced it; any drift (or a missing artifact) refuses the run and names the
stage that must be re-run. The manifest carries no timestamps so reruns of
an unchanged pipeline leave it byte-identical; wall-clock details go to
`logs/<stage>.json` instead.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass

from .errors import DataError, StalenessError

MANIFEST_VERSION = "1"

# Artifact -> producing stage.
PRODUCERS = {
    "roads.jsonl": "ingest",
    "schema.json": "featurize",
    "features.csv": "featurize",
    "stats.json": "featurize",
    "assignment.csv": "index",
    "model.json": "train",
    "loss_history.csv": "train",
    "segment_embeddings.csv": "embed",
    "region_embeddings.csv": "aggregate",
    "dendrogram.csv": "cluster",
    "dendrogram_leaves.csv": "cluster",
    "cut.csv": "cluster",
    "splits.csv": "cluster",
    "pca.csv": "project",
    "rgb.csv": "project",
    "tsne.csv": "project",
    "arith.json": "arith",
    "map_clusters.geojson": "export",
    "map_rgb.geojson": "export",
}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class Workspace:
    root: str

    def __post_init__(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        os.makedirs(os.path.join(self.root, "logs"), exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    @property
    def manifest_path(self) -> str:
        return self.path("manifest.json")

    def load_manifest(self) -> dict:
        if not os.path.exists(self.manifest_path):
            return {"schema_version": MANIFEST_VERSION, "stages": {}}
        with open(self.manifest_path, encoding="utf-8") as fh:
            return json.load(fh)

    def save_manifest(self, manifest: dict) -> None:
        with open(self.manifest_path, "w", encoding="utf-8", newline="") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def require_artifacts(self, stage: str, names: list[str]) -> None:
        """Refuse to run `stage` unless every artifact is fresh."""
        manifest = self.load_manifest()
        stages = manifest.get("stages", {})
        for name in names:
            producer = PRODUCERS.get(name)
            path = self.path(name)
            if producer is None:
                if not os.path.exists(path):
                    raise DataError(f"stage '{stage}': missing input file {path}")
                continue
            record = stages.get(producer)
            if record is None or name not in record.get("outputs", {}):
                raise StalenessError(
                    f"stage '{stage}' needs {name}; run stage '{producer}' first"
                )
            if not os.path.exists(path):
                raise StalenessError(
                    f"stage '{stage}': {name} is missing; stage '{producer}' is stale"
                )
            current = sha256_file(path)
            if current != record["outputs"][name]:
                raise StalenessError(
                    f"stage '{stage}': {name} changed since stage '{producer}' ran; "
                    f"re-run '{producer}'"
                )

    def record_stage(
        self,
        stage: str,
        config: dict,
        inputs: list[str],
        outputs: list[str],
        external_inputs: list[str] | None = None,
    ) -> None:
        manifest = self.load_manifest()
        record = {
            "config": config,
            "inputs": {},
            "outputs": {},
        }
        for name in inputs:
            record["inputs"][name] = sha256_file(self.path(name))
        for path in external_inputs or []:
            record["inputs"][path] = sha256_file(path)
        for name in outputs:
            record["outputs"][name] = sha256_file(self.path(name))
        manifest.setdefault("stages", {})[stage] = record
        manifest["schema_version"] = MANIFEST_VERSION
        self.save_manifest(manifest)

    def write_log(self, stage: str, config: dict, duration_s: float) -> None:
        log = {
            "stage": stage,
            "config": config,
            "duration_s": duration_s,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        path = os.path.join(self.root, "logs", f"{stage}.json")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(log, fh, indent=2, sort_keys=True)
            fh.write("\n")
