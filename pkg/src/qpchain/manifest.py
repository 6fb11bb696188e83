"""Run manifest: config echo, stage timings, and a checksummed file inventory.

The manifest is the contract for reruns (same config and seed reproduce the
recorded checksums) and for stage dependencies (a stage may only read files
some earlier stage wrote and recorded).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from . import __version__

MANIFEST_NAME = "manifest.json"


class DependencyError(RuntimeError):
    """An upstream artifact is missing or no longer matches the manifest."""


def file_checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    version: str
    config: dict
    lam: float
    seed: int
    stages: dict = field(default_factory=dict)

    def record_stage(self, name, wall_time, inputs, outputs):
        self.stages[name] = {
            "wall_time": float(wall_time),
            "inputs": list(inputs),
            "outputs": dict(outputs),
        }

    def recorded_outputs(self) -> dict:
        inventory = {}
        for entry in self.stages.values():
            inventory.update(entry["outputs"])
        return inventory

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "lambda": self.lam,
            "seed": self.seed,
            "stages": self.stages,
        }


def manifest_path(outdir: str) -> str:
    return os.path.join(outdir, MANIFEST_NAME)


def load_manifest(outdir: str) -> RunManifest | None:
    path = manifest_path(outdir)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return RunManifest(
        version=raw["version"],
        config=raw["config"],
        lam=raw["lambda"],
        seed=raw["seed"],
        stages=raw["stages"],
    )


def write_manifest(outdir: str, manifest: RunManifest):
    with open(manifest_path(outdir), "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def open_manifest(outdir: str, config_dict: dict, lam: float, seed: int) -> RunManifest:
    """Load the run's manifest or start one; config and seed are pinned."""
    manifest = load_manifest(outdir)
    if manifest is None:
        return RunManifest(
            version=__version__, config=config_dict, lam=lam, seed=seed
        )
    manifest.version = __version__
    manifest.config = config_dict
    manifest.lam = lam
    manifest.seed = seed
    return manifest


def require_inputs(outdir: str, manifest: RunManifest | None, stage: str, names, producers):
    """Every declared input must be a recorded, unchanged upstream output."""
    inventory = manifest.recorded_outputs() if manifest is not None else {}
    for name in names:
        producer = producers.get(name, "an upstream stage")
        path = os.path.join(outdir, name)
        if name not in inventory or not os.path.exists(path):
            raise DependencyError(
                f"stage '{stage}' needs '{name}'; run '{producer}' first"
            )
        if file_checksum(path) != inventory[name]:
            raise DependencyError(
                f"artifact '{name}' is stale (checksum differs from the "
                f"manifest); rerun '{producer}'"
            )
