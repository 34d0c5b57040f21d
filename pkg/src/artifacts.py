"""Artifact manifests: which command, config and inputs produced a file."""

import hashlib
import json
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel

from .config import PipelineConfig, config_hash

MANIFEST_SUFFIX = ".manifest.json"


class Manifest(BaseModel):
    command: str
    config_hash: str
    input_hashes: dict[str, str]
    seed: int | None = None


def file_hash(path: str | Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifest(
    artifact: str | Path,
    command: str,
    config: PipelineConfig,
    inputs: Sequence[str | Path],
    seed: int | None = None,
) -> Path:
    """Write ``<artifact>.manifest.json``; inputs that do not exist are skipped."""
    hashes = {str(Path(p)): file_hash(p) for p in sorted(map(str, inputs)) if Path(p).is_file()}
    manifest = Manifest(command=command, config_hash=config_hash(config), input_hashes=hashes, seed=seed)
    path = manifest_path(artifact)
    path.write_text(json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(artifact: str | Path) -> Manifest:
    return Manifest.model_validate_json(manifest_path(artifact).read_text(encoding="utf-8"))
