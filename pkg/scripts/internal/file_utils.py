"""Output-directory resolution and artifact discovery."""

from __future__ import annotations

import os
from pathlib import Path

import orjson

from .errors import ReportError

OUTPUT_DIR_ENV = "CNS_OUTPUT_DIR"

ARTIFACT_SUFFIXES = {".json", ".csv"}
EXCLUDED_NAMES = {"run_log.json"}


def resolve_output_dir(out_flag: str | None, configured: str) -> Path:
    """Pick the output directory: --out, then the environment, then the config.

    Args:
        out_flag: Value of --out, if given
        configured: The config's directory value

    Returns:
        Output directory path (not created)
    """
    if out_flag:
        return Path(out_flag)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        return Path(env_dir)
    return Path(configured)


def find_artifacts(directory: Path) -> list[Path]:
    """Find JSON and CSV artifacts below a directory, excluding the sidecar log.

    Args:
        directory: Root directory to search

    Returns:
        Sorted list of artifact paths
    """
    artifacts = []
    for filepath in directory.rglob("*"):
        if not filepath.is_file():
            continue
        if filepath.suffix not in ARTIFACT_SUFFIXES or filepath.name in EXCLUDED_NAMES:
            continue
        artifacts.append(filepath)

    return sorted(artifacts)


def read_artifact_hash(path: Path) -> str | None:
    """Return the config hash embedded in an artifact, or None if absent."""
    if path.suffix == ".csv":
        with open(path) as f:
            first = f.readline().strip()
        for token in first.lstrip("#").split():
            if token.startswith("config_hash="):
                return token.split("=", 1)[1]
        return None
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError:
        return None
    if isinstance(data, dict):
        value = data.get("config_hash")
        return value if isinstance(value, str) else None
    return None


def collect_artifact_hashes(directory: Path) -> dict[str, str | None]:
    """Map every artifact (relative path) to its embedded config hash."""
    hashes = {}
    for path in find_artifacts(directory):
        hashes[str(path.relative_to(directory))] = read_artifact_hash(path)
    return hashes


def require_single_hash(directory: Path) -> str | None:
    """Check that all artifacts of a directory come from one configuration.

    Raises:
        ReportError: If artifacts embed different config hashes
    """
    hashes = collect_artifact_hashes(directory)
    distinct = {h for h in hashes.values() if h is not None}
    if len(distinct) > 1:
        raise ReportError(
            f"Artifacts in {directory} come from {len(distinct)} different configurations",
            details={"hashes": hashes},
        )
    return distinct.pop() if distinct else None
