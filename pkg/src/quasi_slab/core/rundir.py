"""Run directories: artifacts of one command plus a manifest describing them.

Every write goes through a file lock and a temp-file rename, so concurrent
writers (replication workers, a second invocation) never leave a torn file.
"""

import json
import logging
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import scipy
from filelock import FileLock, Timeout

from .config import ExperimentConfig
from .io import format_json, format_matrix, format_trace, write_text_atomic
from .sampler import Trace

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
LOCK_NAME = ".manifest.lock"
LOCK_TIMEOUT = 10


class RunDirError(Exception):
    """Raised when a run directory cannot be created, locked or written."""

    pass


def package_versions() -> dict[str, str]:
    try:
        own = metadata.version("quasi-slab")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {
        "quasi_slab": own,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunDir:
    """Output directory of a single command invocation."""

    CURRENT_VERSION = "1.0"

    def __init__(self, path: Path):
        self._path = Path(path)
        self._manifest_path = self._path / MANIFEST_NAME
        self._lock = FileLock(self._path / LOCK_NAME, timeout=LOCK_TIMEOUT)

    @property
    def path(self) -> Path:
        return self._path

    @property
    def manifest_path(self) -> Path:
        return self._manifest_path

    def is_populated(self) -> bool:
        """True if the directory exists and holds anything besides the lock file."""
        if not self._path.is_dir():
            return False
        return any(child.name != LOCK_NAME for child in self._path.iterdir())

    def _locked(self):
        try:
            self._path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise RunDirError(f"cannot create run directory {self._path}: {e}") from e
        return self._lock

    def _load(self) -> dict:
        """Manifest contents; a missing or corrupted manifest starts fresh."""
        if not self._manifest_path.exists():
            return {"version": self.CURRENT_VERSION, "artifacts": []}
        try:
            data = json.loads(self._manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            logger.warning(f"Manifest {self._manifest_path} unreadable, starting fresh")
            return {"version": self.CURRENT_VERSION, "artifacts": []}
        if not isinstance(data, dict):
            logger.warning(f"Manifest {self._manifest_path} corrupted (not a dict), starting fresh")
            return {"version": self.CURRENT_VERSION, "artifacts": []}
        data.setdefault("artifacts", [])
        return data

    def _update(self, mutate) -> dict:
        try:
            with self._locked():
                data = self._load()
                mutate(data)
                write_text_atomic(self._manifest_path, format_json(data))
                return data
        except Timeout:
            raise RunDirError(
                f"Could not acquire the lock on {self._path} after {LOCK_TIMEOUT} seconds. "
                "Another process may be writing to this run directory."
            )

    def start(self, command: str, config: ExperimentConfig) -> dict:
        """Write a fresh manifest for ``command`` run with ``config``."""
        resolved = config.resolved()

        def mutate(data: dict) -> None:
            data.clear()
            data.update(
                {
                    "version": self.CURRENT_VERSION,
                    "command": command,
                    "config": resolved.to_dict(),
                    "config_hash": config.config_hash(),
                    "versions": package_versions(),
                    "started_at": _now(),
                    "finished_at": None,
                    "status": "running",
                    "artifacts": [],
                }
            )

        logger.info(f"Starting {command} in {self._path} (config {config.config_hash()})")
        return self._update(mutate)

    def finish(self, status: str = "completed") -> dict:
        def mutate(data: dict) -> None:
            data["status"] = status
            data["finished_at"] = _now()

        return self._update(mutate)

    def write_text(self, name: str, text: str, kind: str = "text") -> Path:
        """Write an artifact and register it in the manifest."""
        target = self._path / name

        def mutate(data: dict) -> None:
            write_text_atomic(target, text)
            entries = [a for a in data["artifacts"] if a.get("name") != name]
            entries.append({"name": name, "kind": kind, "written_at": _now()})
            data["artifacts"] = entries

        self._update(mutate)
        return target

    def write_matrix(self, name: str, matrix, columns: list[str] | None = None) -> Path:
        return self.write_text(name, format_matrix(matrix, columns), kind="matrix")

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, format_json(data), kind="json")

    def write_trace(self, name: str, trace: Trace, full_theta: bool = False) -> Path:
        return self.write_text(name, format_trace(trace, full_theta), kind="trace")

    def manifest(self) -> dict:
        """Current manifest.

        Raises:
            RunDirError: If the directory has no manifest.
        """
        if not self._manifest_path.exists():
            raise RunDirError(f"{self._path} has no {MANIFEST_NAME}")
        try:
            with self._locked():
                return self._load()
        except Timeout:
            raise RunDirError(
                f"Could not acquire the lock on {self._path} after {LOCK_TIMEOUT} seconds."
            )

    def artifacts(self) -> list[str]:
        return [a["name"] for a in self.manifest()["artifacts"]]
