"""Run manifests: what was run, with which config, and what it produced."""
from __future__ import annotations

import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict

import orjson
import xxhash
from pydantic import BaseModel, Field, PrivateAttr

from edgesense import __version__
from edgesense.config import get_settings
from edgesense.models import ExperimentConfig, dump_config
from edgesense.storage import atomic_write_bytes, file_digest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def config_hash(config: ExperimentConfig) -> str:
    """xxhash64 of the canonical TOML dump."""

    return xxhash.xxh64(dump_config(config).encode("utf-8")).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest(BaseModel):
    config_hash: str
    seed: int
    version: str = __version__
    command: str
    environment: str = Field(default_factory=lambda: get_settings().env)
    tolerances: Dict[str, Any] = Field(default_factory=lambda: get_settings().linalg_tolerances())
    results: Dict[str, str] = Field(default_factory=dict)
    started_at: str = Field(default_factory=_utc_now)
    finished_at: str | None = None
    elapsed_s: float | None = None
    _clock: float | None = PrivateAttr(default=None)

    @classmethod
    def start(cls, config: ExperimentConfig, command: str) -> "RunManifest":
        manifest = cls(config_hash=config_hash(config), seed=config.seed, command=command)
        manifest._clock = time.perf_counter()
        return manifest

    def record(self, path: str | Path) -> None:
        """Register a result file by name with its content digest."""

        self.results[Path(path).name] = file_digest(path)

    def finish(self, out_dir: str | Path) -> Path:
        """Stamp the end time and write the manifest atomically."""

        self.finished_at = _utc_now()
        if self._clock is not None:
            self.elapsed_s = time.perf_counter() - self._clock
        path = Path(out_dir) / MANIFEST_NAME
        payload: Dict[str, Any] = self.model_dump()
        atomic_write_bytes(path, orjson.dumps(payload, option=orjson.OPT_INDENT_2 |
                                              orjson.OPT_SORT_KEYS))
        logger.info("%s finished with %d result files", self.command, len(self.results))
        return path
