"""Result persistence: plain-text matrices, CSV tables, checkpoints and atomic writes."""
from __future__ import annotations

import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

import joblib
import numpy as np
import pandas as pd
import xxhash

from edgesense.errors import DimensionMismatch

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
CSV_FLOAT_FORMAT = "%.17g"


@contextmanager
def atomic_path(path: str | Path) -> Iterator[Path]:
    """Yield a temporary sibling of ``path`` and move it into place on success."""

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    with atomic_path(path) as tmp:
        tmp.write_bytes(payload)
    return Path(path)


def file_digest(path: str | Path) -> str:
    return xxhash.xxh64(Path(path).read_bytes()).hexdigest()


def write_matrix(path: str | Path, matrix: np.ndarray) -> Path:
    """Header ``rows cols`` then one row per line, full precision."""

    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [f"{matrix.shape[0]} {matrix.shape[1]}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in matrix)
    return atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_matrix(path: str | Path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="utf-8").split()
    if len(tokens) < 2:
        raise DimensionMismatch(f"{path}: missing 'rows cols' header")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = np.array([float(t) for t in tokens[2:]])
    if values.size != rows * cols:
        raise DimensionMismatch(f"{path}: header says {rows}x{cols}, found {values.size} values")
    return values.reshape(rows, cols)


def write_table(path: str | Path, frame: pd.DataFrame) -> Path:
    """CSV with a fixed float format so reruns are byte identical."""

    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return Path(path)


def save_checkpoint(path: str | Path, payload: dict[str, Any]) -> Path:
    with atomic_path(path) as tmp:
        joblib.dump({"format_version": CHECKPOINT_FORMAT_VERSION, **payload}, tmp)
    logger.info("saved checkpoint %s", path)
    return Path(path)


def load_checkpoint(path: str | Path) -> dict[str, Any]:
    payload = joblib.load(path)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {version!r}")
    return payload
