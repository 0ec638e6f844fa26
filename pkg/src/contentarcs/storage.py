"""Atomic file writes and canonical-document files."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Any

from .identity import canonical_bytes, parse_canonical


def atomic_write(path: str | Path, data: bytes, mode: int | None = None) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        if mode is not None:
            os.chmod(tmp, mode)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_document(path: str | Path, document: Any, mode: int | None = None) -> None:
    atomic_write(path, canonical_bytes(document) + b"\n", mode=mode)


def read_document(path: str | Path) -> Any:
    return parse_canonical(Path(path).read_bytes().strip())
