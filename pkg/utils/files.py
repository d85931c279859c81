# utils/files.py
from __future__ import annotations

import hashlib
import os
import pathlib
import tempfile


def file_sha256(path: str | pathlib.Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def bytes_sha256(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def atomic_write_bytes(path: str | pathlib.Path, raw: bytes) -> pathlib.Path:
    """Write `raw` to a temp file next to `path`, then rename it into place."""
    target = pathlib.Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile(
        delete=False, dir=target.parent, prefix=f".{target.name}.", suffix=".tmp"
    )
    try:
        tmp.write(raw)
        tmp.flush()
        os.fsync(tmp.fileno())
        tmp.close()
        os.replace(tmp.name, target)
    except BaseException:
        tmp.close()
        pathlib.Path(tmp.name).unlink(missing_ok=True)
        raise
    return target


def atomic_write_text(path: str | pathlib.Path, text: str) -> pathlib.Path:
    return atomic_write_bytes(path, text.encode("utf-8"))
