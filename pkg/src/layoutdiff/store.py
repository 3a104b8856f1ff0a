"""Content-addressed blob store and atomic JSON documents on disk."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class BlobStore:
    """Immutable bytes keyed by their sha256; writes are atomic."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def _path(self, digest: str) -> Path:
        return self.root / digest[:2] / digest

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self._path(digest)
        if not path.exists():
            _atomic_write(path, data)
        return digest

    def get(self, digest: str) -> bytes:
        path = self._path(digest)
        if not path.exists():
            raise KeyError(digest)
        return path.read_bytes()

    def __contains__(self, digest: str) -> bool:
        return self._path(digest).exists()


class DocumentStore:
    """One JSON document per key, written atomically."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def save(self, key: str, doc: dict) -> None:
        _atomic_write(self.root / f"{key}.json", json.dumps(doc, indent=2).encode("utf-8"))

    def load(self, key: str) -> dict:
        path = self.root / f"{key}.json"
        if not path.exists():
            raise KeyError(key)
        return json.loads(path.read_text())

    def keys(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*.json"))
