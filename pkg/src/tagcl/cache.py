"""Content-addressed JSON cache: one file per key, atomic writes.

Writers of distinct keys never interfere; concurrent writers of the same
key race benignly because identical keys imply identical payloads
(last rename wins). This is what makes bulk augmentation resumable.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path


def canonical_json(obj) -> str:
    """Stable serialization used for cache payloads and digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class CacheStore:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def put(self, key: str, payload: dict) -> None:
        """Write via temp file then rename so readers never see partial JSON."""
        tmp = self.directory / f".{key}.{os.getpid()}.{uuid.uuid4().hex}.tmp"
        tmp.write_text(canonical_json(payload), encoding="utf-8")
        os.replace(tmp, self._path(key))

    def __contains__(self, key: str) -> bool:
        return self._path(key).exists()

    def keys(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))
