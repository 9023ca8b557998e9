"""Content-addressed cache for raw downloads.

Keys are SHA-256 hashes of a canonical JSON encoding of the request
parameters, so identical requests hit the same entry regardless of argument
order, and re-runs never touch the network.
"""

import hashlib
import json
import os
from pathlib import Path

DEFAULT_CACHE = Path(os.environ.get("MESHVEC_INGEST_CACHE",
                                    Path.home() / ".cache" / "meshvec-ingest"))


def request_key(request: dict) -> str:
    canon = json.dumps(request, sort_keys=True, separators=(",", ":"),
                       default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


class RawCache:
    def __init__(self, root=None):
        self.root = Path(root) if root is not None else DEFAULT_CACHE

    def path_for(self, request: dict) -> Path:
        key = request_key(request)
        return self.root / key[:2] / key

    def get(self, request: dict):
        path = self.path_for(request)
        return path.read_bytes() if path.exists() else None

    def put(self, request: dict, payload: bytes) -> Path:
        path = self.path_for(request)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(payload)
        os.replace(tmp, path)
        return path
