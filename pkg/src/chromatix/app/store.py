"""Content-addressed image store: blob id is the hex sha256 of the raw
bytes, so identical content always maps to one id and corruption is
detectable by re-hashing."""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
from typing import Optional

from PIL import Image


class NotFoundError(KeyError):
    """Unknown image or job id."""


class CorruptionError(RuntimeError):
    """Stored blobs whose bytes no longer match their id."""

    def __init__(self, ids):
        super().__init__(f"corrupted blobs: {sorted(ids)}")
        self.ids = sorted(ids)


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def png_dims(data: bytes):
    with Image.open(io.BytesIO(data)) as img:
        return img.width, img.height


class ImageStore:
    """Thread-safe blob store; multi-reader, writes serialized by a lock.
    With root=None everything stays in memory."""

    def __init__(self, root: Optional[str] = None):
        self.root = root
        self._lock = threading.Lock()
        self._meta = {}
        self._mem = {}
        if root:
            os.makedirs(self.blob_dir, exist_ok=True)
            if os.path.exists(self.meta_path):
                with open(self.meta_path, "r", encoding="utf-8") as fh:
                    self._meta = json.load(fh)

    @property
    def blob_dir(self):
        return os.path.join(self.root, "blobs")

    @property
    def meta_path(self):
        return os.path.join(self.root, "meta.json")

    def _blob_path(self, image_id: str) -> str:
        return os.path.join(self.blob_dir, image_id)

    def put(self, data: bytes, kind: str = "image") -> str:
        """Store raw PNG bytes; returns the content id. Re-putting the
        same bytes is a no-op returning the same id."""
        width, height = png_dims(data)  # validates the payload
        image_id = content_id(data)
        with self._lock:
            if self.root:
                path = self._blob_path(image_id)
                if not os.path.exists(path):
                    tmp = path + ".tmp"
                    with open(tmp, "wb") as fh:
                        fh.write(data)
                    os.replace(tmp, path)
            else:
                self._mem[image_id] = data
            self._meta[image_id] = {"kind": kind, "width": width,
                                    "height": height}
            self._flush_meta()
        return image_id

    def get(self, image_id: str) -> bytes:
        if image_id not in self._meta:
            raise NotFoundError(image_id)
        if self.root:
            with open(self._blob_path(image_id), "rb") as fh:
                return fh.read()
        return self._mem[image_id]

    def meta(self, image_id: str) -> dict:
        if image_id not in self._meta:
            raise NotFoundError(image_id)
        return dict(self._meta[image_id])

    def exists(self, image_id: str) -> bool:
        return image_id in self._meta

    def ids(self):
        return sorted(self._meta)

    def _flush_meta(self):
        if self.root:
            tmp = self.meta_path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self._meta, fh, sort_keys=True)
            os.replace(tmp, self.meta_path)

    def verify(self) -> None:
        """Re-hash every blob; raises CorruptionError listing mismatches."""
        bad = []
        for image_id in self.ids():
            try:
                data = self.get(image_id)
            except (OSError, KeyError):
                bad.append(image_id)
                continue
            if content_id(data) != image_id:
                bad.append(image_id)
        if bad:
            raise CorruptionError(bad)
