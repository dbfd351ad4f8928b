"""CWTS tensor container: the bit-exact on-disk format for model weights.

Layout (all integers little-endian, no padding between records):

    magic   4 bytes  b"CWTS"
    u32     version, currently 1
    u32     tensor count
    per tensor:
        u16     name length
        bytes   UTF-8 name
        u8      dtype tag (0 = float32)
        u8      ndim
        u32[.]  dims
        bytes   raw little-endian float32 payload

Tensors are written in sorted-name order so identical contents always
produce identical bytes.
"""

from __future__ import annotations

import hashlib
import io
import struct

import numpy as np

MAGIC = b"CWTS"
VERSION = 1
DTYPE_F32 = 0


class WeightsError(Exception):
    """A CWTS file failed to parse or failed validation."""


def _write_stream(fh, tensors: dict) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<BB", DTYPE_F32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def save_weights(path, tensors: dict) -> None:
    with open(path, "wb") as fh:
        _write_stream(fh, tensors)


def weights_bytes(tensors: dict) -> bytes:
    buf = io.BytesIO()
    _write_stream(buf, tensors)
    return buf.getvalue()


def weights_digest(tensors: dict) -> str:
    """Hex digest identifying the exact tensor contents."""
    return hashlib.sha256(weights_bytes(tensors)).hexdigest()


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise WeightsError(f"truncated file while reading {what}")
    return data


def _parse_stream(fh) -> dict:
    if _read_exact(fh, 4, "magic") != MAGIC:
        raise WeightsError("bad magic, not a CWTS file")
    version, count = struct.unpack("<II", _read_exact(fh, 8, "header"))
    if version != VERSION:
        raise WeightsError(f"unsupported version {version}")
    tensors = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2, f"tensor {i} name length"))
        name = _read_exact(fh, name_len, f"tensor {i} name").decode("utf-8")
        dtype, ndim = struct.unpack("<BB", _read_exact(fh, 2, f"{name} dtype/ndim"))
        if dtype != DTYPE_F32:
            raise WeightsError(f"{name}: unknown dtype tag {dtype}")
        dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, f"{name} dims"))
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        payload = _read_exact(fh, 4 * n, f"{name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return tensors


def load_weights(path) -> dict:
    with open(path, "rb") as fh:
        tensors = _parse_stream(fh)
        if fh.read(1):
            raise WeightsError("trailing bytes after last tensor")
    return tensors


def validate_names(tensors: dict, expected: dict, context: str) -> None:
    """Check that every expected tensor is present with matching dims.

    expected maps name -> shape tuple. Raises WeightsError naming the
    first offending tensor.
    """
    for name, shape in expected.items():
        if name not in tensors:
            raise WeightsError(f"{context}: missing tensor {name!r}")
        got = tuple(tensors[name].shape)
        if got != tuple(shape):
            raise WeightsError(
                f"{context}: tensor {name!r} has dims {got}, expected {tuple(shape)}")
    extra = set(tensors) - set(expected)
    if extra:
        raise WeightsError(f"{context}: unexpected tensors {sorted(extra)}")
