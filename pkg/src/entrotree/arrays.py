"""Array file formats.

3-D container layout: 8-byte magic ``b"STARR3D\\0"``, then T, N, C as
little-endian uint64, then T*N*C little-endian float64 values in row-major
order. A JSON sidecar (``<path>.json``) carries series metadata.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"STARR3D\x00"
_HEADER = struct.Struct("<8sQQQ")


class ArrayFormatError(ValueError):
    pass


def write_array3(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim != 3:
        raise ArrayFormatError(f"container holds 3-D arrays, got ndim={arr.ndim}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes(order="C"))


def read_array3(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ArrayFormatError(f"{path}: truncated header")
    magic, t, n, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ArrayFormatError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * t * n * c:
        raise ArrayFormatError(f"{path}: expected {t * n * c} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(t, n, c).astype(np.float64)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_series(path, data: np.ndarray, interval: float, start_timestamp: int) -> None:
    write_array3(path, data)
    meta = {"interval": interval, "start_timestamp": start_timestamp,
            "shape": list(np.shape(data))}
    sidecar_path(path).write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def read_series(path) -> tuple[np.ndarray, dict]:
    data = read_array3(path)
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
    return data, meta


def write_matrix_csv(path, m: np.ndarray, fmt: str = "{:.9f}") -> None:
    m = np.asarray(m)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in m:
            fh.write(",".join(fmt.format(x) for x in row) + "\n")


def write_mask_csv(path, allow: np.ndarray) -> None:
    write_matrix_csv(path, np.asarray(allow, dtype=int), fmt="{:d}")


def read_matrix_csv(path) -> np.ndarray:
    rows = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    return np.array([[float(x) for x in r.split(",")] for r in rows])
