"""Flat binary parameter container.

Layout: magic b"ANTQ", format version (u32), parameter count (u32); then per
parameter: name length (u16), UTF-8 name bytes, rank (u8), dims (u32 each),
values row-major little-endian f32. All integers little-endian. A file
written by ``save`` and re-saved after ``load`` is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .tensor import Tensor

MAGIC = b"ANTQ"
FORMAT_VERSION = 1


def save(path, params: dict[str, Tensor]) -> None:
    """Write named parameters in insertion order, cast to f32."""
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise DataFormatError(f"parameter name too long: {name!r}")
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        if arr.ndim > 0xFF:
            raise DataFormatError(f"parameter rank too large: {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load(path) -> dict[str, np.ndarray]:
    """Read a parameter file back as name -> float64 array (f32 widens exactly)."""
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise DataFormatError(f"{path}: truncated while reading {what} at byte {pos}")
        piece = view[pos:pos + n]
        pos += n
        return piece

    if bytes(take(4, "magic")) != MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a parameter file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported format version {version}")
    params: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"name length of parameter {i}"))
        name = bytes(take(name_len, f"name of parameter {i}")).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, f"rank of '{name}'"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of '{name}'"))
        n_values = 1
        for d in dims:
            n_values *= d
        values = np.frombuffer(take(4 * n_values, f"values of '{name}'"), dtype="<f4")
        if name in params:
            raise DataFormatError(f"{path}: duplicate parameter name '{name}'")
        params[name] = values.reshape(dims).astype(np.float64)
    if pos != len(view):
        raise DataFormatError(f"{path}: {len(view) - pos} trailing bytes after last parameter")
    return params


def load_into(path, params: dict[str, Tensor]) -> None:
    """Load a file and copy values into an existing parameter dict in place."""
    loaded = load(path)
    if set(loaded) != set(params):
        missing = sorted(set(params) - set(loaded))
        extra = sorted(set(loaded) - set(params))
        raise DataFormatError(
            f"{path}: parameter names disagree (missing {missing}, unexpected {extra})"
        )
    for name, tensor in params.items():
        arr = loaded[name]
        if arr.shape != tensor.data.shape:
            raise DataFormatError(
                f"{path}: shape mismatch for '{name}': file {arr.shape}, model {tensor.data.shape}"
            )
        tensor.data = arr
