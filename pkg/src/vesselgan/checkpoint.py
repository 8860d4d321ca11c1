"""Flat binary parameter checkpoints.

Layout: the 8-byte magic ``b"VGCKPT1\\n"`` followed by one record per named
array, written in insertion order:

    u64 LE  name byte length
    bytes   UTF-8 name
    u64 LE  rank
    u64 LE  extent, repeated `rank` times
    f32 LE  payload, prod(extents) values, row-major

Rank 0 is a scalar (one payload value). Values round-trip through float32,
so loading a file written from float32 state is exact.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MAGIC", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"VGCKPT1\n"


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


def _u64(value: int) -> bytes:
    return int(value).to_bytes(8, "little")


def save_checkpoint(path, named_arrays) -> None:
    """Write {name: array} (or (name, array) pairs) in iteration order."""
    items = named_arrays.items() if hasattr(named_arrays, "items") else named_arrays
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in items:
            arr = np.asarray(arr)
            encoded = name.encode("utf-8")
            fh.write(_u64(len(encoded)))
            fh.write(encoded)
            fh.write(_u64(arr.ndim))
            for extent in arr.shape:
                fh.write(_u64(extent))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read back {name: float32 array}; rejects any other file."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}, expected {MAGIC!r}")
    out: dict[str, np.ndarray] = {}
    i = 8
    n = len(buf)

    def take_u64() -> int:
        nonlocal i
        if i + 8 > n:
            raise CheckpointError(f"{path}: truncated at byte {i}")
        value = int.from_bytes(buf[i : i + 8], "little")
        i += 8
        return value

    while i < n:
        name_len = take_u64()
        if i + name_len > n:
            raise CheckpointError(f"{path}: truncated name at byte {i}")
        try:
            name = buf[i : i + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: undecodable record name at byte {i}") from exc
        i += name_len
        rank = take_u64()
        if rank > 32:
            raise CheckpointError(f"{path}: implausible rank {rank} for {name!r}")
        shape = tuple(take_u64() for _ in range(rank))
        count = 1
        for extent in shape:
            count *= extent
        nbytes = count * 4
        if i + nbytes > n:
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f4", count=count, offset=i).reshape(shape).copy()
        i += nbytes
    return out
