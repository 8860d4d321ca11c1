"""8-bit image IO: binary PGM (P5), PPM (P6), and PNG.

The netpbm formats are read and written directly (they are the library's
native formats for labels, masks, and probability maps); PNG goes through
Pillow. All readers return uint8 arrays, (H, W) for grayscale and (H, W, 3)
for color.
"""

from __future__ import annotations

import io

import numpy as np

__all__ = [
    "DecodeError",
    "read_image",
    "read_pnm",
    "write_pgm",
    "write_ppm",
    "read_png",
    "write_png",
]


class DecodeError(ValueError):
    """Unreadable or unsupported image file."""


def _read_pnm_tokens(buf: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer header tokens, honoring # comments."""
    tokens: list[int] = []
    i = start
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < n and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise DecodeError("truncated netpbm header")
        try:
            tokens.append(int(buf[i:j]))
        except ValueError as exc:
            raise DecodeError(f"bad netpbm header token {buf[i:j]!r}") from exc
        i = j
    return tokens, i


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise DecodeError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    (width, height, maxval), i = _read_pnm_tokens(buf, 3, 2)
    if maxval <= 0 or maxval > 255:
        raise DecodeError(f"{path}: unsupported maxval {maxval} (only 8-bit supported)")
    i += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=i) if len(buf) - i >= need else None
    if data is None:
        raise DecodeError(f"{path}: payload truncated (need {need} bytes, have {len(buf) - i})")
    arr = data.reshape(height, width) if channels == 1 else data.reshape(height, width, 3)
    return arr.copy()


def write_pgm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError(f"write_pgm: need a uint8 (H, W) array, got {arr.dtype} {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]))
        fh.write(arr.tobytes())


def write_ppm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"write_ppm: need a uint8 (H, W, 3) array, got {arr.dtype} {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]))
        fh.write(arr.tobytes())


def read_png(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode in ("1", "L", "I;16", "I"):
                img = img.convert("L")
            else:
                img = img.convert("RGB")
            return np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def write_png(path, arr: np.ndarray) -> None:
    from PIL import Image

    arr = np.asarray(arr)
    if arr.dtype != np.uint8 or arr.ndim not in (2, 3):
        raise ValueError(f"write_png: need a uint8 (H, W) or (H, W, 3) array, got {arr.dtype} {arr.shape}")
    Image.fromarray(arr).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """Dispatch on the file's magic bytes: PGM, PPM, or PNG."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P5", b"P6"):
        return read_pnm(path)
    if head[:8] == b"\x89PNG\r\n\x1a\n":
        return read_png(path)
    raise DecodeError(f"{path}: unrecognized image format (magic {head[:4]!r})")
