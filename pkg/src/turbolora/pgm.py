"""Binary PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np

from .codec import ImageMatrix


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Pull ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise PGMError("truncated PGM header")
        tokens.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    if i >= n or not data[i : i + 1].isspace():
        raise PGMError("missing whitespace after PGM header")
    return tokens, i + 1


def decode_pgm(data: bytes) -> ImageMatrix:
    tokens, offset = _tokens(data, 4)
    if tokens[0] != b"P5":
        raise PGMError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PGMError("non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise PGMError("PGM dimensions must be positive")
    if not 1 <= maxval <= 255:
        raise PGMError(f"only 8-bit PGM is supported (maxval {maxval})")
    raster = data[offset : offset + width * height]
    if len(raster) != width * height:
        raise PGMError(f"PGM raster has {len(raster)} bytes, expected {width * height}")
    return ImageMatrix(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def encode_pgm(image: ImageMatrix) -> bytes:
    return f"P5\n{image.cols} {image.rows}\n255\n".encode("ascii") + image.pixels.tobytes()


def read_pgm(path: str | os.PathLike) -> ImageMatrix:
    with open(path, "rb") as f:
        return decode_pgm(f.read())


def write_pgm(path: str | os.PathLike, image: ImageMatrix) -> None:
    with open(path, "wb") as f:
        f.write(encode_pgm(image))
