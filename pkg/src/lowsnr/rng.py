"""Counter-based random fields.

Every pixel's draw is addressed by ``(seed, stream, index, row, col)``:
the Philox key comes from ``(seed, stream, index)`` and the Philox counter
is the pixel's linear offset in the full scene. Generating any rectangular
tile therefore reproduces exactly the bits of the same pixels in a
full-scene draw.
"""
from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _stream_id(stream: str) -> int:
    return zlib.crc32(stream.encode("utf8"))


def philox_key(seed: int, stream: str, index: int = 0) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _stream_id(stream), int(index)])
    return ss.generate_state(2, dtype=np.uint64)


def _raw_tile(key, shape, r0, r1, c0, c1) -> np.ndarray:
    """Four uint64 words per pixel for rows [r0, r1) and cols [c0, c1)."""
    cols = shape[1]
    width = c1 - c0
    out = np.empty((r1 - r0, width, 4), dtype=np.uint64)
    for r in range(r0, r1):
        bg = np.random.Philox(key=key, counter=r * cols + c0)
        out[r - r0] = bg.random_raw(4 * width).reshape(width, 4)
    return out


def _to_complex(raw: np.ndarray) -> np.ndarray:
    """Two unit-power circular complex Gaussians per pixel from four words."""
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53  # (0, 1]
    out = np.empty(raw.shape[:-1] + (2,), dtype=np.complex128)
    for k in range(2):
        radius = np.sqrt(-np.log(u[..., 2 * k]))
        angle = _TWO_PI * u[..., 2 * k + 1]
        out[..., k].real = radius * np.cos(angle)
        out[..., k].imag = radius * np.sin(angle)
    return out


def complex_normal_tile(seed, stream, index, shape, r0, r1, c0, c1) -> np.ndarray:
    """``(r1-r0, c1-c0, 2)`` unit-power complex normals for one tile."""
    return _to_complex(_raw_tile(philox_key(seed, stream, index), shape, r0, r1, c0, c1))


def tiles(shape, tile_rows: int = 256, tile_cols: int | None = None):
    rows, cols = shape
    tile_cols = tile_cols or cols
    for r0 in range(0, rows, tile_rows):
        for c0 in range(0, cols, tile_cols):
            yield r0, min(r0 + tile_rows, rows), c0, min(c0 + tile_cols, cols)


def complex_normal_field(seed, stream, index, shape, *, jobs: int = 1, tile_rows: int = 256,
                         tile_cols: int | None = None) -> np.ndarray:
    """Full-scene ``(rows, cols, 2)`` field of unit-power complex normals.

    Output bits do not depend on ``jobs`` or the tiling.
    """
    shape = tuple(int(s) for s in shape)
    key = philox_key(seed, stream, index)
    out = np.empty(shape + (2,), dtype=np.complex128)

    def fill(t):
        r0, r1, c0, c1 = t
        out[r0:r1, c0:c1] = _to_complex(_raw_tile(key, shape, r0, r1, c0, c1))

    todo = list(tiles(shape, tile_rows, tile_cols))
    if jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fill, todo))
    else:
        for t in todo:
            fill(t)
    return out
