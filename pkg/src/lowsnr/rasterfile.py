"""Flat-binary raster files with JSON sidecars.

Layout: row-major, little-endian. Complex rasters are interleaved float32
(re, im); real rasters are float32; label rasters are int32. Each
``<name>.bin`` has a ``<name>.json`` sidecar with rows, cols, dtype, pixel
spacing, wavelength, date, units and free-form extras.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .core import SlcRaster, SlcStack

_DTYPES = {
    "complex64": np.dtype("<c8"),
    "float32": np.dtype("<f4"),
    "int32": np.dtype("<i4"),
}


class RasterFormatError(ValueError):
    pass


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_raster(path, array, *, units: str, pixel_spacing_m=(1.0, 1.0),
                 wavelength_m: float | None = None, date: float | None = None,
                 extra: dict | None = None) -> Path:
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2:
        raise RasterFormatError(f"only 2-D rasters are stored, got shape {array.shape}")
    if np.iscomplexobj(array):
        kind = "complex64"
    elif np.issubdtype(array.dtype, np.integer):
        kind = "int32"
    else:
        kind = "float32"
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(array, dtype=_DTYPES[kind])
    path.write_bytes(data.tobytes())
    meta = {
        "rows": int(array.shape[0]),
        "cols": int(array.shape[1]),
        "dtype": kind,
        "byte_order": "little",
        "pixel_spacing_m": [float(s) for s in pixel_spacing_m],
        "wavelength_m": None if wavelength_m is None else float(wavelength_m),
        "date": None if date is None else float(date),
        "units": units,
        "sha256": hashlib.sha256(data.tobytes()).hexdigest(),
    }
    if extra:
        meta["extra"] = extra
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_sidecar(path) -> dict:
    side = _sidecar_path(Path(path))
    if not side.exists():
        raise RasterFormatError(f"missing sidecar {side}")
    return json.loads(side.read_text())


def read_raster(path, *, verify: bool = True) -> tuple[np.ndarray, dict]:
    """Load a raster and its sidecar; ``verify`` checks size and checksum."""
    path = Path(path)
    meta = read_sidecar(path)
    if not path.exists():
        raise RasterFormatError(f"missing raster {path}")
    dtype = _DTYPES.get(meta.get("dtype"))
    if dtype is None:
        raise RasterFormatError(f"{path}: unknown dtype {meta.get('dtype')!r}")
    raw = path.read_bytes()
    expected = meta["rows"] * meta["cols"] * dtype.itemsize
    if len(raw) != expected:
        raise RasterFormatError(f"{path}: {len(raw)} bytes, sidecar implies {expected}")
    if verify and meta.get("sha256") and hashlib.sha256(raw).hexdigest() != meta["sha256"]:
        raise RasterFormatError(f"{path}: checksum mismatch")
    arr = np.frombuffer(raw, dtype=dtype).reshape(meta["rows"], meta["cols"])
    if dtype.kind == "c":
        arr = arr.astype(np.complex128)
    elif dtype.kind == "f":
        arr = arr.astype(np.float64)
    else:
        arr = arr.astype(np.int64)
    return arr, meta


def write_stack(directory, stack: SlcStack, extra: dict | None = None) -> list[Path]:
    directory = Path(directory)
    paths = []
    for i, slc in enumerate(stack):
        info = {"incidence_deg": slc.incidence_deg.tolist(), "index": i}
        if extra:
            info.update(extra)
        paths.append(write_raster(directory / f"slc_{i:03d}.bin", slc.data, units="complex amplitude",
                                  pixel_spacing_m=slc.pixel_spacing_m, wavelength_m=slc.wavelength_m,
                                  date=slc.date, extra=info))
    return paths


def read_stack(directory, *, verify: bool = True) -> SlcStack:
    directory = Path(directory)
    files = sorted(directory.glob("slc_*.bin"))
    if len(files) < 2:
        raise RasterFormatError(f"{directory}: expected at least two slc_*.bin files")
    slcs = []
    for f in files:
        data, meta = read_raster(f, verify=verify)
        slcs.append(SlcRaster(data=data, wavelength_m=meta["wavelength_m"],
                              incidence_deg=np.asarray(meta["extra"]["incidence_deg"]),
                              date=meta["date"], pixel_spacing_m=tuple(meta["pixel_spacing_m"])))
    return SlcStack(tuple(slcs))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
