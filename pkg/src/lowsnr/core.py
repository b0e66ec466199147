"""Domain types and raster arithmetic shared by every processing stage.

Conventions
-----------
* Rasters are row-major numpy arrays with the origin at the top-left.
* Masked pixels in real grids are NaN and are excluded from statistics.
* Power-like quantities (sigma0, NESZ, SNR) are carried in dB.
* A positive unwrapped phase is motion toward the sensor and maps to a
  positive LOS displacement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DAYS_PER_YEAR = 365.25


class GeometryError(ValueError):
    """Rasters or stacks whose shapes/geometry do not line up."""


@dataclass(frozen=True, eq=False)
class SlcRaster:
    """One single-look complex acquisition.

    ``incidence_deg`` holds one incidence angle per range column.
    ``pixel_spacing_m`` is ``(row, col)``. ``date`` is in days since an
    arbitrary epoch.
    """

    data: np.ndarray
    wavelength_m: float
    incidence_deg: np.ndarray
    date: float
    pixel_spacing_m: tuple[float, float] = (7.0, 7.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] == 0:
            raise GeometryError(f"SLC data must be a non-empty 2-D grid, got shape {data.shape}")
        if not np.iscomplexobj(data):
            data = data.astype(np.complex128)
        inc = np.asarray(self.incidence_deg, dtype=np.float64)
        if inc.ndim == 0:
            inc = np.full(data.shape[1], float(inc))
        if inc.shape != (data.shape[1],):
            raise GeometryError(f"incidence_deg needs one value per column ({data.shape[1]}), got {inc.shape}")
        if not np.all((inc > 0) & (inc < 90)):
            raise ValueError("incidence angles must lie in (0, 90) degrees")
        if not self.wavelength_m > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength_m}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "incidence_deg", inc)
        object.__setattr__(self, "pixel_spacing_m", tuple(float(s) for s in self.pixel_spacing_m))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "SlcRaster":
        return replace(self, data=data)


@dataclass(frozen=True, eq=False)
class SlcStack:
    """Time-ordered SLCs sharing one geometry."""

    slcs: tuple[SlcRaster, ...]

    def __post_init__(self):
        slcs = tuple(self.slcs)
        if len(slcs) < 2:
            raise GeometryError("a stack needs at least two acquisitions")
        first = slcs[0]
        for s in slcs[1:]:
            if s.shape != first.shape:
                raise GeometryError(f"SLC shape {s.shape} != {first.shape}")
            if s.wavelength_m != first.wavelength_m:
                raise GeometryError("SLCs in a stack must share the wavelength")
            if not np.array_equal(s.incidence_deg, first.incidence_deg):
                raise GeometryError("SLCs in a stack must share the incidence field")
        dates = [s.date for s in slcs]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError(f"acquisition dates must be strictly increasing, got {dates}")
        object.__setattr__(self, "slcs", slcs)

    def __len__(self):
        return len(self.slcs)

    def __getitem__(self, i):
        return self.slcs[i]

    def __iter__(self):
        return iter(self.slcs)

    @property
    def dates(self) -> np.ndarray:
        return np.array([s.date for s in self.slcs], dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.slcs[0].shape

    @property
    def wavelength_m(self) -> float:
        return self.slcs[0].wavelength_m

    @property
    def incidence_deg(self) -> np.ndarray:
        return self.slcs[0].incidence_deg

    @property
    def pixel_spacing_m(self) -> tuple[float, float]:
        return self.slcs[0].pixel_spacing_m

    def data(self) -> np.ndarray:
        """All acquisitions as one ``(n_dates, rows, cols)`` complex array."""
        return np.stack([s.data for s in self.slcs])


@dataclass(frozen=True, eq=False)
class Interferogram:
    """Wrapped phase and coherence for one date pair (``date_a < date_b``)."""

    wrapped_phase: np.ndarray
    coherence: np.ndarray
    date_a: float
    date_b: float
    n_looks: int = 1
    wavelength_m: float = 0.24
    pixel_spacing_m: tuple[float, float] = (7.0, 7.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.date_a < self.date_b:
            raise ValueError(f"interferogram needs date_a < date_b, got {self.date_a}, {self.date_b}")
        if int(self.n_looks) < 1:
            raise ValueError("n_looks must be >= 1")
        if np.shape(self.wrapped_phase) != np.shape(self.coherence):
            raise GeometryError("phase and coherence grids differ in shape")


def _check_finite(x):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("dB conversion needs finite input")
    return arr


def db_to_linear(x_db):
    """10**(x/10) for finite decibel input (scalar or array)."""
    arr = _check_finite(x_db)
    out = np.power(10.0, arr / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(x):
    """Inverse of :func:`db_to_linear`; zero power maps to ``-inf``."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("linear power must be non-negative")
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(arr)
    return float(out) if out.ndim == 0 else out


def multilook(raster: np.ndarray, win_rows: int, win_cols: int) -> np.ndarray:
    """Average non-overlapping ``win_rows x win_cols`` boxes.

    Trailing rows/columns that do not fill a whole window are dropped, so
    every output pixel carries exactly ``win_rows * win_cols`` looks.
    NaNs propagate into the box they sit in.
    """
    raster = np.asarray(raster)
    if win_rows < 1 or win_cols < 1:
        raise ValueError("multilook window must be at least 1x1")
    rows, cols = raster.shape[-2:]
    if win_rows > rows or win_cols > cols:
        raise GeometryError(f"window {win_rows}x{win_cols} larger than raster {rows}x{cols}")
    out_r, out_c = rows // win_rows, cols // win_cols
    lead = raster.shape[:-2]
    trimmed = raster[..., : out_r * win_rows, : out_c * win_cols]
    blocks = trimmed.reshape(*lead, out_r, win_rows, out_c, win_cols)
    return blocks.mean(axis=(-3, -1))


def phase_to_los(phase_rad, wavelength_m: float):
    """Convert interferometric phase (rad) to LOS displacement (m): lambda/(4 pi) * phase."""
    if not wavelength_m > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_m}")
    return np.multiply(phase_rad, wavelength_m / (4.0 * math.pi))


def los_to_phase(los_m, wavelength_m: float):
    if not wavelength_m > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_m}")
    return np.multiply(los_m, 4.0 * math.pi / wavelength_m)


def reference_to_pixel(raster: np.ndarray, ref_row: int, ref_col: int) -> np.ndarray:
    """Subtract the value at ``(ref_row, ref_col)`` so the reference reads exactly 0."""
    raster = np.asarray(raster, dtype=np.float64)
    rows, cols = raster.shape[-2:]
    if not (0 <= ref_row < rows and 0 <= ref_col < cols):
        raise IndexError(f"reference pixel ({ref_row}, {ref_col}) outside {rows}x{cols} raster")
    ref = raster[..., ref_row, ref_col]
    if not np.all(np.isfinite(ref)):
        raise ValueError(f"reference pixel ({ref_row}, {ref_col}) is masked or non-finite")
    out = raster - np.asarray(ref)[..., np.newaxis, np.newaxis]
    out[..., ref_row, ref_col] = 0.0
    return out


def wrap(phase):
    """Wrap to (-pi, pi]."""
    out = np.mod(np.asarray(phase, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    # mod maps +pi to -pi; the interval is half-open on the left.
    return np.where(out == -np.pi, np.pi, out)
