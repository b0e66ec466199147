"""Synthetic scenes with exact ground truth.

Speckle is zero-mean circular complex Gaussian. Temporal correlation is
built from three independent parts so that every pair of acquisitions has
population coherence ``rho_inf + (rho0 - rho_inf) * exp(-dt / tau)``::

    s_i = sqrt(rho_inf) * C + sqrt(rho0 - rho_inf) * X_i + sqrt(1 - rho0) * E_i

with ``C`` shared by all dates, ``X_i`` an Ornstein-Uhlenbeck sequence in
time (correlation ``exp(-dt/tau)``) and ``E_i`` white per date.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import DAYS_PER_YEAR, GeometryError, SlcRaster, SlcStack, db_to_linear

VELOCITY_KINDS = ("uniform", "linear-ramp", "fault-step", "gaussian-bowl", "fringe-ramp")
SIGMA0_KINDS = ("uniform", "gradient", "dark-band")


@dataclass(frozen=True, eq=False)
class VelocityField:
    v_los: np.ndarray  # m/yr
    kind: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.v_los)):
            raise ValueError("velocity field must be finite everywhere")

    @property
    def shape(self):
        return self.v_los.shape


@dataclass(frozen=True, eq=False)
class Sigma0Field:
    sigma0_db: np.ndarray
    kind: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.sigma0_db)):
            raise ValueError("sigma0 field must be finite everywhere")
        lo, hi = float(np.min(self.sigma0_db)), float(np.max(self.sigma0_db))
        if lo < -40.0 or hi > 10.0:
            warnings.warn(f"sigma0 spans [{lo:.1f}, {hi:.1f}] dB, outside the usual [-40, 10] dB", stacklevel=3)

    @property
    def shape(self):
        return self.sigma0_db.shape


@dataclass(frozen=True)
class CoherenceModel:
    """Exponential decay toward a floor: ``rho_inf + (rho0 - rho_inf) exp(-dt/tau)``."""

    rho0: float = 0.95
    rho_inf: float = 0.3
    tau_days: float = 365.0

    def __post_init__(self):
        if not 0.0 <= self.rho_inf <= self.rho0 <= 1.0:
            raise ValueError(f"need 0 <= rho_inf <= rho0 <= 1, got rho_inf={self.rho_inf}, rho0={self.rho0}")
        if not self.tau_days > 0:
            raise ValueError("tau_days must be positive")


def true_pairwise_coherence(model: CoherenceModel, dt_days):
    dt = np.asarray(dt_days, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("dt_days must be non-negative")
    out = model.rho_inf + (model.rho0 - model.rho_inf) * np.exp(-dt / model.tau_days)
    return float(out) if out.ndim == 0 else out


def _axis_coord(rows, cols, axis):
    """Normalized 0..1 coordinate along ``axis`` broadcast to the grid."""
    if axis in ("col", "range", 1):
        n = cols
        t = np.arange(cols) / max(cols - 1, 1)
        return np.broadcast_to(t[np.newaxis, :], (rows, cols)), n
    if axis in ("row", "azimuth", 0):
        n = rows
        t = np.arange(rows) / max(rows - 1, 1)
        return np.broadcast_to(t[:, np.newaxis], (rows, cols)), n
    raise ValueError(f"unknown axis {axis!r}")


def make_velocity_field(kind: str, params: dict, rows: int, cols: int) -> VelocityField:
    """Deterministic LOS velocity (m/yr) on a ``rows x cols`` grid.

    ======================  ===================================================
    kind                    params
    ======================  ===================================================
    ``uniform``             ``v``
    ``linear-ramp``         ``v0``, ``v1``, optional ``axis`` (default col)
    ``fault-step``          ``amplitude``, ``column``: 0 left of the strike
                            column, ``amplitude`` from it onward
    ``gaussian-bowl``       ``amplitude``, ``sigma_px``, optional ``center``
    ``fringe-ramp``         ``fringes``, ``span_days``, ``wavelength_m``,
                            optional ``axis``: ``fringes`` cycles of LOS over
                            ``span_days`` across the scene
    ======================  ===================================================
    """
    params = dict(params or {})
    if kind == "uniform":
        v = np.full((rows, cols), float(params.get("v", 0.0)))
    elif kind == "linear-ramp":
        t, _ = _axis_coord(rows, cols, params.get("axis", "col"))
        v0, v1 = float(params["v0"]), float(params["v1"])
        v = v0 + (v1 - v0) * t
    elif kind == "fault-step":
        col = int(params["column"])
        if not 0 <= col <= cols:
            raise ValueError(f"strike column {col} outside 0..{cols}")
        v = np.zeros((rows, cols))
        v[:, col:] = float(params["amplitude"])
    elif kind == "gaussian-bowl":
        r0, c0 = params.get("center", ((rows - 1) / 2.0, (cols - 1) / 2.0))
        sig = float(params["sigma_px"])
        rr, cc = np.mgrid[0:rows, 0:cols]
        v = float(params["amplitude"]) * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * sig**2))
    elif kind == "fringe-ramp":
        t, _ = _axis_coord(rows, cols, params.get("axis", "col"))
        peak_los = float(params["fringes"]) * float(params["wavelength_m"]) / 2.0
        v = peak_los / (float(params["span_days"]) / DAYS_PER_YEAR) * t
    else:
        raise ValueError(f"unknown velocity kind {kind!r}; expected one of {VELOCITY_KINDS}")
    return VelocityField(np.ascontiguousarray(v, dtype=np.float64), kind)


def make_sigma0_field(kind: str, params: dict, rows: int, cols: int) -> Sigma0Field:
    """Backscatter in dB: ``uniform`` (``sigma0_db``), ``gradient``
    (``start_db``, ``stop_db``, ``axis``) or ``dark-band`` (``background_db``,
    ``band_db``, ``start``, ``stop``, ``axis``; the band covers indices
    ``[start, stop)`` along ``axis``, default rows)."""
    params = dict(params or {})
    if kind == "uniform":
        s = np.full((rows, cols), float(params.get("sigma0_db", -10.0)))
    elif kind == "gradient":
        t, _ = _axis_coord(rows, cols, params.get("axis", "col"))
        a, b = float(params["start_db"]), float(params["stop_db"])
        s = a + (b - a) * t
    elif kind == "dark-band":
        s = np.full((rows, cols), float(params["background_db"]))
        start, stop = int(params["start"]), int(params["stop"])
        if params.get("axis", "row") in ("row", 0, "azimuth"):
            s[start:stop, :] = float(params["band_db"])
        else:
            s[:, start:stop] = float(params["band_db"])
    else:
        raise ValueError(f"unknown sigma0 kind {kind!r}; expected one of {SIGMA0_KINDS}")
    return Sigma0Field(np.ascontiguousarray(s, dtype=np.float64), kind)


def ground_truth_los(velocity: VelocityField, date_a: float, date_b: float) -> np.ndarray:
    """True LOS change (m) between two dates."""
    if not date_a < date_b:
        raise ValueError("ground truth needs date_a < date_b")
    return velocity.v_los * ((date_b - date_a) / DAYS_PER_YEAR)


def deformation_phase(velocity: VelocityField, date: float, date0: float, wavelength_m: float) -> np.ndarray:
    """``(4 pi / lambda) * v * (t - t0)``: the interferometric phase accrued since ``date0``."""
    return (4.0 * math.pi / wavelength_m) * velocity.v_los * ((date - date0) / DAYS_PER_YEAR)


def _check_dims(velocity, sigma0):
    if velocity.shape != sigma0.shape:
        raise GeometryError(f"velocity {velocity.shape} and sigma0 {sigma0.shape} differ in shape")


def synthesize_slc_stack(velocity: VelocityField, sigma0: Sigma0Field, dates, coherence_model: CoherenceModel,
                         wavelength_m: float, seed: int, *, incidence_deg=40.0, pixel_spacing_m=(7.0, 7.0),
                         nesz_db: float | None = None, jobs: int = 1) -> SlcStack:
    """Correlated speckle stack carrying the deformation phase of ``velocity``.

    Each SLC carries phase ``-(4 pi / lambda) * v * (t_i - t_0)`` so that the
    interferogram ``s_a * conj(s_b)`` (a earlier) reads ``+(4 pi/lambda) * dLOS``.
    ``nesz_db`` optionally adds the original system's thermal noise.
    """
    _check_dims(velocity, sigma0)
    dates = [float(d) for d in dates]
    if len(dates) < 2:
        raise ValueError("need at least two dates")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValueError("dates must be strictly increasing")
    shape = velocity.shape
    m = coherence_model
    amp = np.sqrt(db_to_linear(sigma0.sigma0_db))
    common = rng.complex_normal_field(seed, "speckle-common", 0, shape, jobs=jobs)[..., 0]
    w_c, w_x, w_e = math.sqrt(m.rho_inf), math.sqrt(m.rho0 - m.rho_inf), math.sqrt(1.0 - m.rho0)
    slcs = []
    x = None
    for i, t in enumerate(dates):
        draws = rng.complex_normal_field(seed, "speckle-date", i, shape, jobs=jobs)
        if x is None:
            x = draws[..., 0]
        else:
            a = math.exp(-(t - dates[i - 1]) / m.tau_days)
            x = a * x + math.sqrt(1.0 - a * a) * draws[..., 0]
        speckle = w_c * common + w_x * x + w_e * draws[..., 1]
        phase = deformation_phase(velocity, t, dates[0], wavelength_m)
        data = amp * speckle * np.exp(-1j * phase)
        if nesz_db is not None:
            noise = rng.complex_normal_field(seed, "system-noise", i, shape, jobs=jobs)[..., 0]
            data = data + math.sqrt(db_to_linear(nesz_db)) * noise
        slcs.append(SlcRaster(data=data, wavelength_m=wavelength_m, incidence_deg=incidence_deg,
                              date=t, pixel_spacing_m=pixel_spacing_m))
    return SlcStack(tuple(slcs))


def synthesize_pair(rho, sigma0_db, seed: int, *, deformation_phase_rad=0.0, wavelength_m: float = 0.24,
                    dates=(0.0, 1.0), incidence_deg=40.0, pixel_spacing_m=(7.0, 7.0), shape=None,
                    jobs: int = 1) -> SlcStack:
    """Two-date stack with population coherence exactly ``rho`` (scalar or per pixel).

    ``s_b = rho * s_a * exp(-i phi) + sqrt(1 - rho^2) * w``; the interferogram
    ``s_a conj(s_b)`` has expected phase ``+phi``.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in (rho, sigma0_db, deformation_phase_rad)]
    if shape is None:
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
    if len(shape) != 2:
        raise GeometryError("pair synthesis needs a 2-D shape (pass shape= for scalar inputs)")
    rho_a, s0, phi = (np.broadcast_to(a, shape) for a in arrays)
    if np.any((rho_a < 0) | (rho_a > 1)):
        raise ValueError("rho must lie in [0, 1]")
    draws = rng.complex_normal_field(seed, "pair", 0, shape, jobs=jobs)
    amp = np.sqrt(db_to_linear(s0))
    s_a = draws[..., 0]
    s_b = rho_a * s_a * np.exp(-1j * phi) + np.sqrt(1.0 - rho_a**2) * draws[..., 1]
    slcs = tuple(SlcRaster(data=amp * s, wavelength_m=wavelength_m, incidence_deg=incidence_deg, date=float(d),
                           pixel_spacing_m=pixel_spacing_m) for s, d in zip((s_a, s_b), dates))
    return SlcStack(slcs)
