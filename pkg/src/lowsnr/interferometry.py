"""Interferogram formation, coherence estimation and the closed-form error model.

The error model chains three relations:

* SNR decorrelation ``rho_snr = 1 / (1 + 1/SNR)`` (SNR linear),
* total noisy coherence ``rho_noisy = rho_original * rho_snr``,
* LOS standard deviation ``(lambda / 4 pi) / sqrt(2 N) * sqrt(1 - rho^2) / rho``.
"""
from __future__ import annotations

import csv
import math
from functools import lru_cache

import numpy as np

from .core import GeometryError, Interferogram, SlcRaster, db_to_linear, multilook, wrap


def _check_pair(slc_a: SlcRaster, slc_b: SlcRaster):
    if slc_a.shape != slc_b.shape:
        raise GeometryError(f"SLC shapes differ: {slc_a.shape} vs {slc_b.shape}")
    if slc_a.wavelength_m != slc_b.wavelength_m:
        raise GeometryError("SLCs have different wavelengths")


def _data(x):
    return x.data if isinstance(x, SlcRaster) else np.asarray(x)


def form_interferogram(slc_a, slc_b, looks=(1, 1)) -> np.ndarray:
    """Complex interferogram ``s_a * conj(s_b)``, complex-averaged over ``looks``."""
    a, b = _data(slc_a), _data(slc_b)
    if a.shape != b.shape:
        raise GeometryError(f"SLC shapes differ: {a.shape} vs {b.shape}")
    ifg = a * np.conj(b)
    if tuple(looks) != (1, 1):
        ifg = multilook(ifg, *looks)
    return ifg


def wrapped_phase(ifg: np.ndarray) -> np.ndarray:
    return wrap(np.angle(ifg))


def estimate_coherence(slc_a, slc_b, win_rows: int = 8, win_cols: int = 8) -> np.ndarray:
    """Sample coherence magnitude over non-overlapping windows.

    Zero-power windows come out NaN. Values are clipped to [0, 1] against
    round-off.
    """
    if win_rows * win_cols < 4 or win_rows < 1 or win_cols < 1:
        raise ValueError("coherence estimation needs at least a 2x2 window")
    a, b = _data(slc_a), _data(slc_b)
    if a.shape != b.shape:
        raise GeometryError(f"SLC shapes differ: {a.shape} vs {b.shape}")
    # real and imaginary parts averaged separately, with powers built from the
    # same products, so identical inputs give exactly 1
    prod = a * np.conj(b)
    num = multilook(prod.real, win_rows, win_cols) + 1j * multilook(prod.imag, win_rows, win_cols)
    pa = multilook((a * np.conj(a)).real, win_rows, win_cols)
    pb = multilook((b * np.conj(b)).real, win_rows, win_cols)
    den = np.sqrt(pa * pb)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, np.abs(num) / den, np.nan)
    return np.clip(rho, 0.0, 1.0)


def boxcar_coherence(slc_a, slc_b, size: int = 5) -> np.ndarray:
    """Full-resolution coherence from a sliding ``size x size`` boxcar (edges reflected)."""
    from scipy.ndimage import uniform_filter

    a, b = _data(slc_a), _data(slc_b)
    prod = a * np.conj(b)
    num = uniform_filter(prod.real, size, mode="reflect") + 1j * uniform_filter(prod.imag, size, mode="reflect")
    pa = uniform_filter(np.abs(a) ** 2, size, mode="reflect")
    pb = uniform_filter(np.abs(b) ** 2, size, mode="reflect")
    den = np.sqrt(pa * pb)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(den > 0, np.abs(num) / den, np.nan)
    return np.clip(rho, 0.0, 1.0)


def make_interferogram(slc_a: SlcRaster, slc_b: SlcRaster, looks=(8, 8), coherence_window=None) -> Interferogram:
    """Multilooked wrapped phase plus coherence on the same grid.

    The coherence window defaults to the multilook window so the measured
    and modelled look counts agree. A different window must tile the
    multilooked grid; for single-look products a sliding boxcar is used.
    """
    _check_pair(slc_a, slc_b)
    if slc_a.date >= slc_b.date:
        raise ValueError("slc_a must be the earlier acquisition")
    looks = tuple(int(x) for x in looks)
    ifg = form_interferogram(slc_a, slc_b, looks)
    if coherence_window is None:
        coherence_window = looks
    coherence_window = tuple(int(x) for x in coherence_window)
    if looks == (1, 1):
        coh = boxcar_coherence(slc_a, slc_b, max(coherence_window))
    elif coherence_window == looks:
        coh = estimate_coherence(slc_a, slc_b, *looks)
    else:
        raise ValueError("for multilooked products the coherence window must equal the multilook window")
    spacing = (slc_a.pixel_spacing_m[0] * looks[0], slc_a.pixel_spacing_m[1] * looks[1])
    return Interferogram(wrapped_phase=wrapped_phase(ifg), coherence=coh, date_a=slc_a.date, date_b=slc_b.date,
                         n_looks=looks[0] * looks[1], wavelength_m=slc_a.wavelength_m, pixel_spacing_m=spacing)


def snr_decorrelation(snr_db):
    """Coherence loss from thermal noise: ``1 / (1 + 1/SNR)``."""
    snr = db_to_linear(snr_db)
    out = 1.0 / (1.0 + 1.0 / np.asarray(snr))
    return float(out) if np.ndim(out) == 0 else out


def predict_noisy_coherence(rho_original, snr_db):
    rho = np.asarray(rho_original, dtype=np.float64)
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("rho_original must lie in [0, 1]")
    out = rho * snr_decorrelation(snr_db)
    return float(out) if np.ndim(out) == 0 else out


def cramer_rao_los_std(rho_total, n_looks, wavelength_m: float):
    """LOS standard deviation (m) implied by coherence and look count."""
    rho = np.asarray(rho_total, dtype=np.float64)
    n = np.asarray(n_looks, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("rho_total must be > 0; the LOS error is unbounded at zero coherence")
    if np.any(rho > 1):
        raise ValueError("rho_total must be <= 1")
    if np.any(n < 1):
        raise ValueError("n_looks must be >= 1")
    if not wavelength_m > 0:
        raise ValueError("wavelength must be positive")
    out = wavelength_m / (4.0 * math.pi) / np.sqrt(2.0 * n) * np.sqrt((1.0 - rho**2) / rho**2)
    return float(out) if out.ndim == 0 else out


def predicted_difference_std(rho_original, snr_db, n_looks, wavelength_m: float):
    """Std of (original - degraded) LOS: quadrature difference of the two predictions."""
    s_noisy = cramer_rao_los_std(predict_noisy_coherence(rho_original, snr_db), n_looks, wavelength_m)
    s_orig = cramer_rao_los_std(rho_original, n_looks, wavelength_m)
    return np.sqrt(np.maximum(np.asarray(s_noisy) ** 2 - np.asarray(s_orig) ** 2, 0.0))


@lru_cache(maxsize=4096)
def _expected_sample_coherence(gamma: float, n_looks: int) -> float:
    import mpmath

    L = int(n_looks)
    g2 = mpmath.mpf(gamma) ** 2
    pre = mpmath.gamma(L) * mpmath.gamma(1.5) / mpmath.gamma(L + 0.5)
    val = pre * mpmath.hyp3f2(1.5, L, L, L + 0.5, 1, g2) * (1 - g2) ** L
    return float(val)


def expected_sample_coherence(gamma, n_looks: int):
    """Mean of the ``n_looks`` sample-coherence estimator for true coherence ``gamma``.

    Uses the closed form for circular Gaussian speckle,
    ``Gamma(L) Gamma(3/2) / Gamma(L + 1/2) * 3F2(3/2, L, L; L + 1/2, 1; g^2) * (1 - g^2)^L``.
    """
    g = np.asarray(gamma, dtype=np.float64)
    if np.any((g < 0) | (g > 1)):
        raise ValueError("gamma must lie in [0, 1]")
    out = np.vectorize(lambda x: 1.0 if x >= 1.0 else _expected_sample_coherence(float(x), int(n_looks)))(g)
    return float(out) if out.ndim == 0 else out


def debias_coherence(mean_sample_coherence: float, n_looks: int, tol: float = 1e-10) -> float:
    """Invert :func:`expected_sample_coherence` by bisection.

    Means at or below the zero-coherence bias map to 0.
    """
    target = float(mean_sample_coherence)
    if target >= 1.0:
        return 1.0
    if target <= expected_sample_coherence(0.0, n_looks):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if expected_sample_coherence(mid, n_looks) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def error_model_table(rho_originals, snr_db_grid, n_looks: int, wavelength_m: float) -> list[dict]:
    """Rows of (rho_original, snr_db, rho_noisy, sigma_los_m) over a grid."""
    rows = []
    for rho in rho_originals:
        for snr in snr_db_grid:
            rho_n = predict_noisy_coherence(rho, snr)
            sigma = cramer_rao_los_std(rho_n, n_looks, wavelength_m) if rho_n > 0 else math.inf
            rows.append({"rho_original": float(rho), "snr_db": float(snr), "rho": rho_n, "sigma_los_m": sigma})
    return rows


def write_error_model_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho_original", "snr_db", "rho", "sigma_los_m"])
        for r in rows:
            w.writerow([f"{r['rho_original']:.6g}", f"{r['snr_db']:.6g}", f"{r['rho']:.9g}", f"{r['sigma_los_m']:.9g}"])
