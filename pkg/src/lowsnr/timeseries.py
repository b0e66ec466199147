"""Small-baseline (SBAS) inversion, temporal coherence and velocity fitting.

Unknowns are cumulative displacements at every date after the first, so the
pair ``(a, b)`` observes ``d_b - d_a`` with ``d_0 = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import DAYS_PER_YEAR, phase_to_los
from .network import IfgNetwork, NetworkError

__all__ = [
    "IfgNetwork", "NetworkError", "TimeSeriesResult", "build_design_matrix", "sbas_invert",
    "temporal_coherence", "mask_by_temporal_coherence", "fit_velocity", "select_reference_pixel",
    "velocity_operator", "run_timeseries",
]


@dataclass(frozen=True, eq=False)
class TimeSeriesResult:
    displacement: np.ndarray  # (n_dates, rows, cols), meters; zero at ref date
    velocity: np.ndarray | None  # (rows, cols), m/yr
    temporal_coherence: np.ndarray | None
    ref_pixel: tuple[int, int]
    ref_date: int
    dates: np.ndarray
    rank_deficient: bool = False
    reconstructed_phase: np.ndarray | None = None


def build_design_matrix(network: IfgNetwork, check_connected: bool = True) -> np.ndarray:
    """``(n_pairs, n_dates - 1)`` matrix: -1 at the first date, +1 at the second."""
    if check_connected and not network.is_connected():
        comps = network.components()
        raise NetworkError(f"network is disconnected into {len(comps)} groups: {comps}", components=comps)
    A = np.zeros((network.n_pairs, network.n_dates - 1))
    for row, (a, b) in enumerate(network.pairs):
        if a > 0:
            A[row, a - 1] = -1.0
        A[row, b - 1] = 1.0
    return A


def _solve_all(A, obs, weights=None):
    """Minimum-norm least squares for each column of ``obs`` (n_pairs, n_pix)."""
    if weights is None:
        pinv = np.linalg.pinv(A)
        return pinv @ obs, np.linalg.matrix_rank(A) < A.shape[1]
    out = np.empty((A.shape[1], obs.shape[1]))
    for i in range(obs.shape[1]):
        w = np.sqrt(weights[:, i])
        out[:, i] = np.linalg.lstsq(A * w[:, None], obs[:, i] * w, rcond=None)[0]
    return out, np.linalg.matrix_rank(A) < A.shape[1]


def sbas_invert(unwrapped, network: IfgNetwork, ref_pixel, wavelength_m: float, *, weights=None,
                allow_disconnected: bool = False) -> TimeSeriesResult:
    """Per-pixel least-squares displacement history.

    ``unwrapped`` is ``(n_pairs, rows, cols)`` radians, already referenced to
    ``ref_pixel``. Pixels with NaN in some interferograms are solved with the
    remaining rows; a pixel whose remaining rows leave the system
    rank-deficient gets the minimum-norm solution and sets ``rank_deficient``.
    Optional ``weights`` (same shape, e.g. coherence-derived) switch to
    weighted least squares.
    """
    phase = np.asarray(unwrapped, dtype=np.float64)
    if phase.ndim != 3 or phase.shape[0] != network.n_pairs:
        raise ValueError(f"expected ({network.n_pairs}, rows, cols) stack, got {phase.shape}")
    A = build_design_matrix(network, check_connected=not allow_disconnected)
    rows, cols = phase.shape[1:]
    flat = phase.reshape(network.n_pairs, -1)
    wflat = None if weights is None else np.asarray(weights, dtype=np.float64).reshape(network.n_pairs, -1)
    d = np.full((network.n_dates - 1, flat.shape[1]), np.nan)
    finite = np.isfinite(flat)
    deficient = False
    patterns, inverse = np.unique(finite.T, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for p, pattern in enumerate(patterns):
        if not pattern.any():
            continue
        cols_idx = np.flatnonzero(inverse == p)
        sub_A = A[pattern]
        sub_w = None if wflat is None else wflat[np.ix_(pattern, cols_idx)]
        sol, rd = _solve_all(sub_A, flat[np.ix_(pattern, cols_idx)], sub_w)
        d[:, cols_idx] = sol
        deficient |= bool(rd)
    d = np.vstack([np.zeros((1, d.shape[1])), d])
    d[:, ~finite.any(axis=0)] = np.nan
    recon = (A @ d[1:]).reshape(network.n_pairs, rows, cols)
    disp = phase_to_los(d, wavelength_m).reshape(network.n_dates, rows, cols)
    return TimeSeriesResult(displacement=disp, velocity=None, temporal_coherence=None,
                            ref_pixel=tuple(int(x) for x in ref_pixel), ref_date=0,
                            dates=np.asarray(network.dates), rank_deficient=deficient,
                            reconstructed_phase=recon)


def temporal_coherence(observed, reconstructed) -> np.ndarray:
    """``|mean_k exp(i (phi_k - phi_hat_k))|`` over interferograms, NaNs skipped."""
    obs = np.asarray(observed, dtype=np.float64)
    rec = np.asarray(reconstructed, dtype=np.float64)
    if obs.shape != rec.shape:
        raise ValueError("observed and reconstructed stacks differ in shape")
    resid = obs - rec
    fin = np.isfinite(resid)
    z = np.where(fin, np.exp(1j * np.where(fin, resid, 0.0)), 0.0)
    n = fin.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.abs(z.sum(axis=0)) / n
    return np.clip(np.where(n > 0, gamma, np.nan), 0.0, 1.0)


def mask_by_temporal_coherence(result: TimeSeriesResult, threshold: float = 0.5) -> TimeSeriesResult:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    if result.temporal_coherence is None:
        raise ValueError("result carries no temporal coherence")
    bad = ~(result.temporal_coherence >= threshold)
    disp = result.displacement.copy()
    disp[:, bad] = np.nan
    vel = None
    if result.velocity is not None:
        vel = result.velocity.copy()
        vel[bad] = np.nan
    return replace(result, displacement=disp, velocity=vel)


def velocity_operator(dates_days) -> np.ndarray:
    """Row vector mapping per-date values to their OLS slope per year."""
    t = (np.asarray(dates_days, dtype=np.float64) - dates_days[0]) / DAYS_PER_YEAR
    tc = t - t.mean()
    return tc / np.sum(tc**2)


def fit_velocity(result_or_disp, dates_days=None) -> np.ndarray:
    """OLS slope (m/yr) of displacement vs. time at every pixel.

    Epochs that are NaN at a pixel are dropped there; fewer than two valid
    epochs gives NaN.
    """
    if isinstance(result_or_disp, TimeSeriesResult):
        disp, dates_days = result_or_disp.displacement, result_or_disp.dates
    else:
        disp = np.asarray(result_or_disp, dtype=np.float64)
    t = (np.asarray(dates_days, dtype=np.float64) - dates_days[0]) / DAYS_PER_YEAR
    if t.size < 2:
        raise ValueError("velocity fitting needs at least two dates")
    shape = disp.shape[1:]
    y = disp.reshape(t.size, -1)
    fin = np.isfinite(y)
    n = fin.sum(axis=0)
    tt = np.where(fin, t[:, None], 0.0)
    yy = np.where(fin, y, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        tm = tt.sum(axis=0) / n
        ym = yy.sum(axis=0) / n
        tc = np.where(fin, t[:, None] - tm, 0.0)
        sxx = np.sum(tc**2, axis=0)
        sxy = np.sum(tc * (yy - np.where(fin, ym, 0.0)), axis=0)
        slope = sxy / sxx
    slope[(n < 2) | ~(sxx > 0)] = np.nan
    return slope.reshape(shape)


def select_reference_pixel(coherence_stack, valid=None) -> tuple[int, int]:
    """Pixel with the highest mean coherence across interferograms (first on ties)."""
    mean = np.nanmean(np.asarray(coherence_stack, dtype=np.float64), axis=0)
    if valid is not None:
        mean = np.where(valid, mean, np.nan)
    if np.all(np.isnan(mean)):
        raise ValueError("no valid pixel for the reference")
    return tuple(int(x) for x in np.unravel_index(np.nanargmax(mean), mean.shape))


def run_timeseries(unwrapped, network: IfgNetwork, ref_pixel, wavelength_m: float,
                   tcoh_threshold: float | None = 0.5, weights=None) -> TimeSeriesResult:
    """Reference, invert, score and fit velocity in one go; masking optional."""
    from .core import reference_to_pixel

    ref = reference_to_pixel(unwrapped, *ref_pixel)
    res = sbas_invert(ref, network, ref_pixel, wavelength_m, weights=weights)
    tcoh = temporal_coherence(ref, res.reconstructed_phase)
    res = replace(res, temporal_coherence=tcoh)
    res = replace(res, velocity=fit_velocity(res))
    if tcoh_threshold is not None:
        res = mask_by_temporal_coherence(res, tcoh_threshold)
    return res
