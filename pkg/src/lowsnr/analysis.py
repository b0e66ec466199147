"""Error-versus-SNR statistics: difference maps, coherence-binned tables,
exponential fits and SNR thresholds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import phase_to_los


@dataclass(frozen=True)
class BinningConfig:
    coherence_edges: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    snr_width_db: float = 0.5
    min_count: int = 30
    statistic: str = "std"

    def __post_init__(self):
        if self.statistic not in ("std", "rms", "mad"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        e = self.coherence_edges
        if len(e) < 2 or any(b <= a for a, b in zip(e, e[1:])):
            raise ValueError("coherence edges must be increasing")


@dataclass(frozen=True, eq=False)
class BinnedErrorTable:
    """``count`` and ``statistic`` are ``(n_coherence_bins, n_snr_bins)``."""

    coherence_edges: np.ndarray
    snr_centers: np.ndarray
    count: np.ndarray
    statistic: np.ndarray
    mean: np.ndarray
    min_count: int
    units: str = "m"

    @property
    def n_coherence_bins(self) -> int:
        return len(self.coherence_edges) - 1

    def coherence_label(self, i: int) -> str:
        return f"{self.coherence_edges[i]:.1f}-{self.coherence_edges[i + 1]:.1f}"

    def populated(self, i: int):
        """SNR centers and statistics of the cells in coherence bin ``i`` with enough samples."""
        ok = (self.count[i] >= self.min_count) & np.isfinite(self.statistic[i])
        return self.snr_centers[ok], self.statistic[i][ok]


@dataclass(frozen=True)
class ExpFit:
    """``err(x) = a * exp(-b x) + c`` with ``x`` in dB."""

    a: float
    b: float
    c: float
    rms: float
    n_points: int
    converged: bool = True
    message: str = ""

    def __call__(self, x):
        return self.a * np.exp(-self.b * np.asarray(x, dtype=np.float64)) + self.c


@dataclass(frozen=True)
class Threshold:
    snr_db: float
    status: str  # ok | unreachable | undefined | always


class FitError(ValueError):
    pass


def los_difference(unw_original, unw_degraded, ref_pixel, wavelength_m: float, degraded_ref_pixel=None):
    """LOS of ``phi_original - phi_degraded`` (m); NaN where either is masked.

    Both inputs must already be referenced to ``ref_pixel``.
    """
    if degraded_ref_pixel is not None and tuple(degraded_ref_pixel) != tuple(ref_pixel):
        raise ValueError(f"inputs referenced to different pixels: {tuple(ref_pixel)} vs {tuple(degraded_ref_pixel)}")
    a = np.asarray(unw_original, dtype=np.float64)
    b = np.asarray(unw_degraded, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("difference inputs differ in shape")
    if not (np.isfinite(a[tuple(ref_pixel)]) and np.isfinite(b[tuple(ref_pixel)])):
        raise ValueError(f"reference pixel {tuple(ref_pixel)} is masked in an input")
    return phase_to_los(a - b, wavelength_m)


def snr_map(sigma0_db, nesz_db):
    """Per-pixel SNR in dB: sigma0 minus NESZ."""
    s = np.asarray(sigma0_db, dtype=np.float64)
    n = np.asarray(nesz_db, dtype=np.float64)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(n))):
        raise ValueError("snr_map needs finite sigma0 and NESZ")
    return s - n


def _cell_stat(values, statistic):
    if statistic == "std":
        return float(np.std(values, ddof=1))
    if statistic == "rms":
        return float(np.sqrt(np.mean(values**2)))
    return float(1.4826 * np.median(np.abs(values - np.median(values))))


def binned_error(diff, snr, coherence, config: BinningConfig | None = None, units: str = "m") -> BinnedErrorTable:
    """Bin ``diff`` by coherence interval and SNR (centers at multiples of the width).

    The last coherence interval is closed on the right so coherence 1.0
    lands in it. Cells below ``min_count`` carry a NaN statistic.
    """
    config = config or BinningConfig()
    diff, snr, coh = (np.asarray(x, dtype=np.float64).ravel() for x in (diff, snr, coherence))
    if not (diff.shape == snr.shape == coh.shape):
        raise ValueError("diff, snr and coherence must share a shape")
    edges = np.asarray(config.coherence_edges, dtype=np.float64)
    ok = np.isfinite(diff) & np.isfinite(snr) & np.isfinite(coh) & (coh >= edges[0]) & (coh <= edges[-1])
    diff, snr, coh = diff[ok], snr[ok], coh[ok]
    w = config.snr_width_db
    if diff.size == 0:
        empty = np.zeros((len(edges) - 1, 0))
        return BinnedErrorTable(edges, np.zeros(0), empty.astype(np.int64), empty, empty, config.min_count, units)
    snr_idx = np.floor(snr / w + 0.5).astype(np.int64)
    lo, hi = int(snr_idx.min()), int(snr_idx.max())
    centers = np.arange(lo, hi + 1) * w
    coh_idx = np.clip(np.searchsorted(edges, coh, side="right") - 1, 0, len(edges) - 2)
    shape = (len(edges) - 1, hi - lo + 1)
    count = np.zeros(shape, dtype=np.int64)
    stat = np.full(shape, np.nan)
    mean = np.full(shape, np.nan)
    key = coh_idx * shape[1] + (snr_idx - lo)
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    bounds = np.flatnonzero(np.diff(key_sorted)) + 1
    for chunk in np.split(order, bounds):
        k = int(key[chunk[0]])
        i, j = divmod(k, shape[1])
        vals = diff[chunk]
        count[i, j] = vals.size
        if vals.size >= config.min_count:
            stat[i, j] = _cell_stat(vals, config.statistic)
            mean[i, j] = float(np.mean(vals))
    return BinnedErrorTable(edges, centers, count, stat, mean, config.min_count, units)


def _model(p, x):
    return p[0] * np.exp(-p[1] * x) + p[2]


def fit_exponential(snr_centers, errors, *, max_iter: int = 200, tol: float = 1e-10, eps: float | None = None) -> ExpFit:
    """Least-squares ``a exp(-b x) + c`` by damped Gauss-Newton with ``b >= 0``.

    Starts from a log-linear regression on ``err - min(err) + eps``.
    Returns a fit flagged ``converged=False`` when the iteration budget runs
    out.
    """
    x = np.asarray(snr_centers, dtype=np.float64)
    y = np.asarray(errors, dtype=np.float64)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 4:
        raise FitError(f"exponential fit needs at least 4 finite points, got {x.size}")
    scale = float(np.max(np.abs(y))) or 1.0
    if np.ptp(y) <= 1e-12 * scale:
        return ExpFit(0.0, 0.0, float(np.mean(y)), 0.0, int(x.size))
    ys = y / scale
    if eps is None:
        eps = 1e-3 * (np.ptp(ys) or 1.0)
    lin = np.polyfit(x, np.log(ys - ys.min() + eps), 1)
    p = np.array([math.exp(lin[1]), max(-lin[0], 0.0), ys.min() - eps])
    lam = 1e-3
    resid = ys - _model(p, x)
    cost = float(resid @ resid)
    converged = False
    for _ in range(max_iter):
        e = np.exp(-p[1] * x)
        J = np.column_stack([e, -p[0] * x * e, np.ones_like(x)])
        g = J.T @ resid
        H = J.T @ J
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-12), g)
            trial = p + step
            trial[1] = max(trial[1], 0.0)
            r_trial = ys - _model(trial, x)
            c_trial = float(r_trial @ r_trial)
            if c_trial <= cost:
                improved = True
                break
            lam *= 10.0
        if not improved:
            converged = True  # no descent direction left
            break
        dp = np.max(np.abs(trial - p) / (np.abs(p) + 1e-12))
        rel = (cost - c_trial) / max(cost, 1e-300)
        p, resid, cost = trial, r_trial, c_trial
        lam = max(lam / 10.0, 1e-12)
        if rel < tol or dp < tol:
            converged = True
            break
    a, b, c = p[0] * scale, p[1], p[2] * scale
    rms = float(np.sqrt(np.mean((y - (a * np.exp(-b * x) + c)) ** 2)))
    return ExpFit(float(a), float(b), float(c), rms, int(x.size), converged,
                  "" if converged else f"no convergence in {max_iter} iterations")


def snr_threshold(fit: ExpFit, target_error: float) -> Threshold:
    """SNR (dB) above which the fitted error drops below ``target_error``."""
    if fit.b <= 0 or fit.a <= 0:
        # flat (or rising) curve: either always or never under target
        return Threshold(math.nan, "undefined")
    if target_error <= fit.c:
        return Threshold(math.inf, "unreachable")
    return Threshold(float(-math.log((target_error - fit.c) / fit.a) / fit.b), "ok")


def fit_table(table: BinnedErrorTable) -> list[ExpFit | None]:
    """One fit per coherence bin; ``None`` where fewer than 4 cells are populated."""
    fits = []
    for i in range(table.n_coherence_bins):
        x, y = table.populated(i)
        fits.append(fit_exponential(x, y) if x.size >= 4 else None)
    return fits


def thresholds_by_coherence(fits, target_error: float) -> list[Threshold | None]:
    return [None if f is None else snr_threshold(f, target_error) for f in fits]


@dataclass(frozen=True, eq=False)
class VelocityAnalysis:
    table: BinnedErrorTable
    fits: list = field(default_factory=list)


def velocity_diff_analysis(vel_original, vel_degraded, snr, temporal_coherence,
                           config: BinningConfig | None = None) -> VelocityAnalysis:
    """Bin ``v_original - v_degraded`` (m/yr) by temporal coherence and SNR, then fit each bin."""
    diff = np.asarray(vel_original, dtype=np.float64) - np.asarray(vel_degraded, dtype=np.float64)
    table = binned_error(diff, snr, temporal_coherence, config, units="m/yr")
    return VelocityAnalysis(table, fit_table(table))


def write_table_csv(path, table: BinnedErrorTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["coh_lo", "coh_hi", "snr_db", "count", "mean", "statistic", "units"])
        for i in range(table.n_coherence_bins):
            for j, s in enumerate(table.snr_centers):
                if table.count[i, j] == 0:
                    continue
                w.writerow([f"{table.coherence_edges[i]:.2f}", f"{table.coherence_edges[i + 1]:.2f}", f"{s:.2f}",
                            int(table.count[i, j]), f"{table.mean[i, j]:.9g}", f"{table.statistic[i, j]:.9g}",
                            table.units])


def write_fits_csv(path, table: BinnedErrorTable, fits, target_error: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["coh_lo", "coh_hi", "a", "b", "c", "rms", "n_points", "converged", "target",
                    "snr_threshold_db", "threshold_status"])
        for i, f in enumerate(fits):
            lo, hi = f"{table.coherence_edges[i]:.2f}", f"{table.coherence_edges[i + 1]:.2f}"
            if f is None:
                w.writerow([lo, hi, "", "", "", "", 0, "", f"{target_error:.6g}", "", "no-fit"])
                continue
            t = snr_threshold(f, target_error)
            w.writerow([lo, hi, f"{f.a:.9g}", f"{f.b:.9g}", f"{f.c:.9g}", f"{f.rms:.6g}", f.n_points,
                        int(f.converged), f"{target_error:.6g}", f"{t.snr_db:.6g}", t.status])
