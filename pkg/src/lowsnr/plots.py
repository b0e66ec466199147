"""Static figures: difference heat maps with fitted curves, thresholds vs coherence,
velocity-difference histograms."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import thresholds_by_coherence  # noqa: E402

# no timestamps or version strings, so reruns give identical files
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def heatmap_with_fit(path, diff, snr, coherence, lo, hi, fit=None, scale=1e3, unit="mm", title=""):
    """2-D histogram of ``diff`` vs SNR for ``lo <= coherence < hi`` (closed at 1.0)."""
    d, s, c = (np.asarray(x, dtype=np.float64).ravel() for x in (diff, snr, coherence))
    sel = np.isfinite(d) & np.isfinite(s) & (c >= lo) & ((c < hi) | ((hi >= 1.0) & (c <= hi)))
    fig, ax = plt.subplots(figsize=(6, 4))
    if sel.sum() > 1:
        vals = d[sel] * scale
        lim = float(np.percentile(np.abs(vals), 99)) or 1.0
        ax.hist2d(s[sel], vals, bins=(40, 60), range=[[s[sel].min(), s[sel].max() + 1e-9], [-lim, lim]],
                  cmap="viridis", cmin=1)
        if fit is not None:
            x = np.linspace(s[sel].min(), s[sel].max(), 200)
            ax.plot(x, fit(x) * scale, "r-", lw=1.5, label="fit (std)")
            ax.plot(x, -fit(x) * scale, "r-", lw=1.5)
            ax.legend(loc="upper right")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(f"difference ({unit})")
    ax.set_title(title or f"{lo:.1f} <= coherence < {hi:.1f}")
    return _save(fig, Path(path))


def threshold_curve(path, table, fits, target, unit_label):
    ths = thresholds_by_coherence(fits, target)
    centers, values = [], []
    for i, th in enumerate(ths):
        if th is not None and th.status == "ok" and math.isfinite(th.snr_db):
            centers.append(0.5 * (table.coherence_edges[i] + table.coherence_edges[i + 1]))
            values.append(th.snr_db)
    fig, ax = plt.subplots(figsize=(5, 4))
    if centers:
        ax.plot(centers, values, "o-")
    ax.set_xlabel("coherence bin centre")
    ax.set_ylabel(f"SNR threshold (dB) for {unit_label}")
    ax.grid(True, alpha=0.3)
    return _save(fig, Path(path))


def velocity_histogram(path, dv, scale=100.0):
    v = np.asarray(dv, dtype=np.float64)
    v = v[np.isfinite(v)] * scale
    fig, ax = plt.subplots(figsize=(5, 4))
    if v.size:
        lim = max(float(np.percentile(np.abs(v), 99.5)), 0.05)
        ax.hist(v, bins=80, range=(-lim, lim))
    ax.set_xlabel("velocity difference (cm/yr)")
    ax.set_ylabel("pixels")
    return _save(fig, Path(path))


def render_analysis(directory, los_table, los_fits, los_target, vel_table, vel_fits, vel_target,
                    diffs, snr, coherence, dv) -> list[Path]:
    d = Path(directory)
    out = []
    for i in range(los_table.n_coherence_bins):
        lo, hi = los_table.coherence_edges[i], los_table.coherence_edges[i + 1]
        out.append(heatmap_with_fit(d / f"los_heatmap_{lo:.1f}_{hi:.1f}.png", diffs, snr, coherence, lo, hi,
                                    los_fits[i]))
    out.append(threshold_curve(d / "los_thresholds.png", los_table, los_fits, los_target,
                               f"{los_target * 1e3:g} mm LOS"))
    out.append(threshold_curve(d / "velocity_thresholds.png", vel_table, vel_fits, vel_target,
                               f"{vel_target * 100:g} cm/yr"))
    out.append(velocity_histogram(d / "velocity_difference_hist.png", dv))
    return out
