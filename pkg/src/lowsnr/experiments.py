"""Monte Carlo experiments on synthetic truth.

Each function builds its own scene from a seed, runs the relevant part of the
chain and returns plain numbers, so the same code backs the acceptance suite
and the ``report`` subcommand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .analysis import BinningConfig, binned_error, fit_table, snr_map, thresholds_by_coherence
from .core import SlcRaster, SlcStack, multilook, phase_to_los, wrap
from .interferometry import (cramer_rao_los_std, debias_coherence, estimate_coherence, form_interferogram,
                             predict_noisy_coherence, predicted_difference_std, wrapped_phase)
from .network import IfgNetwork
from .noise import NeszModel, degrade_stack, measure_nesz
from .scene import (CoherenceModel, make_sigma0_field, make_velocity_field, synthesize_pair,
                    synthesize_slc_stack)
from .timeseries import build_design_matrix, select_reference_pixel, velocity_operator
from .workflow import ChainSettings, form_ifgs, run_chain

WAVELENGTH = 0.24
NOISE_FREE = NeszModel.constant(-math.inf)


# ---------------------------------------------------------------- coherence

@dataclass(frozen=True)
class CoherenceCell:
    rho_original: float
    sigma0_db: float
    snr_db: float
    predicted: float
    measured_raw: float  # mean of the 64-look estimator
    measured: float  # bias-corrected
    n_windows: int

    @property
    def error(self) -> float:
        return self.measured - self.predicted


def coherence_closure(rhos=(0.4, 0.6, 0.8, 0.95), sigma0s=(-21.0, -15.0, -9.0, -5.0), target_db=-15.0,
                      looks=(8, 8), n_windows=10_000, seed=101, jobs=1) -> list[CoherenceCell]:
    """Measured vs predicted coherence after degrading noise-free pairs to ``target_db``."""
    side = int(math.ceil(math.sqrt(n_windows)))
    shape = (side * looks[0], side * looks[1])
    out = []
    for i, rho in enumerate(rhos):
        for j, s0 in enumerate(sigma0s):
            cell_seed = seed * 1000 + 10 * i + j
            pair = synthesize_pair(rho, s0, cell_seed, shape=shape, jobs=jobs)
            noisy = degrade_stack(pair, target_db, NOISE_FREE, cell_seed, jobs=jobs)
            est = estimate_coherence(noisy[0], noisy[1], *looks)
            raw = float(np.mean(est))
            snr = s0 - target_db
            out.append(CoherenceCell(rho, s0, snr, float(predict_noisy_coherence(rho, snr)), raw,
                                     debias_coherence(raw, looks[0] * looks[1]), est.size))
    return out


@dataclass(frozen=True)
class CrlbCell:
    rho_total: float
    predicted_m: float
    measured_m: float
    n_windows: int

    @property
    def rel_error(self) -> float:
        return self.measured_m / self.predicted_m - 1.0


def crlb_montecarlo(rhos=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95), looks=(8, 8), n_windows=10_000,
                    seed=202, jobs=1) -> list[CrlbCell]:
    """Std of the multilooked interferometric phase (as LOS) vs. the Cramer-Rao bound."""
    side = int(math.ceil(math.sqrt(n_windows)))
    shape = (side * looks[0], side * looks[1])
    n = looks[0] * looks[1]
    out = []
    for i, rho in enumerate(rhos):
        pair = synthesize_pair(rho, 0.0, seed * 1000 + i, shape=shape, jobs=jobs)
        phi = wrapped_phase(form_interferogram(pair[0], pair[1], looks))
        los = phase_to_los(phi, WAVELENGTH)
        out.append(CrlbCell(rho, float(cramer_rao_los_std(rho, n, WAVELENGTH)), float(np.std(los, ddof=1)),
                            phi.size))
    return out


def nesz_fidelity(target_db=-15.0, shape=(256, 256), n_dates=3, seed=303) -> float:
    """Measured NESZ (dB) of a zero-signal stack degraded to ``target_db``."""
    slcs = tuple(SlcRaster(np.zeros(shape, np.complex128), WAVELENGTH, 40.0, float(d)) for d in range(n_dates))
    noisy = degrade_stack(SlcStack(slcs), target_db, NOISE_FREE, seed)
    return measure_nesz(noisy)


def temporal_coherence_uniform(m=91, trials=10_000, seed=404) -> tuple[float, float]:
    """Mean ``|mean exp(i u)|`` for uniform residuals, and the ``sqrt(pi / 4M)`` expectation."""
    g = np.random.Generator(np.random.Philox(rng.philox_key(seed, "tcoh-uniform")))
    res = g.uniform(-math.pi, math.pi, size=(trials, m))
    gamma = np.abs(np.exp(1j * res).mean(axis=1))
    return float(gamma.mean()), math.sqrt(math.pi / (4 * m))


# ------------------------------------------------------------------ ladder

@dataclass(frozen=True, eq=False)
class LadderResult:
    table: object  # BinnedErrorTable of LOS differences (m)
    fits: list
    thresholds: list
    target_m: float
    rungs: tuple
    looks: tuple


def _ladder_pair(rho, snr_lo, snr_hi, target_db, rows_ml, cols_per_bin, looks, bin_db, seed, jobs):
    n_bins = int(round((snr_hi - snr_lo) / bin_db)) + 1
    cols_ml = n_bins * cols_per_bin
    shape = (rows_ml * looks[0], cols_ml * looks[1])
    # one constant SNR per multilook column block, stepping through bin centres
    snr_cols = snr_lo + bin_db * (np.arange(cols_ml) // cols_per_bin)
    s0 = np.repeat(snr_cols + target_db, looks[1])[None, :].repeat(shape[0], axis=0)
    pair = synthesize_pair(rho, s0, seed, shape=shape, jobs=jobs)
    noisy = degrade_stack(pair, target_db, NOISE_FREE, seed, jobs=jobs)
    phi_o = wrapped_phase(form_interferogram(pair[0], pair[1], looks))
    phi_d = wrapped_phase(form_interferogram(noisy[0], noisy[1], looks))
    coh_o = estimate_coherence(pair[0], pair[1], *looks)
    snr = snr_map(multilook(s0, *looks), target_db)
    return phi_o, phi_d, coh_o, snr


def threshold_ladder(rungs=(0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95), snr_range=(-12.0, 6.0), target_db=-15.0,
                     looks=(8, 8), rows_ml=40, cols_per_bin=25, target_m=0.002, seed=505, jobs=1,
                     config: BinningConfig | None = None, coherence_source: str = "true") -> LadderResult:
    """SNR thresholds for a 2 mm LOS error from pairs laddered over coherence and SNR.

    Each rung is a pair at one original coherence whose sigma0 steps through
    the SNR range. Pixels are binned by the rung's true coherence
    (``coherence_source="true"``) or by the 64-look estimate from the
    original branch (``"measured"``), which lets neighbouring rungs leak
    into each bin. The error is the wrapped phase difference between branches, which is the
    unwrapped difference for a zero-deformation pair unwrapped without error.
    """
    config = config or BinningConfig()
    diffs, snrs, cohs = [], [], []
    for i, rho in enumerate(rungs):
        phi_o, phi_d, coh_o, snr = _ladder_pair(rho, *snr_range, target_db, rows_ml, cols_per_bin, looks,
                                                config.snr_width_db, seed * 1000 + i, jobs)
        diffs.append(phase_to_los(wrap(phi_o - phi_d), WAVELENGTH).ravel())
        snrs.append(snr.ravel())
        if coherence_source == "true":
            coh_o = np.full(coh_o.shape, rho)
        elif coherence_source != "measured":
            raise ValueError(f"unknown coherence source {coherence_source!r}")
        cohs.append(coh_o.ravel())
    table = binned_error(np.concatenate(diffs), np.concatenate(snrs), np.concatenate(cohs), config)
    fits = fit_table(table)
    return LadderResult(table, fits, thresholds_by_coherence(fits, target_m), target_m, tuple(rungs), tuple(looks))


@dataclass(frozen=True)
class QuadratureCell:
    rho_original: float
    snr_db: float
    predicted_m: float
    measured_m: float


def quadrature_check(rhos=(0.4, 0.6, 0.8), snrs=(-12.0, -9.0, -6.0, -3.0, 0.0, 3.0, 6.0), target_db=-15.0,
                     looks=(8, 8), n_windows=4096, seed=606, jobs=1) -> list[QuadratureCell]:
    """Std of the branch difference vs. the quadrature prediction at fixed rho and SNR."""
    side = int(math.ceil(math.sqrt(n_windows)))
    shape = (side * looks[0], side * looks[1])
    out = []
    for i, rho in enumerate(rhos):
        for j, snr in enumerate(snrs):
            sd = seed * 1000 + 10 * i + j
            pair = synthesize_pair(rho, snr + target_db, sd, shape=shape, jobs=jobs)
            noisy = degrade_stack(pair, target_db, NOISE_FREE, sd, jobs=jobs)
            phi_o = wrapped_phase(form_interferogram(pair[0], pair[1], looks))
            phi_d = wrapped_phase(form_interferogram(noisy[0], noisy[1], looks))
            d = phase_to_los(wrap(phi_o - phi_d), WAVELENGTH)
            pred = float(predicted_difference_std(rho, snr, looks[0] * looks[1], WAVELENGTH))
            out.append(QuadratureCell(rho, snr, pred, float(np.std(d, ddof=1))))
    return out


# ----------------------------------------------------------- time series

def _two_branches(velocity, sigma0, dates, cm, seed, nesz_orig_db, target_db, jobs):
    orig = synthesize_slc_stack(velocity, sigma0, dates, cm, WAVELENGTH, seed, nesz_db=nesz_orig_db, jobs=jobs)
    deg = degrade_stack(orig, target_db, NeszModel.constant(nesz_orig_db), seed, jobs=jobs)
    return orig, deg


def joint_reference(orig, deg, network, settings, jobs=1):
    """Pixel with the best mean coherence in the weaker of the two branches."""
    co = np.stack([i.coherence for i in form_ifgs(orig, network, settings, jobs)])
    cd = np.stack([i.coherence for i in form_ifgs(deg, network, settings, jobs)])
    return select_reference_pixel(np.minimum(co, cd))


def propagate_cycles(cycles, network: IfgNetwork, wavelength_m=WAVELENGTH) -> float:
    """Velocity (m/yr) produced by integer cycle errors ``cycles`` (one per interferogram)."""
    A = build_design_matrix(network)
    d = np.concatenate([[0.0], np.linalg.pinv(A) @ (2 * math.pi * np.asarray(cycles, dtype=np.float64))])
    return float(velocity_operator(np.asarray(network.dates)) @ phase_to_los(d, wavelength_m))


@dataclass(frozen=True, eq=False)
class AmbiguityRun:
    looks: tuple
    velocity_diff: np.ndarray  # original - degraded, m/yr
    far: np.ndarray  # bool mask of the side of the band away from the reference
    cycles: np.ndarray  # per-interferogram integer offset of the far side
    v_star: float  # oracle velocity offset of the far side
    ref_pixel: tuple
    closure_corrections: tuple


@dataclass(frozen=True, eq=False)
class AmbiguityResult:
    single: AmbiguityRun
    multilooked: AmbiguityRun
    extra: dict = field(default_factory=dict)


def ambiguity_bias(size=192, band_halfwidth=8, n_dates=6, spacing_days=365.25, ramp_m_per_yr=0.04,
                   background_db=5.0, band_db=-20.0, nesz_orig_db=-50.0, target_db=-15.0,
                   coherence=CoherenceModel(0.995, 0.99, 365.0), seed=707, jobs=1) -> AmbiguityResult:
    """Single-look vs. 8x8 runs over a scene cut by a dark (low-SNR) band.

    Degrading splits the single-look interferograms at the band; the far
    side is unwrapped with its own integer offset, which SBAS turns into a
    discrete velocity shift. The oracle shift propagates the per-interferogram
    offsets measured on the far side through the inversion and velocity fit.
    """
    vel = make_velocity_field("linear-ramp", {"v0": 0.0, "v1": ramp_m_per_yr, "axis": "col"}, size, size)
    mid = size // 2
    sig = make_sigma0_field("dark-band", {"background_db": background_db, "band_db": band_db,
                                          "start": mid - band_halfwidth, "stop": mid + band_halfwidth,
                                          "axis": "col"}, size, size)
    dates = np.arange(n_dates) * spacing_days
    orig, deg = _two_branches(vel, sig, dates, coherence, seed, nesz_orig_db, target_db, jobs)
    net = IfgNetwork.all_pairs(dates)
    runs = []
    for looks in ((1, 1), (8, 8)):
        s = ChainSettings(looks=looks)
        ref = joint_reference(orig, deg, net, s, jobs)
        o = run_chain(orig, net, s, ref_pixel=ref, jobs=jobs)
        d = run_chain(deg, net, s, ref_pixel=ref, jobs=jobs)
        dv = o.timeseries.velocity - d.timeseries.velocity
        cols = dv.shape[1]
        # far side of the band, with a margin of one band width
        margin = int(math.ceil(2 * band_halfwidth / looks[1]))
        c_mid = cols // 2
        far = np.zeros(dv.shape, dtype=bool)
        if ref[1] < c_mid:
            far[:, c_mid + margin:] = True
        else:
            far[:, :max(c_mid - margin, 0)] = True
        du = o.unwrapped - d.unwrapped
        cyc = np.rint(np.nanmedian(du[:, far], axis=1) / (2 * math.pi)).astype(np.int64)
        runs.append(AmbiguityRun(looks, dv, far, cyc, propagate_cycles(cyc, net), ref,
                                 (o.closure_corrections, d.closure_corrections)))
    return AmbiguityResult(runs[0], runs[1])


# ------------------------------------------------------------- velocity

@dataclass(frozen=True, eq=False)
class VelocityPrecision:
    analysis_table: object
    fits: list
    snr: np.ndarray
    temporal_coherence: np.ndarray
    velocity_diff: np.ndarray
    worst_std: float  # m/yr, over populated cells with SNR >= snr_min in the top coherence bin
    cells: list  # (snr_center, count, std)


def velocity_precision(size_ml=100, n_dates=5, span_days=365.25, snr_range=(-5.0, 10.0), target_db=-15.0,
                       nesz_orig_db=-50.0, looks=(8, 8), coherence=CoherenceModel(0.95, 0.9, 365.0),
                       tcoh_min=0.9, snr_min=1.0, seed=808, jobs=1) -> VelocityPrecision:
    """Velocity difference between branches for a one-year stack, binned by temporal coherence and SNR."""
    from .analysis import velocity_diff_analysis

    rows, cols = size_ml * looks[0], size_ml * looks[1]
    vel = make_velocity_field("uniform", {"v": 0.0}, rows, cols)
    sig = make_sigma0_field("gradient", {"start_db": snr_range[0] + target_db, "stop_db": snr_range[1] + target_db,
                                         "axis": "col"}, rows, cols)
    dates = np.linspace(0.0, span_days, n_dates)
    orig, deg = _two_branches(vel, sig, dates, coherence, seed, nesz_orig_db, target_db, jobs)
    net = IfgNetwork.all_pairs(dates)
    s = ChainSettings(looks=looks, tcoh_threshold=None)
    ref = joint_reference(orig, deg, net, s, jobs)
    o = run_chain(orig, net, s, ref_pixel=ref, jobs=jobs)
    d = run_chain(deg, net, s, ref_pixel=ref, jobs=jobs)
    snr = multilook(sig.sigma0_db, *looks) - target_db
    # temporal coherence of the degraded branch gates the comparison
    tc = d.timeseries.temporal_coherence
    va = velocity_diff_analysis(o.timeseries.velocity, d.timeseries.velocity, snr, tc)
    t = va.table
    top = int(np.searchsorted(t.coherence_edges, tcoh_min, side="right") - 1)
    cells = [(float(x), int(t.count[top, j]), float(t.statistic[top, j]))
             for j, x in enumerate(t.snr_centers) if x >= snr_min and t.count[top, j] >= t.min_count]
    worst = max((c[2] for c in cells), default=math.nan)
    dv = o.timeseries.velocity - d.timeseries.velocity
    return VelocityPrecision(t, va.fits, snr, tc, dv, worst, cells)
