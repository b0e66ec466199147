"""Thermal-noise injection that raises a stack's NESZ to a constant target."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .core import SlcStack, db_to_linear, linear_to_db

NOISE_MODES = ("total-power", "per-component")


class NoiseInjectionError(ValueError):
    pass


@dataclass(frozen=True)
class NeszModel:
    """NESZ (dB) versus incidence angle, optionally per acquisition date.

    ``tables`` maps a date tag (``None`` for the default) to sorted
    ``(incidence_deg, nesz_db)`` knots. Queries outside the knots are clamped.
    ``constant_db`` is used when no table applies; it may be ``-inf`` for a
    noise-free original.
    """

    tables: dict = field(default_factory=dict)
    constant_db: float | None = None

    def __post_init__(self):
        clean = {}
        for tag, knots in self.tables.items():
            knots = sorted((float(i), float(n)) for i, n in knots)
            if not knots:
                continue
            if not all(math.isfinite(n) for _, n in knots):
                raise ValueError("NESZ knots must be finite")
            clean[tag] = tuple(knots)
        object.__setattr__(self, "tables", clean)

    @classmethod
    def constant(cls, nesz_db: float) -> "NeszModel":
        return cls(constant_db=float(nesz_db))

    @classmethod
    def from_knots(cls, knots, constant_db: float | None = None) -> "NeszModel":
        return cls(tables={None: knots}, constant_db=constant_db)

    def table_for(self, date=None):
        if date is not None and date in self.tables:
            return self.tables[date]
        return self.tables.get(None)


def nesz_at(model: NeszModel, incidence_deg, date=None):
    """Piecewise-linear NESZ (dB) at the given incidence angle(s), clamped at the ends."""
    inc = np.asarray(incidence_deg, dtype=np.float64)
    if np.any((inc <= 0) | (inc >= 90)):
        raise ValueError("incidence must lie in (0, 90) degrees")
    knots = model.table_for(date)
    if knots:
        xs, ys = zip(*knots)
        out = np.interp(inc, xs, ys)
    elif model.constant_db is not None:
        out = np.full(inc.shape, float(model.constant_db))
    else:
        raise NoiseInjectionError("NESZ model has neither a table nor a constant fallback")
    return float(out) if out.ndim == 0 else out


def required_noise_std(nesz_orig_db, nesz_target_db, mode: str = "total-power"):
    """Per-component (real or imaginary) std of the noise to add.

    ``total-power`` returns ``sqrt((L_target - L_orig) / 2)`` so the added
    complex noise power is exactly ``L_target - L_orig``. ``per-component``
    returns ``sqrt(L_target - L_orig)`` on each component, which doubles the
    added power.
    """
    if mode not in NOISE_MODES:
        raise ValueError(f"unknown noise mode {mode!r}; expected one of {NOISE_MODES}")
    orig = np.asarray(nesz_orig_db, dtype=np.float64)
    target = np.asarray(nesz_target_db, dtype=np.float64)
    if np.any(target < orig):
        raise NoiseInjectionError(
            f"target NESZ {np.min(target):.2f} dB is below the original {np.max(orig):.2f} dB; noise cannot be removed")
    l_target = db_to_linear(target)
    l_orig = np.power(10.0, orig / 10.0)  # -inf dB -> 0
    added = np.maximum(l_target - l_orig, 0.0)
    std = np.sqrt(added / 2.0) if mode == "total-power" else np.sqrt(added)
    return float(std) if std.ndim == 0 else std


def degrade_stack(stack: SlcStack, target_nesz_db: float, model: NeszModel, seed: int, *,
                  mode: str = "total-power", jobs: int = 1) -> SlcStack:
    """Add independent complex Gaussian noise to every SLC to reach ``target_nesz_db``.

    The noise std varies only with the original NESZ per range column, so a
    constant model gives noise that is constant across the swath. Streams are
    keyed by SLC index, hence independent across acquisitions.
    """
    inc = stack.incidence_deg
    out = []
    for i, slc in enumerate(stack):
        orig = np.asarray(nesz_at(model, inc, date=slc.date))
        bad = np.nonzero(orig > target_nesz_db)[0]
        if bad.size:
            c = int(bad[0])
            raise NoiseInjectionError(
                f"SLC {i}: original NESZ {orig[c]:.2f} dB at column {c} (incidence {inc[c]:.2f} deg) "
                f"exceeds the target {target_nesz_db:.2f} dB")
        std = required_noise_std(orig, target_nesz_db, mode=mode)
        if np.all(std == 0):
            out.append(slc)
            continue
        unit = rng.complex_normal_field(seed, "thermal-noise", i, slc.shape, jobs=jobs)[..., 0]
        # unit has E|z|^2 = 1, i.e. per-component std 1/sqrt(2)
        out.append(slc.with_data(slc.data + (math.sqrt(2.0) * std)[np.newaxis, :] * unit))
    return SlcStack(tuple(out))


def measure_nesz(stack: SlcStack, signal_free_mask=None, min_pixels: int = 1000) -> float:
    """Mean power (dB) over the masked pixels of every SLC; ``-inf`` for an all-zero stack."""
    data = stack.data()
    if signal_free_mask is None:
        signal_free_mask = np.ones(stack.shape, dtype=bool)
    mask = np.asarray(signal_free_mask, dtype=bool)
    if mask.shape != stack.shape:
        raise ValueError(f"mask shape {mask.shape} != stack shape {stack.shape}")
    if int(mask.sum()) < min_pixels:
        raise ValueError(f"mask selects {int(mask.sum())} pixels; need at least {min_pixels}")
    power = np.mean(np.abs(data[:, mask]) ** 2)
    return linear_to_db(power)
