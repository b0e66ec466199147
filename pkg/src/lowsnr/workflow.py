"""In-memory processing chain: interferograms -> unwrapping -> closure -> SBAS.

The original and degraded branches must go through identical settings; the
:class:`ChainSettings` value is what gets hashed to prove it.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import Interferogram, SlcStack, reference_to_pixel
from .interferometry import make_interferogram
from .network import IfgNetwork
from .timeseries import (TimeSeriesResult, fit_velocity, mask_by_temporal_coherence, sbas_invert,
                         select_reference_pixel, temporal_coherence)
from .unwrap import UnwrapResult, bridge_components, correct_closure, find_bridge_arcs, unwrap


@dataclass(frozen=True)
class ChainSettings:
    looks: tuple[int, int] = (8, 8)
    coherence_window: int = 5  # sliding window, single-look products only
    unwrap_threshold: float = 0.3
    bridge: bool = True
    bridge_max_distance: int = 5
    closure: bool = True
    tcoh_threshold: float = 0.5
    weighted: bool = False

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def form_ifgs(stack: SlcStack, network: IfgNetwork, settings: ChainSettings, jobs: int = 1) -> list[Interferogram]:
    win = (settings.coherence_window,) * 2 if tuple(settings.looks) == (1, 1) else None

    def one(pair):
        a, b = pair
        return make_interferogram(stack[a], stack[b], looks=settings.looks, coherence_window=win)

    return _map(one, list(network.pairs), jobs)


def unwrap_ifgs(ifgs, settings: ChainSettings, jobs: int = 1) -> list[UnwrapResult]:
    def one(ifg):
        res = unwrap(ifg.wrapped_phase, ifg.coherence, settings.unwrap_threshold)
        if settings.bridge and res.n_components > 1:
            arcs = find_bridge_arcs(res, ifg.coherence, settings.unwrap_threshold, settings.bridge_max_distance)
            res = bridge_components(res, arcs)
        return res

    return _map(one, list(ifgs), jobs)


@dataclass(frozen=True, eq=False)
class ChainOutput:
    ifgs: list
    unwrapped: np.ndarray  # (n_pairs, rows, cols) after bridging / closure
    unwrap_results: list
    closure_corrections: int
    timeseries: TimeSeriesResult
    settings_digest: str


def run_chain(stack: SlcStack, network: IfgNetwork, settings: ChainSettings, ref_pixel=None,
              jobs: int = 1) -> ChainOutput:
    """Everything from SLCs to a masked velocity map for one branch."""
    ifgs = form_ifgs(stack, network, settings, jobs)
    results = unwrap_ifgs(ifgs, settings, jobs)
    if ref_pixel is None:
        ref_pixel = select_reference_pixel(np.stack([i.coherence for i in ifgs]))
    # referencing first removes the arbitrary per-interferogram 2pi offset
    # left by each seed, so closure only sees genuine local cycle errors
    unw = reference_to_pixel(np.stack([r.unwrapped_phase for r in results]), *ref_pixel)
    n_corr = 0
    if settings.closure and network.triplets():
        cc = correct_closure(unw, network)
        unw, n_corr = cc.corrected, cc.n_corrections
    ts = invert(unw, network, ref_pixel, stack.wavelength_m, settings,
                coherence=np.stack([i.coherence for i in ifgs]) if settings.weighted else None)
    return ChainOutput(ifgs, unw, results, n_corr, ts, settings.digest())


def invert(unw, network, ref_pixel, wavelength_m, settings: ChainSettings, coherence=None) -> TimeSeriesResult:
    ref = reference_to_pixel(unw, *ref_pixel)
    weights = None
    if coherence is not None:
        rho = np.clip(coherence, 1e-3, 0.999)
        weights = rho**2 / (1.0 - rho**2)
    res = sbas_invert(ref, network, ref_pixel, wavelength_m, weights=weights)
    res = replace(res, temporal_coherence=temporal_coherence(ref, res.reconstructed_phase))
    res = replace(res, velocity=fit_velocity(res))
    if settings.tcoh_threshold is not None:
        res = mask_by_temporal_coherence(res, settings.tcoh_threshold)
    return res
