import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lowsnr import _backend
from lowsnr.core import GeometryError, los_to_phase, multilook, wrap
from lowsnr.interferometry import cramer_rao_los_std, estimate_coherence, form_interferogram, wrapped_phase
from lowsnr.network import IfgNetwork
from lowsnr.scene import CoherenceModel, make_sigma0_field, make_velocity_field, synthesize_pair, synthesize_slc_stack
from lowsnr.unwrap import (UnwrapError, bridge_components, closure_phase, correct_closure, count_residues,
                           find_bridge_arcs, residue_map, unwrap)

TWO_PI = 2 * math.pi


def _brute_residues(w):
    """Circulation of every 2x2 loop with explicit Python loops."""
    count = 0
    rows, cols = w.shape
    for r in range(rows - 1):
        for c in range(cols - 1):
            loop = [w[r, c], w[r, c + 1], w[r + 1, c + 1], w[r + 1, c], w[r, c]]
            s = 0.0
            for a, b in zip(loop, loop[1:]):
                d = b - a
                while d > math.pi:
                    d -= TWO_PI
                while d <= -math.pi:
                    d += TWO_PI
                s += d
            if abs(s) > math.pi:
                count += 1
    return count


def _ramp(rows=40, cols=50, gx=0.7, gy=-0.4):
    r, c = np.mgrid[0:rows, 0:cols]
    return gy * r + gx * c


# --- residues -----------------------------------------------------------------

def test_ramp_has_no_residues():
    assert count_residues(wrap(_ramp())) == 0


def test_single_vortex():
    r, c = np.mgrid[0:20, 0:20]
    w = np.angle((c - 9.5) + 1j * (r - 9.3))
    m = residue_map(w)
    assert count_residues(w) == 1
    assert abs(m.sum()) == 1


def test_noise_residues_match_brute_force():
    w = np.random.default_rng(4).uniform(-math.pi, math.pi, (100, 100))
    n = count_residues(w)
    assert n == _brute_residues(w)
    assert n > 1000


# --- unwrap ---------------------------------------------------------------------

def test_noise_free_ramp_exact_single_component():
    truth = _ramp()
    res = unwrap(wrap(truth), np.ones_like(truth), 0.0)
    off = res.unwrapped_phase - truth
    assert np.allclose(off, off[0, 0], atol=1e-9)
    assert round(off[0, 0] / TWO_PI) * TWO_PI == pytest.approx(off[0, 0], abs=1e-9)
    assert res.n_components == 1 and np.all(res.components == 1)
    assert res.unwrapped_phase[res.seed_pixel] == wrap(truth)[res.seed_pixel]


def test_band_splits_components():
    truth = _ramp(60, 40)
    coh = np.full(truth.shape, 0.9)
    coh[28:32] = 0.0
    res = unwrap(wrap(truth), coh, 0.3)
    assert res.n_components >= 2
    assert np.all(res.components[28:32] == 0)
    assert sorted(np.unique(res.components[res.components > 0])) == list(range(1, res.n_components + 1))


def test_rejects_bad_inputs():
    with pytest.raises(UnwrapError):
        unwrap(np.zeros((4, 4)), np.full((4, 4), 0.1), 0.3)
    with pytest.raises(GeometryError):
        unwrap(np.zeros((4, 4)), np.ones((4, 5)), 0.3)
    with pytest.raises(ValueError):
        unwrap(np.zeros((4, 4)), np.ones((4, 4)), 1.5)


def test_noisy_ten_fringe_ramp_within_three_crlb():
    rows, cols = 256, 512
    phi = np.linspace(0, 10 * TWO_PI, cols)[None, :].repeat(rows, axis=0)
    pair = synthesize_pair(0.9, 0.0, 31, deformation_phase_rad=phi)
    ifg = form_interferogram(pair[0], pair[1], (8, 8))
    coh = estimate_coherence(pair[0], pair[1], 8, 8)
    res = unwrap(wrapped_phase(ifg), coh, 0.3)
    truth = multilook(phi, 8, 8)
    err = res.unwrapped_phase - truth
    err -= np.mean(err)
    rms = math.sqrt(np.mean(err**2))
    pred = los_to_phase(cramer_rao_los_std(0.9, 64, 0.24), 0.24)
    assert rms < 3 * pred


_fields = arrays(np.float64, st.tuples(st.integers(2, 14), st.integers(2, 14)),
                 elements=st.floats(-math.pi, math.pi, allow_nan=False))


@given(_fields, st.integers(0, 2**31 - 1), st.floats(0.0, 0.9))
def test_congruence_everywhere(w, seed, thr):
    coh = np.random.default_rng(seed).uniform(0, 1, w.shape)
    coh.flat[0] = 1.0
    res = unwrap(w, coh, thr)
    assert np.allclose(wrap(res.unwrapped_phase - w), 0, atol=1e-6)
    k = (res.unwrapped_phase - w) / TWO_PI
    assert np.allclose(k, np.rint(k), atol=1e-9)


@settings(max_examples=25)
@given(_fields, st.integers(0, 2**31 - 1), st.floats(0.0, 0.9))
def test_python_and_compiled_kernels_agree(w, seed, thr):
    try:
        fast = _backend.get_kernels("cython")
    except ImportError:
        pytest.skip("compiled kernel not built")
    slow = _backend.get_kernels("python")
    coh = np.random.default_rng(seed).uniform(0, 1, w.shape)
    a = fast.grow_region(w, coh, thr)
    b = slow.grow_region(w, coh, thr)
    for x, y in zip(a, b):
        assert np.array_equal(np.asarray(x), np.asarray(y))


def test_backends_agree_on_nan_holes():
    try:
        fast = _backend.get_kernels("cython")
    except ImportError:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(9)
    w = rng.uniform(-3, 3, (30, 30))
    coh = rng.uniform(0, 1, (30, 30))
    w[5:9, 5:9] = np.nan
    a = fast.grow_region(w, coh, 0.3)
    b = _backend.get_kernels("python").grow_region(w, coh, 0.3)
    for x, y in zip(a, b):
        assert np.array_equal(np.asarray(x), np.asarray(y), equal_nan=True)


# --- bridging ---------------------------------------------------------------------

def _split(truth, band=slice(28, 32)):
    coh = np.full(truth.shape, 0.9)
    coh[band] = 0.0
    return unwrap(wrap(truth), coh, 0.3), coh


def test_bridge_two_pi_offset():
    res, coh = _split(np.zeros((30, 20)), slice(14, 16))
    ph = res.unwrapped_phase.copy()
    other = 3 - res.components[res.seed_pixel]
    ph[res.origin == other] += TWO_PI
    shifted = type(res)(ph, res.components, res.residue_count, res.seed_pixel, res.origin)
    arcs = find_bridge_arcs(shifted, coh, 0.3)
    out = bridge_components(shifted, arcs)
    assert out.offsets == {other: -1}
    assert np.allclose(out.unwrapped_phase, out.unwrapped_phase[0, 0])
    assert out.unbridged == ()


def test_bridge_zero_offset_is_identity():
    truth = _ramp(30, 20, 0.2, 0.1)
    res, coh = _split(truth, slice(14, 16))
    out = bridge_components(res, find_bridge_arcs(res, coh, 0.3))
    assert np.array_equal(out.unwrapped_phase, res.unwrapped_phase)


def test_bridge_recovers_truth_offset_with_noise():
    rows, cols = 64, 40
    truth = _ramp(rows, cols, 0.3, 0.25)
    rng = np.random.default_rng(2)
    noisy = truth + rng.normal(0, 0.3, truth.shape)
    coh = np.full(truth.shape, 0.9)
    coh[30:33] = 0.0
    res = unwrap(wrap(noisy), coh, 0.3)
    assert res.n_components == 2
    out = bridge_components(res, find_bridge_arcs(res, coh, 0.3, 5))
    diff = out.unwrapped_phase - truth
    mask = out.components > 0
    k = np.rint((diff[mask] - diff[out.seed_pixel]) / TWO_PI)
    assert np.all(k == 0)


def test_unreachable_component_flagged():
    truth = np.zeros((40, 20))
    res, coh = _split(truth, slice(10, 30))
    arcs = find_bridge_arcs(res, coh, 0.3, 5)
    assert len(arcs) == 0
    out = bridge_components(res, arcs)
    assert len(out.unbridged) == 1


# --- closure --------------------------------------------------------------------

def _consistent_stack(n_dates=3, shape=(30, 30), seed=0):
    rng = np.random.default_rng(seed)
    base = np.cumsum(rng.normal(0, 0.3, (n_dates,) + shape), axis=0)
    base[0] = 0
    net = IfgNetwork.all_pairs(range(n_dates))
    return net, np.stack([base[b] - base[a] for a, b in net.pairs])


def test_closure_phase_examples():
    net, stk = _consistent_stack()
    assert np.allclose(closure_phase(stk[0], stk[2], stk[1]), 0, atol=1e-12)
    bad = stk[0].copy()
    bad[5:10, 5:10] += TWO_PI
    cl = closure_phase(bad, stk[2], stk[1])
    assert np.allclose(cl[5:10, 5:10], TWO_PI) and np.allclose(cl[:5], 0, atol=1e-12)
    # swapping the order of the two short legs leaves the closure unchanged
    assert np.allclose(closure_phase(stk[2], bad, stk[1]), cl)


def test_wrapped_speckle_triplet_closure_centered():
    vel = make_velocity_field("uniform", {"v": 0.0}, 200, 200)
    sig = make_sigma0_field("uniform", {"sigma0_db": 0.0}, 200, 200)
    s = synthesize_slc_stack(vel, sig, [0, 10, 20], CoherenceModel(0.8, 0.4, 30), 0.24, seed=3)
    w = [wrapped_phase(form_interferogram(s[a], s[b])) for a, b in ((0, 1), (1, 2), (0, 2))]
    cl = wrap(closure_phase(*w))
    assert abs(np.mean(cl)) < 0.02
    assert abs(np.median(cl)) < 0.02


def test_consistent_stack_needs_no_correction():
    net, stk = _consistent_stack(4)
    cc = correct_closure(stk, net)
    assert cc.n_corrections == 0 and np.array_equal(cc.corrected, stk)
    assert not cc.unresolved.any()


@pytest.mark.parametrize("which", [0, 1, 2])
def test_single_error_in_triplet_corrected_exactly(which):
    net, stk = _consistent_stack(3, seed=which)
    bad = stk.copy()
    bad[which, 10:18, 12:20] += TWO_PI
    cc = correct_closure(bad, net)
    assert np.allclose(cc.corrected, stk, atol=1e-12)
    assert np.all(cc.cycles[which, 10:18, 12:20] == 1)
    assert cc.n_corrections == 64


def test_five_percent_injection_mostly_corrected():
    net, stk = _consistent_stack(5, (80, 80), seed=7)
    rng = np.random.default_rng(8)
    inj = rng.random(stk.shape) < 0.05
    sign = np.where(rng.random(stk.shape) < 0.5, 1, -1)
    bad = stk + TWO_PI * sign * inj
    cc = correct_closure(bad, net)
    fixed = inj & np.isclose(cc.corrected, stk, atol=1e-9)
    assert fixed.sum() / inj.sum() >= 0.95


@given(st.integers(0, 10_000), st.integers(3, 5))
def test_closure_changes_only_whole_cycles(seed, n):
    net, stk = _consistent_stack(n, (12, 12), seed=seed)
    rng = np.random.default_rng(seed)
    noisy = stk + rng.normal(0, 0.5, stk.shape) + TWO_PI * rng.integers(-1, 2, stk.shape) * (rng.random(stk.shape) < 0.1)
    cc = correct_closure(noisy, net)
    k = (noisy - cc.corrected) / TWO_PI
    assert np.allclose(k, np.rint(k), atol=1e-9)
