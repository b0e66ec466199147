import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowsnr.core import los_to_phase, phase_to_los, reference_to_pixel
from lowsnr.network import IfgNetwork, NetworkError
from lowsnr.scene import (CoherenceModel, ground_truth_los, make_sigma0_field, make_velocity_field,
                          synthesize_slc_stack)
from lowsnr.timeseries import (build_design_matrix, fit_velocity, mask_by_temporal_coherence, run_timeseries,
                               sbas_invert, select_reference_pixel, temporal_coherence, velocity_operator)
from lowsnr.workflow import ChainSettings, run_chain

LAM = 0.24


def _rad(x):
    """Radians expressed as the LOS that sbas_invert reports."""
    return phase_to_los(x, LAM)


# --- network ---------------------------------------------------------------

def test_network_validation():
    with pytest.raises(NetworkError):
        IfgNetwork(((0, 1), (0, 1)), (0, 1))
    with pytest.raises(NetworkError):
        IfgNetwork(((1, 0),), (0, 1))
    with pytest.raises(NetworkError):
        IfgNetwork(((0, 1),), (1, 0))
    net = IfgNetwork(((0, 1), (2, 3)), (0, 1, 2, 3))
    assert net.components() == [[0, 1], [2, 3]]
    with pytest.raises(NetworkError) as exc:
        build_design_matrix(net)
    assert exc.value.components == [[0, 1], [2, 3]]


def test_sequential_and_triplets():
    net = IfgNetwork.sequential(range(5), max_step=2)
    assert net.pairs == ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4))
    assert net.triplets() == [(0, 1, 2), (1, 2, 3), (2, 3, 4)]
    C = net.closure_matrix()
    assert C.shape == (3, 7) and np.all(C.sum(axis=1) == 1)


# --- design matrix -----------------------------------------------------------

def test_design_matrix_examples():
    A = build_design_matrix(IfgNetwork(((0, 1), (1, 2), (0, 2)), (0, 1, 2)))
    assert np.array_equal(A, [[1, 0], [-1, 1], [0, 1]])
    assert np.array_equal(build_design_matrix(IfgNetwork(((0, 1),), (0, 1))), [[1]])
    assert build_design_matrix(IfgNetwork.all_pairs(range(14))).shape == (91, 13)


@st.composite
def _networks(draw):
    n = draw(st.integers(2, 5))
    all_p = list(combinations(range(n), 2))
    chain = [(i, i + 1) for i in range(n - 1)]
    extra = draw(st.lists(st.sampled_from(all_p), unique=True))
    pairs = sorted(set(chain) | set(extra))
    d = draw(st.lists(st.floats(-10, 10), min_size=n - 1, max_size=n - 1))
    return IfgNetwork(tuple(pairs), tuple(range(n))), np.array([0.0] + d)


@given(_networks())
def test_design_matrix_reproduces_pair_differences(case):
    net, d = case
    A = build_design_matrix(net)
    for row, (a, b) in enumerate(net.pairs):
        assert A[row] @ d[1:] == pytest.approx(d[b] - d[a], abs=1e-12)


# --- inversion -------------------------------------------------------------

def _triplet(values):
    net = IfgNetwork(((0, 1), (1, 2), (0, 2)), (0, 1, 2))
    return net, np.array(values, dtype=float).reshape(3, 1, 1)


def test_consistent_and_inconsistent_triplet():
    net, obs = _triplet([1, 2, 3])
    d = sbas_invert(obs, net, (0, 0), LAM).displacement[:, 0, 0]
    assert np.allclose(d, _rad(np.array([0, 1, 3])), atol=1e-15)
    net, obs = _triplet([1, 1, 3])
    d = sbas_invert(obs, net, (0, 0), LAM).displacement[:, 0, 0]
    # normal equations 2 d1 - d2 = 0, -d1 + 2 d2 = 4
    assert np.allclose(d, _rad(np.array([0, 4 / 3, 8 / 3])), atol=1e-15)
    # brute force over a grid agrees, and (2/3, 7/3) is strictly worse
    A = build_design_matrix(net)
    phi = np.array([1.0, 1.0, 3.0])
    g = np.linspace(0, 4, 401)
    d1, d2 = np.meshgrid(g, g, indexing="ij")
    cost = (d1 - 1) ** 2 + (d2 - d1 - 1) ** 2 + (d2 - 3) ** 2
    i, j = np.unravel_index(np.argmin(cost), cost.shape)
    assert (g[i], g[j]) == pytest.approx((4 / 3, 8 / 3), abs=0.01)
    assert np.sum((A @ [2 / 3, 7 / 3] - phi) ** 2) > np.sum((A @ [4 / 3, 8 / 3] - phi) ** 2)


def test_nan_rows_dropped_and_rank_deficiency_flagged():
    net = IfgNetwork(((0, 1), (1, 2), (0, 2)), (0, 1, 2))
    obs = np.array([[[1.0, 1.0]], [[2.0, np.nan]], [[3.0, np.nan]]])
    res = sbas_invert(obs, net, (0, 0), LAM)
    assert np.allclose(res.displacement[:, 0, 0], _rad(np.array([0, 1, 3])))
    assert res.rank_deficient
    assert res.displacement[1, 0, 1] == pytest.approx(_rad(1.0))


def test_noise_free_stack_recovers_truth():
    rows, cols = 24, 24
    dates = [0.0, 24.0, 48.0, 96.0, 200.0]
    vel = make_velocity_field("linear-ramp", {"v0": -0.01, "v1": 0.03, "axis": "col"}, rows, cols)
    sig = make_sigma0_field("uniform", {"sigma0_db": 0.0}, rows, cols)
    stack = synthesize_slc_stack(vel, sig, dates, CoherenceModel(1.0, 1.0, math.inf), LAM, seed=5)
    net = IfgNetwork.all_pairs(dates)
    out = run_chain(stack, net, ChainSettings(looks=(1, 1), closure=True), ref_pixel=(0, 0))
    ts = out.timeseries
    for k, t in enumerate(dates[1:], start=1):
        truth = ground_truth_los(vel, 0.0, t)
        assert np.allclose(ts.displacement[k], truth - truth[0, 0], atol=1e-6)
    assert np.allclose(ts.temporal_coherence, 1.0)
    assert out.closure_corrections == 0


def test_noise_free_fault_step_velocity():
    rows, cols = 20, 30
    dates = [0.0, 40.0, 120.0, 250.0, 365.25]
    vel = make_velocity_field("fault-step", {"amplitude": 0.01, "column": 15}, rows, cols)
    sig = make_sigma0_field("uniform", {"sigma0_db": 0.0}, rows, cols)
    stack = synthesize_slc_stack(vel, sig, dates, CoherenceModel(1.0, 1.0, math.inf), LAM, seed=6)
    out = run_chain(stack, IfgNetwork.all_pairs(dates), ChainSettings(looks=(1, 1)), ref_pixel=(0, 0))
    assert np.allclose(out.timeseries.velocity, vel.v_los - vel.v_los[0, 0], atol=1e-6)


# --- temporal coherence and masking ------------------------------------------

def test_temporal_coherence_examples():
    obs = np.random.default_rng(0).normal(size=(5, 3, 3))
    assert np.allclose(temporal_coherence(obs, obs), 1.0)
    pi_off = np.array([[[0.0]], [[math.pi]]])
    assert temporal_coherence(pi_off, np.zeros_like(pi_off))[0, 0] == pytest.approx(0.0, abs=1e-15)
    # 2 pi residuals leave it at one
    assert temporal_coherence(np.full((3, 1, 1), 2 * math.pi), np.zeros((3, 1, 1)))[0, 0] == pytest.approx(1.0)


def test_temporal_coherence_uniform_residuals():
    rng = np.random.default_rng(1)
    resid = rng.uniform(-math.pi, math.pi, size=(91, 100, 100))
    g = temporal_coherence(resid, np.zeros_like(resid))
    assert np.mean(g) == pytest.approx(math.sqrt(math.pi / (4 * 91)), rel=0.02)
    assert np.mean(g) == pytest.approx(0.093, abs=0.002)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=12))
def test_temporal_coherence_bounded(res):
    g = temporal_coherence(np.array(res).reshape(-1, 1, 1), np.zeros((len(res), 1, 1)))[0, 0]
    assert 0.0 <= g <= 1.0


def test_masking():
    net, obs = _triplet([1, 1, 3])
    res = run_timeseries(np.concatenate([obs, np.array([1, 2, 3.0]).reshape(3, 1, 1)], axis=2), net, (0, 1),
                         LAM, tcoh_threshold=None)
    assert np.all(np.isfinite(mask_by_temporal_coherence(res, 0.0).velocity))
    m = mask_by_temporal_coherence(res, 1.0 - 1e-12)
    assert np.isnan(m.velocity[0, 0]) and np.isfinite(m.velocity[0, 1])
    assert np.all(np.isnan(m.displacement[:, 0, 0]))
    with pytest.raises(ValueError):
        mask_by_temporal_coherence(res, 1.5)


# --- velocity ------------------------------------------------------------------

def test_fit_velocity_examples():
    days = np.array([0.0, 365.25, 730.5])
    d = np.array([0.0, 0.01, 0.02]).reshape(3, 1, 1)
    assert fit_velocity(d, days)[0, 0] == pytest.approx(0.01)
    assert fit_velocity(np.full((3, 1, 1), 0.3), days)[0, 0] == pytest.approx(0.0, abs=1e-15)
    sparse = np.array([np.nan, 0.01, np.nan]).reshape(3, 1, 1)
    assert np.isnan(fit_velocity(sparse, days)[0, 0])
    assert np.allclose(velocity_operator(days) @ d[:, 0, 0], 0.01)


def test_reference_pixel_selection():
    coh = np.zeros((2, 3, 3))
    coh[:, 1, 2] = 0.9
    coh[0, 2, 2] = 1.0
    assert select_reference_pixel(coh) == (1, 2)
    valid = np.ones((3, 3), bool)
    valid[1, 2] = False
    assert select_reference_pixel(coh, valid) == (2, 2)


def test_referenced_invariants():
    rng = np.random.default_rng(3)
    net = IfgNetwork.all_pairs([0, 10, 30, 45])
    obs = reference_to_pixel(rng.normal(size=(6, 4, 5)), 2, 3)
    res = sbas_invert(obs, net, (2, 3), LAM)
    assert np.all(res.displacement[0] == 0)
    assert np.allclose(res.displacement[:, 2, 3], 0)


def test_single_cycle_error_shifts_velocity_as_predicted():
    dates = [0.0, 73.0, 146.0, 219.0, 292.0, 365.25]
    net = IfgNetwork.all_pairs(dates)
    truth = los_to_phase(np.outer(np.array(dates) / 365.25 * 0.01, np.ones(4)), LAM).reshape(6, 2, 2)
    obs = np.stack([truth[b] - truth[a] for a, b in net.pairs])
    clean = run_timeseries(obs, net, (0, 0), LAM, tcoh_threshold=None)
    k = net.index(1, 4)
    bad = obs.copy()
    bad[k, 1, 1] += 2 * math.pi
    hit = run_timeseries(bad, net, (0, 0), LAM, tcoh_threshold=None)
    A = build_design_matrix(net)
    e = np.zeros(net.n_pairs)
    e[k] = 2 * math.pi
    dd = np.concatenate([[0.0], np.linalg.pinv(A) @ e])
    expected = velocity_operator(np.array(dates)) @ phase_to_los(dd, LAM)
    assert hit.velocity[1, 1] - clean.velocity[1, 1] == pytest.approx(expected, rel=1e-9)
    assert hit.velocity[0, 1] == pytest.approx(clean.velocity[0, 1], abs=1e-15)
