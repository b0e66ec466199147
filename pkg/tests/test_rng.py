import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lowsnr import rng


def test_field_is_deterministic_and_stream_separated():
    a = rng.complex_normal_field(7, "speckle", 0, (20, 30))
    b = rng.complex_normal_field(7, "speckle", 0, (20, 30))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng.complex_normal_field(7, "speckle", 1, (20, 30)))
    assert not np.array_equal(a, rng.complex_normal_field(7, "noise", 0, (20, 30)))
    assert not np.array_equal(a, rng.complex_normal_field(8, "speckle", 0, (20, 30)))


@given(st.integers(1, 17), st.integers(1, 23), st.integers(1, 4))
def test_tiling_and_threads_do_not_change_bits(tr, tc, jobs):
    shape = (17, 23)
    ref = rng.complex_normal_field(3, "tile-test", 2, shape)
    got = rng.complex_normal_field(3, "tile-test", 2, shape, jobs=jobs, tile_rows=tr, tile_cols=tc)
    assert np.array_equal(ref, got)


def test_tile_matches_full_scene_slice():
    shape = (40, 50)
    full = rng.complex_normal_field(11, "s", 0, shape)
    tile = rng.complex_normal_tile(11, "s", 0, shape, 5, 17, 8, 31)
    assert np.array_equal(tile, full[5:17, 8:31])


def test_unit_power_circular_gaussian():
    z = rng.complex_normal_field(5, "stats", 0, (500, 500)).reshape(-1)
    assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.01
    assert abs(np.mean(z.real ** 2) - 0.5) < 0.01
    assert abs(np.mean(z.real * z.imag)) < 0.005
    assert abs(np.mean(z)) < 0.005
    # |z|^2 exponential: P(|z|^2 > 1) = exp(-1)
    assert abs(np.mean(np.abs(z) ** 2 > 1.0) - np.exp(-1)) < 0.005
