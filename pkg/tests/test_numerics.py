import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptav import numerics
from oracles import brute_force_sse, direct_xcorr, kmeans_instances


def test_delta_has_flat_spectrum():
    d = np.zeros((5, 7))
    d[0, 0] = 1.0
    assert np.allclose(numerics.fft2(d), 1.0)


def test_constant_image_dc_only():
    f = numerics.fft2(np.full((4, 6), 0.5))
    assert f[0, 0] == pytest.approx(0.5 * 24)
    f[0, 0] = 0
    assert np.abs(f).max() < 1e-12


def test_xcorr_matches_direct_oracle(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert np.abs(numerics.circular_xcorr(a, b) - direct_xcorr(a, b)).max() < 1e-6


def test_xcorr_nonsquare_odd(rng):
    a, b = rng.random((5, 7)), rng.random((5, 7))
    assert np.allclose(numerics.circular_xcorr(a, b), direct_xcorr(a, b), atol=1e-10)


@pytest.mark.parametrize("h", [1, 2, 7, 16, 31])
@pytest.mark.parametrize("w", [1, 3, 13, 32])
def test_round_trip_and_parseval(h, w, rng):
    x = rng.normal(size=(h, w))
    f = numerics.fft2(x)
    assert np.abs(np.real(numerics.ifft2(f)) - x).max() <= 1e-9 * max(1.0, np.abs(x).max())
    energy = (x**2).sum()
    assert (np.abs(f) ** 2).sum() / (w * h) == pytest.approx(energy, rel=1e-6)


def test_gaussian_label():
    g = numerics.gaussian_label(12, 10, 2.0)
    assert g[0, 0] == 1.0
    assert g[0, 3] == pytest.approx(math.exp(-9 / 8))
    # circular symmetry: label(x, y) == label(-x, -y)
    assert np.allclose(g, np.roll(np.flip(g, (0, 1)), (1, 1), axis=(0, 1)))
    tiny = numerics.gaussian_label(8, 8, 0.05)
    assert tiny[0, 0] == 1.0 and np.sort(tiny.ravel())[-2] < 1e-50


def test_hann_window():
    h = numerics.hann_window(5, 1)
    assert h.shape == (1, 5)
    w = numerics.hann_window(4, 5)
    assert w[0].max() == 0 and w[:, 0].max() == 0
    assert numerics.hann_window(5, 5)[2, 2] == 1.0
    closed = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(4) / 3)
    assert np.allclose(numerics.hann_window(4, 1)[0], closed)


def test_kmeans_small_examples():
    pts = np.array([[0, 0], [0, 1], [10, 10], [10, 11]], dtype=float)
    cs = numerics.kmeans(pts, 2)
    groups = sorted(sorted(cs.members(i).tolist()) for i in range(2))
    assert groups == [[0, 1], [2, 3]]
    one = numerics.kmeans(pts, 1)
    assert np.allclose(one.centroids[0], pts.mean(axis=0))
    each = numerics.kmeans(pts, 4)
    assert each.sse == 0.0


def test_kmeans_rejects_bad_k():
    with pytest.raises(ValueError):
        numerics.kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        numerics.kmeans(np.zeros((3, 2)), 0)


def test_kmeans_reaches_brute_force_optimum(rng):
    for pts in kmeans_instances(rng, 200):
        for k in (1, 2):
            if k > len(pts):
                continue
            cs = numerics.kmeans(pts, k)
            assert cs.sse == pytest.approx(brute_force_sse(pts, k), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_kmeans_history_nonincreasing_and_deterministic(n, k, seed):
    k = min(k, n)
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    a = numerics.kmeans(pts, k, seed=seed)
    b = numerics.kmeans(pts, k, seed=seed)
    assert np.array_equal(a.assignments, b.assignments)
    assert all(y <= x + 1e-9 for x, y in zip(a.history, a.history[1:]))
    assert len(set(a.assignments.tolist())) == k
