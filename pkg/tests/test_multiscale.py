from __future__ import annotations

import numpy as np
import pytest

from gsep.grid import FrequencyGrid, GridError, inverse_spectrum, l2, spectrum
from gsep.multiscale import (ScaleError, decompose, dump_stack, filter_bank, load_stack, reconstruct,
                             single_band)


def rand_img(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def tone(n, k):
    spec = np.zeros((n, n), dtype=complex)
    spec[k[0] % n, k[1] % n] = n
    return inverse_spectrum(spec)


def test_filter_bank_tiles():
    for n in (16, 64, 256):
        low, W = filter_bank(n)
        assert np.abs(low**2 + sum(w**2 for w in W) - 1).max() < 1e-12
    with pytest.raises(ScaleError):
        filter_bank(64, 4)


def test_tone_in_single_band():
    n = 64
    low, W = filter_bank(n)
    # a frequency where W_2 is the only nonzero window
    k1, k2 = FrequencyGrid(n).frequencies()
    only2 = (W[2] > 0) & (low == 0) & np.all([w == 0 for jj, w in enumerate(W) if jj != 2], axis=0)
    a, b = np.argwhere(only2)[0]
    f = tone(n, (k1[a, b], k2[a, b]))
    st = decompose(f)
    for j, img in st.bands:
        e = l2(img) / l2(f)
        assert (abs(e - 1) < 1e-12) if j == 2 else (e < 1e-12)
    assert l2(st.low) < 1e-12


def test_constant_in_low_band():
    st = decompose(np.ones((32, 32)))
    assert abs(l2(st.low) - 32) < 1e-10
    assert all(l2(img) < 1e-12 for _, img in st.bands)


def test_energy_partition():
    f = rand_img(128, 1)
    st = decompose(f)
    total = l2(st.low) ** 2 + sum(l2(img) ** 2 for _, img in st.bands)
    assert abs(total - l2(f) ** 2) <= 1e-10 * l2(f) ** 2


def test_reconstruct_identity():
    f = rand_img(128, 2)
    assert l2(reconstruct(decompose(f)) - f) <= 1e-10 * l2(f)


def test_zeroing_band_removes_annulus():
    n = 64
    f = rand_img(n, 3)
    st = decompose(f)
    z = np.zeros((n, n), dtype=complex)
    g = reconstruct(st.with_bands([(j, z if j == 2 else img) for j, img in st.bands]))
    low, W = filter_bank(n)
    expected = inverse_spectrum(spectrum(f) * (1 - W[2] ** 2))
    assert l2(g - expected) <= 1e-10 * l2(f)


def test_single_band_tone_weighting():
    n = 64
    low, W = filter_bank(n)
    k1, k2 = FrequencyGrid(n).frequencies()
    a, b = np.argwhere(W[1] > 0)[0]
    f = tone(n, (k1[a, b], k2[a, b]))
    g = reconstruct(single_band(n, 1, f))
    # closed form: one frequency, so the result is f scaled by W_1(xi)
    assert l2(g - W[1][a, b] * f) < 1e-12


def test_single_band_idempotence():
    n = 64
    f = rand_img(n, 4)
    g = reconstruct(single_band(n, 2, f))
    st = decompose(g)
    for j, img in st.bands:
        if abs(j - 2) > 1:
            assert l2(img) < 1e-12 * l2(g)
    assert l2(st.low) < 1e-12 * l2(g)


def test_grid_mismatch():
    st = decompose(rand_img(32))
    bad = st.with_bands([(j, np.zeros((16, 16))) for j, _ in st.bands])
    with pytest.raises(GridError):
        reconstruct(bad)


def test_dump_and_load(tmp_path):
    f = rand_img(32, 5)
    st = decompose(f)
    dump_stack(st, tmp_path / "s")
    lines = (tmp_path / "s" / "manifest.csv").read_text().splitlines()
    assert lines[0] == "j,filename,l2" and len(lines) == 2 + len(st.bands)
    back = load_stack(tmp_path / "s")
    assert l2(reconstruct(back) - f) <= 1e-12 * l2(f)
