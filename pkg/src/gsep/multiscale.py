"""Band-pass filter bank F_low, F_j and the exact reconstruction identity."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import io, windows
from .frames import radial_windows
from .grid import FrequencyGrid, GridError, inverse_spectrum, l2, spectrum


class ScaleError(ValueError):
    pass


_WINDOW_CACHE = {}


def filter_bank(n, j_max=None):
    """(Theta, [W_0..W_jmax, residual]) on the n-grid, renormalized to an exact tiling."""
    top = windows.max_scale(n)
    j_max = top if j_max is None else j_max
    if j_max < 0 or 2.0 ** (2 * j_max - 1) > n / 2:
        raise ScaleError(f"j_max={j_max} too large for n={n} (limit {top})")
    key = (n, j_max)
    if key not in _WINDOW_CACHE:
        low, bands = radial_windows(FrequencyGrid(n), j_max)
        total = low**2 + sum(w**2 for w in bands)
        s = 1.0 / np.sqrt(total)
        _WINDOW_CACHE[key] = (low * s, [w * s for w in bands])
    return _WINDOW_CACHE[key]


@dataclass
class SubbandStack:
    low: np.ndarray
    bands: list  # list of (j, image)
    n: int
    j_max: int
    meta: dict = field(default_factory=dict)

    def band(self, j):
        for jj, img in self.bands:
            if jj == j:
                return img
        raise KeyError(j)

    def with_bands(self, bands, low=None):
        return SubbandStack(self.low if low is None else low, list(bands), self.n, self.j_max, dict(self.meta))

    def scales(self):
        return [j for j, _ in self.bands]


def band_filter(img, j, j_max=None):
    """F_j * img by spectral multiplication."""
    img = np.asarray(img)
    low, W = filter_bank(img.shape[0], j_max)
    return inverse_spectrum(W[j] * spectrum(img))


def decompose(img, j_max=None):
    img = FrequencyGrid(np.asarray(img).shape[0]).check(img)
    n = img.shape[0]
    low, W = filter_bank(n, j_max)
    F = spectrum(img)
    return SubbandStack(inverse_spectrum(low * F), [(j, inverse_spectrum(w * F)) for j, w in enumerate(W)],
                        n, len(W) - 2)


def reconstruct(stack):
    low, W = filter_bank(stack.n, stack.j_max)
    if np.asarray(stack.low).shape != (stack.n, stack.n):
        raise GridError("low band does not match the stack grid")
    F = low * spectrum(stack.low)
    for j, img in stack.bands:
        if np.asarray(img).shape != (stack.n, stack.n):
            raise GridError(f"band {j} does not match the stack grid")
        F = F + W[j] * spectrum(img)
    return inverse_spectrum(F)


def single_band(n, j, img, j_max=None):
    """Stack holding only band j (others and low band zero)."""
    low, W = filter_bank(n, j_max)
    z = np.zeros((n, n), dtype=complex)
    return SubbandStack(z, [(jj, img if jj == j else z) for jj in range(len(W))], n, len(W) - 2)


def dump_stack(stack, directory):
    """One raw image per band plus a manifest of (j, filename, L2 norm)."""
    os.makedirs(directory, exist_ok=True)
    rows = ["j,filename,l2"]
    io.write_raw(os.path.join(directory, "low.raw"), stack.low)
    rows.append(f"low,low.raw,{l2(stack.low):.17g}")
    for j, img in stack.bands:
        name = f"band_{j}.raw"
        io.write_raw(os.path.join(directory, name), img)
        rows.append(f"{j},{name},{l2(img):.17g}")
    io.atomic_write(os.path.join(directory, "manifest.csv"), ("\n".join(rows) + "\n").encode())


def load_stack(directory):
    with open(os.path.join(directory, "manifest.csv")) as fh:
        lines = fh.read().split()[1:]
    low, bands = None, []
    for line in lines:
        j, name, _ = line.split(",")
        img = io.read_raw(os.path.join(directory, name))
        if j == "low":
            low = img
        else:
            bands.append((int(j), img))
    n = low.shape[0]
    return SubbandStack(low, bands, n, max(j for j, _ in bands) - 1)
