"""Periodic image grid, unitary spectra and the strip mask projections.

Images are plain complex ``numpy`` arrays of shape ``(n, n)``.  Axis 0 is the
x1 coordinate (pixel row), axis 1 is x2.  Spectra use the unshifted DFT layout,
so ``frequencies`` returns the signed integer frequency at every array slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    n: int

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise GridError(f"grid side must be a power of two >= 16, got {n}")

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def center(self):
        return self.n // 2

    def frequencies(self):
        """Signed integer frequencies (xi1, xi2) on the unshifted DFT layout."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)
        return np.meshgrid(k, k, indexing="ij")

    def check(self, img):
        img = np.asarray(img)
        if img.shape != self.shape:
            raise GridError(f"image shape {img.shape} does not match grid {self.shape}")
        return img

    def zeros(self):
        return np.zeros(self.shape, dtype=complex)


def spectrum(img):
    """Unitary 2-D DFT (norm='ortho')."""
    return fft.fft2(np.asarray(img, dtype=complex), norm="ortho")


def inverse_spectrum(spec):
    return fft.ifft2(np.asarray(spec, dtype=complex), norm="ortho")


@dataclass(frozen=True)
class StripMask:
    """Missing strip {x : |x1 - c| <= h} made of whole pixel rows."""

    n: int
    h: float
    center: int | None = None

    def __post_init__(self):
        if self.h < 0:
            raise GridError("strip half-width must be non-negative")
        if self.center is None:
            object.__setattr__(self, "center", self.n // 2)

    @property
    def missing_rows(self):
        rows = np.arange(self.n)
        return np.abs(rows - self.center) <= self.h

    @property
    def missing(self):
        """Boolean (n, n) indicator of the missing region."""
        return np.broadcast_to(self.missing_rows[:, None], (self.n, self.n))

    @property
    def known(self):
        return ~self.missing

    def project(self, img, part="known"):
        return apply_mask(self, img, part)


def apply_mask(mask, img, part="known"):
    """Return P_K img or P_M img."""
    img = np.asarray(img)
    if img.shape != (mask.n, mask.n):
        raise GridError(f"image shape {img.shape} does not match mask grid {mask.n}")
    if part == "known":
        keep = ~mask.missing_rows
    elif part == "missing":
        keep = mask.missing_rows
    else:
        raise ValueError(f"part must be 'known' or 'missing', got {part!r}")
    return img * keep[:, None]


def l2(img):
    return float(np.linalg.norm(np.ravel(img)))


def inner(a, b):
    """<a, b> linear in the first argument."""
    return complex(np.vdot(np.ravel(b), np.ravel(a)))
