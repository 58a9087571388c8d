"""Synthetic components (points, line, texture), degradation and band balancing.

Geometry: x1 is axis 0.  The line lies on the column x2 = c and runs along x1,
so its spectrum is w_hat(xi1), constant in xi2.  The missing strip covers the
rows |x1 - c| <= h and therefore cuts across the line and the texture patch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import windows
from .frames import gabor_band_centers
from .grid import FrequencyGrid, StripMask, apply_mask, inverse_spectrum, l2
from .multiscale import SubbandStack, filter_bank

log = logging.getLogger(__name__)


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    positions: tuple  # ((x1, x2), ...) pixel coordinates

    @property
    def K(self):
        return len(self.positions)


@dataclass(frozen=True)
class LineSegment:
    rho: float
    w_profile: str = "bump"


@dataclass(frozen=True)
class TextureSpec:
    bands: tuple  # Gabor band indices n (frequency unit * n in DFT indices)
    coeffs: tuple  # complex d_n
    unit: int = 1
    window: str = "meyer"
    d_max: float = 1.0
    center: tuple | None = None


def _phase(grid, x):
    k1, k2 = grid.frequencies()
    return np.exp(-2j * np.pi * (k1 * x[0] + k2 * x[1]) / grid.n)


def gen_points(grid, cloud, mask=None, exponent=-0.5, amplitude=1.0):
    """Sum of point singularities built as c |xi|^exponent e^{-2 pi i xi.x_i}."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    pos = [tuple(float(v) for v in p) for p in cloud.positions]
    if not pos:
        raise PhantomError("point cloud is empty")
    if len(set(pos)) != len(pos):
        raise PhantomError("point positions must be distinct")
    if mask is not None:
        for p in pos:
            if abs(p[0] - mask.center) <= mask.h:
                raise PhantomError(f"point {p} lies in the missing strip")
    k1, k2 = grid.frequencies()
    r = np.hypot(k1, k2)
    radial = np.where(r > 0, np.power(np.where(r > 0, r, 1.0), exponent), 0.0)
    spec = sum(_phase(grid, p) for p in pos) * radial * amplitude
    img = inverse_spectrum(spec)
    return np.real(img) + 0j


def weight_profile(t, rho, kind="bump"):
    """Smooth weight on [-rho, rho] vanishing at the endpoints (except 'const')."""
    u = np.asarray(t, dtype=float) / rho
    inside = np.abs(u) < 1
    if kind == "const":
        return np.where(np.abs(u) <= 1, 1.0, 0.0)
    if kind == "hann":
        return np.where(inside, np.cos(0.5 * np.pi * u) ** 2, 0.0)
    if kind == "bump":
        safe = np.where(inside, 1 - u**2, 1.0)
        return np.where(inside, np.exp(1 - 1 / safe), 0.0)
    raise PhantomError(f"unknown weight profile {kind!r}")


def line_transform(grid, seg, oversample=8):
    """w_hat(xi1) by trapezoid quadrature of w over [-rho, rho]."""
    if not 0 < seg.rho < grid.n / 2:
        raise PhantomError(f"rho must lie in (0, n/2), got {seg.rho}")
    m = int(np.ceil(2 * seg.rho * oversample))
    t = np.linspace(-seg.rho, seg.rho, m + 1)
    w = weight_profile(t, seg.rho, seg.w_profile)
    k = np.fft.fftfreq(grid.n, 1.0 / grid.n)
    integrand = w[None, :] * np.exp(-2j * np.pi * k[:, None] * t[None, :] / grid.n)
    return np.trapezoid(integrand, t, axis=1)


def gen_line(grid, seg, center=None):
    """Weighted line distribution on the column x2 = c, running along x1."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    c = grid.center if center is None else center
    wh = line_transform(grid, seg)
    spec = np.broadcast_to(wh[:, None], grid.shape) * _phase(grid, (c, c))
    spec = spec.copy()
    spec[0, 0] = 0.0
    return np.real(inverse_spectrum(spec)) + 0j


def texture_spectrum(grid, spec):
    n = grid.n
    s = spec.unit
    c = (grid.center, grid.center) if spec.center is None else spec.center
    k1, k2 = grid.frequencies()
    out = np.zeros(grid.shape, dtype=complex)
    valid = set(gabor_band_centers(n, s))
    for b, d in zip(spec.bands, spec.coeffs):
        if tuple(b) not in valid:
            raise PhantomError(f"texture band {b} outside the Gabor lattice")
        # periodic distance to the band center
        u1 = (np.mod(k1 - s * b[0] + n // 2, n) - n // 2) / s
        u2 = (np.mod(k2 - s * b[1] + n // 2, n) - n // 2) / s
        out += d * windows.gabor_window(u1, spec.window) * windows.gabor_window(u2, spec.window)
    return out * _phase(grid, c) / (2 * s)


def gen_texture(grid, spec, eps=None):
    """Sum_n d_n g(x - c) e^{2 pi i (x - c) . s n / N}: exact Gabor synthesis at the window center."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    if eps is not None:
        for j, cnt, bound in texture_audit(grid.n, spec, eps):
            if cnt > bound:
                log.warning("texture sparsity budget exceeded at j=%d: %d > %.2f", j, cnt, bound)
    return inverse_spectrum(texture_spectrum(grid, spec))


def neighborhood(bands):
    """I_T^+- : all band indices within l2 distance 1 of some band of I_T."""
    out = set()
    for b in bands:
        for d in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
            out.add((b[0] + d[0], b[1] + d[1]))
    return out


def band_scale_members(n, unit, bands, j):
    """Bands whose center frequency lies in supp W_j (the annulus A_j)."""
    W = filter_bank(n)[1][j]
    return {b for b in bands if W[(unit * b[0]) % n, (unit * b[1]) % n] > 0}


def texture_audit(n, spec, eps):
    """(j, |I_T^+- cap A_j|, 2^{(1-eps) j}) for every scale."""
    nb = neighborhood(spec.bands)
    nb = {b for b in nb if -n // (2 * spec.unit) <= b[0] < n // (2 * spec.unit)
          and -n // (2 * spec.unit) <= b[1] < n // (2 * spec.unit)}
    out = []
    for j in range(windows.max_scale(n) + 1):
        cnt = len(band_scale_members(n, spec.unit, nb, j))
        out.append((j, cnt, 2.0 ** ((1 - eps) * j)))
    return out


def random_texture(grid, eps, seed, unit=1, window="meyer", d_max=1.0, scales=None, per_scale=None):
    """Random texture: per annulus a few bands inside A_j, d_n uniform on the unit disk."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    n = grid.n
    rng = np.random.default_rng(seed)
    W = filter_bank(n)[1]
    j_max = len(W) - 2
    scales = range(1, j_max + 1) if scales is None else scales
    allb = gabor_band_centers(n, unit)
    chosen = []
    for j in scales:
        # prefer bands whose center is not shared with neighbouring annuli
        own = [b for b in allb if W[j][(unit * b[0]) % n, (unit * b[1]) % n] > 0.99]
        if not own:
            own = [b for b in allb if W[j][(unit * b[0]) % n, (unit * b[1]) % n] > 0]
        if not own:
            continue
        count = per_scale(j) if per_scale else max(1, int(2.0 ** ((1 - eps) * j)) // 5)
        idx = rng.choice(len(own), size=min(count, len(own)), replace=False)
        chosen.extend(own[i] for i in sorted(idx))
    r = np.sqrt(rng.uniform(size=len(chosen)))
    th = rng.uniform(0, 2 * np.pi, size=len(chosen))
    d = r * np.exp(1j * th)
    d = np.where(np.abs(d) > d_max, d / np.abs(d) * d_max, d)
    return TextureSpec(tuple(chosen), tuple(complex(v) for v in d), unit, window, d_max)


def degrade(img, mask, noise_level=0.0, seed=0, frames=None):
    """P_K img + eta with ||eta|| = noise_level ||P_K img||, eta supported on the known rows.

    Returns (observed, eta, report) where report maps frame kind to ||Phi* eta||_1.
    """
    if noise_level < 0:
        raise PhantomError("noise_level must be non-negative")
    img = np.asarray(img)
    known = apply_mask(mask, img, "known")
    eta = np.zeros_like(known)
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        if np.any(np.imag(img) != 0):
            raw = rng.standard_normal(img.shape) + 1j * rng.standard_normal(img.shape)
        else:
            raw = rng.standard_normal(img.shape) + 0j
        raw = apply_mask(mask, raw, "known")
        nr = l2(raw)
        if nr > 0:
            eta = raw * (noise_level * l2(known) / nr)
    report = {}
    for fr in frames or ():
        report[fr.kind] = fr.analyze(eta).l1()
    return known + eta, eta, report


def normalize_band_energies(stacks, scales=None):
    """Rescale each component per band so all share the largest band norm.

    Returns (scaled stacks, factors) with factors[j] a tuple per component.
    Bands where any component has zero energy are left unchanged and logged.
    """
    stacks = list(stacks)
    ref = stacks[0]
    scales = ref.scales() if scales is None else scales
    new_bands = [dict(s.bands) for s in stacks]
    factors = {}
    for j in scales:
        norms = [l2(s.band(j)) for s in stacks]
        if min(norms) == 0:
            log.warning("band %d skipped: a component has zero energy", j)
            factors[j] = tuple(1.0 for _ in stacks)
            continue
        target = max(norms)
        factors[j] = tuple(target / v for v in norms)
        for m, s in enumerate(stacks):
            new_bands[m][j] = s.band(j) * factors[j][m]
    out = [s.with_bands(sorted(nb.items())) for s, nb in zip(stacks, new_bands)]
    return out, factors


def strip_schedule(h0, eps, j):
    """h_j = h0 2^{-(1 + eps + 0.05) j} pixels."""
    return h0 * 2.0 ** (-(1 + eps + 0.05) * j)


def default_points(n):
    """Three points in the known region, away from the line column and the texture patch."""
    return PointCloud(((n // 4, n // 4), (n // 4 + n // 8, 3 * n // 4), (3 * n // 4, 5 * n // 8)))
