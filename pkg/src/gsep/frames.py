"""Frequency-domain frame families: radial wavelets, cone shearlets and Gabor.

Every family is a bank of real frequency profiles P_b.  Subband b keeps the
smallest power-of-two box (a1, a2) into which the support of P_b folds
injectively modulo (a1, a2).  Coefficients of band b live on the translation
lattice q * (n / a), q in Z_a1 x Z_a2:

    c_b(q) = ifft2_ortho(fold(P_b * fhat))(q),

so <Phi* f, c> = <f, Phi c> exactly, and the frame operator is the Fourier
multiplier sum_b P_b^2.  A family is Parseval when that sum is 1 everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft

from . import windows
from .grid import FrequencyGrid, GridError, inverse_spectrum, spectrum

KIND_RANK = {"lowpass": 0, "wavelet": 1, "shearlet": 2, "gabor": 3, "custom": 4}
CONES = ("h", "v")


class FrameError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AtomIndex:
    """Totally ordered, hashable atom label.

    Ordering is lexicographic on (kind, j, cone, l, band, position); unused
    fields carry neutral values so comparisons never meet None.
    """

    rank: int
    j: int
    cone: str
    l: int
    band: tuple
    position: tuple

    @property
    def kind(self):
        return next(k for k, r in KIND_RANK.items() if r == self.rank)


def LowPass(p):
    return AtomIndex(0, 0, "", 0, (), tuple(p))


def Wavelet(j, p):
    return AtomIndex(1, j, "", 0, (), tuple(p))


def Shearlet(j, l, k, cone):
    if cone not in CONES:
        raise FrameError(f"cone must be 'h' or 'v', got {cone!r}")
    if abs(l) > 2**j:
        raise FrameError(f"shear |l| = {abs(l)} exceeds 2^{j}")
    return AtomIndex(2, j, cone, l, (), tuple(k))


def Gabor(m, band):
    return AtomIndex(3, 0, "", 0, tuple(band), tuple(m))


@dataclass(frozen=True)
class Subband:
    kind: str
    j: int = 0
    cone: str = ""
    l: int = 0
    band: tuple = ()
    shape: tuple = (1, 1)

    def key(self):
        return (KIND_RANK[self.kind], self.j, self.cone, self.l, self.band)

    def atom(self, q):
        return AtomIndex(KIND_RANK[self.kind], self.j, self.cone, self.l, self.band, tuple(q))


def _fold_shape(rows, cols, n):
    """Smallest-area power-of-two box (a1, a2) into which the support folds injectively."""
    count = len(rows)
    if count == 0:
        return 1, 1
    pows = [2**i for i in range(int(np.log2(n)) + 1)]
    cands = sorted(((a1 * a2, max(a1, a2), a1, a2) for a1 in pows for a2 in pows if a1 * a2 >= count))
    for _, _, a1, a2 in cands:
        keys = np.mod(rows, a1) * a2 + np.mod(cols, a2)
        if np.bincount(keys, minlength=a1 * a2).max() <= 1:
            return a1, a2
    return n, n


def box_from_profile(profile, n, tol=0.0):
    """Fold a full (n, n) profile into its box; returns (box_profile, gather).

    Slot (u, v) of the box holds the unique support frequency congruent to
    (u, v) modulo the box shape; empty slots carry a zero profile.
    """
    profile = np.asarray(profile)
    flat = np.flatnonzero(np.abs(profile) > tol)
    return box_from_support(flat, profile.ravel()[flat], n)


def box_from_support(flat, values, n):
    """Same as box_from_profile for a profile given by flat indices and values."""
    keep = values != 0
    flat, values = flat[keep], values[keep]
    rows, cols = flat // n, flat % n
    a1, a2 = _fold_shape(rows, cols, n)
    gather = np.zeros((a1, a2), dtype=np.int64)
    box = np.zeros((a1, a2))
    gather[rows % a1, cols % a2] = flat
    box[rows % a1, cols % a2] = values
    return box, gather


@dataclass(eq=False)
class FrameFamily:
    """Bank of real box profiles with analysis and synthesis.

    ``subbands[b]`` labels band b; ``profiles[b]`` and ``gathers[b]`` are its
    box-shaped profile values and spectrum indices.
    """

    kind: str
    n: int
    subbands: list
    profiles: list
    gathers: list
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.subbands) == len(self.profiles) == len(self.gathers)):
            raise FrameError("subband, profile and gather lists differ in length")
        self.subbands = [replace(sb, shape=tuple(p.shape)) for sb, p in zip(self.subbands, self.profiles)]
        sizes = np.array([p.size for p in self.profiles], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.size = int(self.offsets[-1])
        groups = {}
        for b, p in enumerate(self.profiles):
            groups.setdefault(p.shape, []).append(b)
        self._groups = []
        for shape, bands in groups.items():
            P = np.stack([self.profiles[b] for b in bands])
            G = np.stack([self.gathers[b] for b in bands])
            pos = self.offsets[bands][:, None] + np.arange(shape[0] * shape[1])[None, :]
            self._groups.append((shape, P, G, pos))
        self._lookup = {sb.key(): b for b, sb in enumerate(self.subbands)}

    # -- structure -------------------------------------------------------
    @property
    def grid(self):
        return FrequencyGrid(self.n)

    def __len__(self):
        return self.size

    def band_slice(self, b):
        return slice(int(self.offsets[b]), int(self.offsets[b + 1]))

    def band_of(self, flat):
        return int(np.searchsorted(self.offsets, flat, side="right") - 1)

    def positions(self, b):
        """Pixel coordinates (x1, x2) of every coefficient of band b, shape (a1, a2, 2)."""
        a1, a2 = self.subbands[b].shape
        q1, q2 = np.meshgrid(np.arange(a1), np.arange(a2), indexing="ij")
        return np.stack([q1 * (self.n // a1), q2 * (self.n // a2)], axis=-1)

    def index_of(self, atom):
        key = (atom.rank, atom.j, atom.cone, atom.l, atom.band)
        if key not in self._lookup:
            raise FrameError(f"atom {atom} not in this frame")
        b = self._lookup[key]
        a1, a2 = self.subbands[b].shape
        q1, q2 = atom.position
        if not (0 <= q1 < a1 and 0 <= q2 < a2):
            raise FrameError(f"position {atom.position} outside band lattice {a1}x{a2}")
        return int(self.offsets[b]) + q1 * a2 + q2

    def atom_at(self, flat):
        b = self.band_of(flat)
        a2 = self.subbands[b].shape[1]
        r = flat - int(self.offsets[b])
        return self.subbands[b].atom((r // a2, r % a2))

    def bands_where(self, pred):
        return [b for b, sb in enumerate(self.subbands) if pred(sb)]

    def profile_sum(self):
        """Pointwise sum of squared profiles on the full frequency grid."""
        total = np.zeros(self.n * self.n)
        for P, g in zip(self.profiles, self.gathers):
            total += np.bincount(g.ravel(), weights=(P**2).ravel(), minlength=self.n * self.n)
        return total.reshape(self.n, self.n)

    def full_profile(self, b):
        out = np.bincount(self.gathers[b].ravel(), weights=self.profiles[b].ravel(),
                          minlength=self.n * self.n)
        return out.reshape(self.n, self.n)

    def scaled(self, c):
        return FrameFamily(self.kind, self.n, list(self.subbands), [c * p for p in self.profiles],
                           list(self.gathers), dict(self.params, scale=c))

    def restrict(self, bands):
        bands = sorted(bands)
        return FrameFamily(self.kind, self.n, [self.subbands[b] for b in bands],
                           [self.profiles[b] for b in bands], [self.gathers[b] for b in bands],
                           dict(self.params))

    # -- operators -------------------------------------------------------
    def analyze_spectrum(self, spec):
        fr = np.asarray(spec).ravel()
        out = np.empty(self.size, dtype=complex)
        for shape, P, G, pos in self._groups:
            blocks = fft.ifft2(fr[G] * P, norm="ortho", axes=(-2, -1))
            out[pos] = blocks.reshape(len(P), -1)
        return out

    def synthesize_spectrum(self, data):
        data = np.asarray(data)
        nn = self.n * self.n
        re = np.zeros(nn)
        im = np.zeros(nn)
        for shape, P, G, pos in self._groups:
            blocks = fft.fft2(data[pos].reshape(len(P), *shape), norm="ortho", axes=(-2, -1)) * P
            g = G.ravel()
            re += np.bincount(g, weights=blocks.real.ravel(), minlength=nn)
            im += np.bincount(g, weights=blocks.imag.ravel(), minlength=nn)
        return (re + 1j * im).reshape(self.n, self.n)

    def analyze(self, img):
        img = np.asarray(img)
        if img.shape != (self.n, self.n):
            raise GridError(f"image shape {img.shape} does not match frame grid {self.n}")
        return CoefficientSet(self, self.analyze_spectrum(spectrum(img)))

    def synthesize(self, coeffs):
        data = coeffs.data if isinstance(coeffs, CoefficientSet) else np.asarray(coeffs)
        if isinstance(coeffs, CoefficientSet) and coeffs.frame is not self:
            if coeffs.frame.size != self.size or coeffs.frame.n != self.n:
                raise FrameError("coefficient set belongs to a different frame")
        if data.shape != (self.size,):
            raise FrameError(f"expected {self.size} coefficients, got {data.shape}")
        return inverse_spectrum(self.synthesize_spectrum(data))

    def atom(self, atom):
        """Spatial image of a single atom."""
        c = np.zeros(self.size, dtype=complex)
        c[self.index_of(atom) if isinstance(atom, AtomIndex) else atom] = 1.0
        return self.synthesize(c)

    def zeros(self):
        return CoefficientSet(self, np.zeros(self.size, dtype=complex))


def analyze(frame, img):
    return frame.analyze(img)


def synthesize(frame, coeffs):
    return frame.synthesize(coeffs)


@dataclass(eq=False)
class CoefficientSet:
    frame: FrameFamily
    data: np.ndarray

    def band(self, b):
        a1, a2 = self.frame.subbands[b].shape
        return self.data[self.frame.band_slice(b)].reshape(a1, a2)

    def __getitem__(self, atom):
        return self.data[self.frame.index_of(atom)]

    def l1(self, mask=None):
        d = self.data if mask is None else self.data[mask]
        return float(np.sum(np.abs(d)))

    def l2(self, mask=None):
        d = self.data if mask is None else self.data[mask]
        return float(np.linalg.norm(d))

    def energy_by_band(self):
        return np.array([np.sum(np.abs(self.data[self.frame.band_slice(b)]) ** 2)
                         for b in range(len(self.frame.subbands))])

    def to_bytes(self):
        return serialize_coefficients(self)


# -- serialization ------------------------------------------------------
_BLOCK = struct.Struct("<8siciiiIII")


def serialize_coefficients(coeffs):
    fr = coeffs.frame
    parts = []
    for b, sb in enumerate(fr.subbands):
        band = tuple(sb.band) + (0, 0)
        head = _BLOCK.pack(sb.kind.encode()[:8], sb.j, (sb.cone or "-").encode(), sb.l,
                           band[0], band[1], fr.n, sb.shape[0], sb.shape[1])
        parts.append(head + coeffs.band(b).astype("<c16").tobytes())
    return b"".join(parts)


def deserialize_coefficients(frame, buf):
    data = np.empty(frame.size, dtype=complex)
    off = 0
    for b, sb in enumerate(frame.subbands):
        kind, j, cone, l, b0, b1, n, a1, a2 = _BLOCK.unpack_from(buf, off)
        off += _BLOCK.size
        if (kind.rstrip(b"\0").decode(), j, l, n, (a1, a2)) != (sb.kind, sb.j, sb.l, frame.n, sb.shape):
            raise FrameError(f"block {b} header does not match the frame")
        cnt = a1 * a2
        data[frame.band_slice(b)] = np.frombuffer(buf, dtype="<c16", count=cnt, offset=off)
        off += 16 * cnt
    if off != len(buf):
        raise FrameError("trailing bytes after last block")
    return CoefficientSet(frame, data)


# -- builders -----------------------------------------------------------
def _check_jmax(grid, j_max):
    top = windows.max_scale(grid.n)
    if j_max is None:
        return top
    if j_max < 0 or 2.0 ** (2 * j_max - 1) > grid.n / 2:
        raise FrameError(f"j_max={j_max} too large for n={grid.n} (limit {top})")
    return j_max


def _sparse(full):
    flat = np.flatnonzero(full)
    return flat, full.ravel()[flat]


def _renormalize(parts, size):
    """Divide sparse profiles (flat index, value) pointwise by sqrt(sum of squares)."""
    total = np.zeros(size)
    for flat, v in parts:
        total += np.bincount(flat, v * v, minlength=size)
    scale = np.where(total > 0, 1.0 / np.sqrt(np.where(total > 0, total, 1.0)), 0.0)
    return [(flat, v * scale[flat]) for flat, v in parts]


def _assemble(kind, grid, subbands, parts, params):
    boxes = [box_from_support(flat, v, grid.n) for flat, v in parts]
    return FrameFamily(kind, grid.n, list(subbands), [b for b, _ in boxes], [g for _, g in boxes], params)


def radial_windows(grid, j_max):
    """Full-grid Theta and W_0..W_jmax plus a residual band j_max + 1.

    Scales up to j_max are complete coronas.  The residual holds every
    frequency above them; for the default j_max it coincides with the corona
    W_{j_max+1} cut off at the Nyquist frequency.
    """
    x1, x2 = grid.frequencies()
    low = windows.theta_hat(x1.astype(float), x2.astype(float))
    bands = [windows.corona(j, x1, x2) for j in range(j_max + 1)]
    bands.append(windows.corona_top(j_max + 1, x1, x2))
    return low, bands


def build_wavelet_frame(grid, j_max=None, lowpass=True):
    """Radial band-pass wavelets on the dyadic-squared lattices, plus low-pass."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    j_max = _check_jmax(grid, j_max)
    low, bands = radial_windows(grid, j_max)
    subbands = [Subband("wavelet", j=j) for j in range(j_max + 2)]
    parts = [_sparse(w) for w in bands]
    if lowpass:
        subbands.insert(0, Subband("lowpass"))
        parts.insert(0, _sparse(low))
        parts = _renormalize(parts, grid.n**2)
    return _assemble("wavelet", grid, subbands, parts, {"j_max": j_max, "lowpass": lowpass})


def build_shearlet_frame(grid, j_max=None, lowpass=True):
    """Cone-adapted band-limited shearlets with shears |l| <= 2^j in both cones."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    j_max = _check_jmax(grid, j_max)
    x1, x2 = grid.frequencies()
    low, bands = radial_windows(grid, j_max)
    subbands, parts = [], []
    if lowpass:
        subbands.append(Subband("lowpass"))
        parts.append(_sparse(low))
    x1, x2 = x1.ravel(), x2.ravel()
    for j, W in enumerate(bands):
        sup, w = _sparse(W)  # cone windows are only evaluated on the corona support
        a1, a2 = x1[sup], x2[sup]
        for cone, r in (("h", windows.ratio(a2, a1)), ("v", windows.ratio(a1, a2))):
            u = 2.0**j * r
            for l in range(-(2**j), 2**j + 1):
                subbands.append(Subband("shearlet", j=j, cone=cone, l=l))
                hit = np.abs(u - l) < 1
                parts.append((sup[hit], w[hit] * windows.bump(u[hit] - l)))
    parts = _renormalize(parts, grid.n**2)
    return _assemble("shearlet", grid, subbands, parts, {"j_max": j_max, "lowpass": lowpass})


def gabor_band_centers(n, unit):
    half = n // (2 * unit)
    r = np.arange(-half, half)
    return [(int(a), int(b)) for a in r for b in r]


def build_gabor_frame(grid, active_bands=None, unit=1, window="meyer"):
    """Gabor system with frequency unit ``unit`` DFT indices.

    Band (n1, n2) has profile g((xi - unit*n)/unit) on a 2*unit box, and its
    2*unit x 2*unit modulation lattice sits at pixel spacing n/(2*unit), the
    half-unit translation lattice.  All bands together form a Parseval frame.
    """
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    n = grid.n
    if unit < 1 or unit & (unit - 1) or 2 * unit > n:
        raise FrameError(f"Gabor unit must be a power of two with 2*unit <= n, got {unit}")
    allbands = gabor_band_centers(n, unit)
    if active_bands is None:
        bands = allbands
    else:
        valid = set(allbands)
        bands = sorted({tuple(int(v) for v in b) for b in active_bands})
        bad = [b for b in bands if b not in valid]
        if bad:
            raise FrameError(f"Gabor bands outside lattice: {bad[:5]}")
    a = 2 * unit
    u = np.arange(a)
    w = windows.gabor_window((u - unit) / unit, window)  # the same offsets for every band
    B = np.array(bands, dtype=np.int64).reshape(-1, 2)
    ix, pv = [], []
    for d in (0, 1):
        freqs = unit * B[:, d, None] - unit + u[None, :]
        rows = np.arange(len(B))[:, None]
        slot = np.mod(freqs, a)
        i = np.empty_like(freqs)
        v = np.empty(freqs.shape)
        i[rows, slot] = np.mod(freqs, n)
        v[rows, slot] = np.broadcast_to(w, freqs.shape)
        ix.append(i)
        pv.append(v)
    P = pv[0][:, :, None] * pv[1][:, None, :]
    Gt = ix[0][:, :, None] * n + ix[1][:, None, :]
    subbands = [Subband("gabor", band=b) for b in bands]
    profiles, gathers = list(P), list(Gt)
    return FrameFamily("gabor", n, subbands, profiles, gathers,
                       {"unit": unit, "window": window, "active": active_bands is not None})


def custom_frame(profiles, kind="custom"):
    """Full-translation filter bank from explicit (n, n) profiles (any n)."""
    profiles = [np.asarray(p, dtype=float) for p in profiles]
    n = profiles[0].shape[0]
    gather = np.arange(n * n).reshape(n, n)
    return FrameFamily(kind, n, [Subband("custom", l=i) for i in range(len(profiles))],
                       profiles, [gather] * len(profiles), {})


def gabor_scale_membership(frame, j, grid_windows=None):
    """Gabor subbands whose center frequency lies in supp W_j."""
    n = frame.n
    unit = frame.params["unit"]
    j_max = windows.max_scale(n)
    if grid_windows is None:
        grid_windows = radial_windows(FrequencyGrid(n), j_max)[1]
    W = grid_windows[j]
    out = []
    for b, sb in enumerate(frame.subbands):
        c1, c2 = (unit * sb.band[0]) % n, (unit * sb.band[1]) % n
        if W[c1, c2] > 0:
            out.append(b)
    return out


def frame_bounds_estimate(frame, iters=50, seed=0):
    """Power-iteration estimates (A, B) of the frame operator S = Phi Phi*."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    n = frame.n

    def S(x):
        return frame.synthesize(frame.analyze(x).data)

    def top(op, x):
        lam = 0.0
        for _ in range(iters):
            y = op(x)
            nrm = np.linalg.norm(y)
            if nrm == 0:
                return 0.0
            lam = float(np.real(np.vdot(x, y)))
            x = y / nrm
        return lam

    x0 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x0 /= np.linalg.norm(x0)
    B = top(S, x0)
    shift = 1.01 * B
    A = shift - top(lambda x: shift * x - S(x), x0)
    return A, B
