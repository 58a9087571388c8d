"""Clusters, relative sparsity, cluster coherence, joint-concentration bounds
and recovery-error certificates.

Cluster radii are stated on the continuum lattices and mapped to pixels with
one continuum length unit = n pixels: a lattice radius 2^{eps j'} at spacing
2^{-2j'} becomes a pixel radius n 2^{(eps - 2) j'}.
"""

from __future__ import annotations

import csv
import io as _io
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from . import windows
from .frames import gabor_scale_membership
from .grid import apply_mask
from .phantoms import band_scale_members, neighborhood


class DiagnosticsError(ValueError):
    pass


@dataclass(eq=False)
class ClusterSet:
    frame: object
    mask: np.ndarray  # boolean over the frame's flat coefficient index
    j: int
    variant: str

    def __len__(self):
        return int(self.mask.sum())

    def members(self):
        return [self.frame.atom_at(int(i)) for i in np.flatnonzero(self.mask)]

    def union(self, other):
        if other.frame is not self.frame:
            raise DiagnosticsError("clusters live on different frames")
        return ClusterSet(self.frame, self.mask | other.mask, self.j, self.variant)


def _scales(j, pm, frame):
    top = frame.params.get("j_max", j) + 1  # the residual band counts as scale j_max + 1
    return [s for s in ((j - 1, j, j + 1) if pm else (j,)) if 0 <= s <= top]


def _periodic(d, n):
    return np.abs((d + n / 2) % n - n / 2)


def continuum_lattice_count(eps, j):
    """Number of p in Z^2 with |p| <= 2^{eps j} (one scale of the wavelet cluster)."""
    r = 2.0 ** (eps * j)
    k = int(np.floor(r))
    p = np.arange(-k, k + 1)
    return int(np.sum(p[:, None] ** 2 + p[None, :] ** 2 <= r * r + 1e-12))


def cluster_wavelet(frame, j, eps, points, pm=True):
    """Wavelet atoms within pixel distance n 2^{(eps-2) j'} of some point, j' in {j-1, j, j+1}."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DiagnosticsError("empty point cloud")
    n = frame.n
    mask = np.zeros(frame.size, dtype=bool)
    for jj in _scales(j, pm, frame):
        r = n * 2.0 ** ((eps - 2) * jj)
        for b in frame.bands_where(lambda sb: sb.kind == "wavelet" and sb.j == jj):
            xy = frame.positions(b).reshape(-1, 2)
            hit = np.zeros(len(xy), dtype=bool)
            for p in pts:
                d1 = _periodic(xy[:, 0] - p[0], n)
                d2 = _periodic(xy[:, 1] - p[1], n)
                hit |= d1**2 + d2**2 <= r * r * (1 + 1e-12)
            mask[frame.band_slice(b)] = hit
    return ClusterSet(frame, mask, j, "wavelet±" if pm else "wavelet")


def cluster_shearlet(frame, j, eps, column=None, pm=True):
    """Vertical-cone shearlets with |l| <= 1 centred within n 2^{(eps-2) j'} of the line column."""
    n = frame.n
    c = n // 2 if column is None else column
    mask = np.zeros(frame.size, dtype=bool)
    for jj in _scales(j, pm, frame):
        r = n * 2.0 ** ((eps - 2) * jj)
        for b in frame.bands_where(lambda sb: sb.kind == "shearlet" and sb.j == jj
                                   and sb.cone == "v" and abs(sb.l) <= 1):
            x2 = frame.positions(b)[..., 1].ravel()
            mask[frame.band_slice(b)] = _periodic(x2 - c, n) <= r * (1 + 1e-12)
    return ClusterSet(frame, mask, j, "shearlet±" if pm else "shearlet")


def gabor_radius(eps, j):
    return 2.0 ** (eps * j / 6)


def cluster_gabor(frame, j, eps, bands, center=None, pm=True):
    """Modulations within M_j = 2^{eps j / 6} of the texture centre, bands in I_T^+- cap A_j'.

    Modulation m counts half Gabor units, i.e. the pixel offset of the
    coefficient divided by n / (2 unit).
    """
    n = frame.n
    s = frame.params["unit"]
    step = n // (2 * s)
    c = (n // 2, n // 2) if center is None else center
    top = windows.max_scale(n) + 1
    near = neighborhood(bands)
    chosen = set()
    for jj in ((j - 1, j, j + 1) if pm else (j,)):
        if 0 <= jj <= top:
            chosen |= band_scale_members(n, s, near, jj)
    M = gabor_radius(eps, j)
    mask = np.zeros(frame.size, dtype=bool)
    for b in frame.bands_where(lambda sb: sb.kind == "gabor" and sb.band in chosen):
        xy = frame.positions(b).reshape(-1, 2)
        m1 = ((xy[:, 0] - c[0]) / step + s) % (2 * s) - s
        m2 = ((xy[:, 1] - c[1]) / step + s) % (2 * s) - s
        mask[frame.band_slice(b)] = m1**2 + m2**2 <= M * M * (1 + 1e-12)
    return ClusterSet(frame, mask, j, "gabor±" if pm else "gabor")


def relative_sparsity(coeffs, cluster):
    """delta = ||1_{Lambda^c} Phi* f||_1."""
    if cluster.frame is not coeffs.frame:
        raise DiagnosticsError("cluster and coefficients belong to different frames")
    return float(np.sum(np.abs(coeffs.data[~cluster.mask])))


def _project(img, mask, projection):
    if projection in (None, "none"):
        return img
    if mask is None:
        raise DiagnosticsError("projection requested without a mask")
    return apply_mask(mask, img, "missing" if projection in ("missing", "M") else "known")


def cluster_sum(cluster, mask=None, projection=None):
    """proj(sum_{i in Lambda} phi_i): one synthesis of the cluster indicator."""
    s = cluster.frame.synthesize(cluster.mask.astype(complex))
    return _project(s, mask, projection)


def _band_mask(frame, bands):
    keep = np.zeros(frame.size, dtype=bool)
    for b in bands:
        keep[frame.band_slice(b)] = True
    return keep


def partner_bands(partner, j):
    """Bands of ``partner`` searched for the max: Gabor bands at scales j-1..j+1, else all."""
    if partner.kind != "gabor":
        return None
    top = windows.max_scale(partner.n) + 1
    out = set()
    for jj in (j - 1, j, j + 1):
        if 0 <= jj <= top:
            out.update(gabor_scale_membership(partner, jj))
    return sorted(out)


def cluster_coherence(cluster, partner, mask=None, projection=None, bands=None):
    """mu_c(Lambda, proj Phi_A; Phi_B) = max_j |<sum_{i in Lambda} proj phi_i, psi_j>|.

    ``bands`` restricts the max to those partner subbands (all when None).
    """
    if partner.n != cluster.frame.n:
        raise DiagnosticsError("frames live on different grids")
    if not cluster.mask.any():
        return 0.0
    s = cluster_sum(cluster, mask, projection)
    c = np.abs(partner.analyze(s).data)
    if bands is not None:
        c = c[_band_mask(partner, bands)]
    return float(c.max()) if c.size else 0.0


def cluster_coherence_outside(cluster, partner, mask=None, projection=None, bands=None):
    """Sum-outside variant max_j sum_{i in Lambda} |<proj phi_i, psi_j>| (brute force)."""
    fr = cluster.frame
    acc = np.zeros(partner.size)
    for i in np.flatnonzero(cluster.mask):
        acc += np.abs(partner.analyze(_project(fr.atom(int(i)), mask, projection)).data)
    if bands is not None:
        acc = acc[_band_mask(partner, bands)]
    return float(acc.max()) if acc.size else 0.0


@dataclass
class KappaBound:
    mu: float
    mu_sep: float
    mu_inp: float
    table: dict = field(default_factory=dict)


def kappa_upper_bound(frames, clusters, mask=None, no_missing=(), table=None):
    """mu_{c,N} = max_m [ mu_c(L_m, P_M Phi_m; Phi_m) + sum_{n != m} mu_c(L_n, P_K Phi_n; Phi_m) ].

    Parseval self-duals are used.  Components listed in ``no_missing`` have no
    missing part: their inpainting term is dropped and their separation terms
    are computed without projection.  ``table`` may supply precomputed
    coherences keyed (n, m, projection).
    """
    N = len(frames)
    if len(clusters) != N:
        raise DiagnosticsError("one cluster per frame is required")
    table = dict(table or {})

    def mu(n, m, proj):
        key = (n, m, proj)
        if key not in table:
            table[key] = cluster_coherence(clusters[n], frames[m], mask, proj)
        return table[key]

    has_mask = mask is not None and mask.missing_rows.any()
    inp, sep = [], []
    for m in range(N):
        inp.append(mu(m, m, "missing") if has_mask and m not in no_missing else 0.0)
        terms = []
        for n in range(N):
            if n == m:
                continue
            proj = "known" if has_mask and n not in no_missing else None
            terms.append(mu(n, m, proj))
        sep.append(sum(terms))
    total = [a + b for a, b in zip(inp, sep)]
    return KappaBound(max(total), max(sep), max(inp), table)


def concentration_quotient(frames, clusters, comps, mask):
    num = 0.0
    den = 0.0
    for fr, cl, f in zip(frames, clusters, comps):
        if mask is not None:
            num += np.sum(np.abs(fr.analyze(apply_mask(mask, f, "known")).data[cl.mask]))
            num += np.sum(np.abs(fr.analyze(apply_mask(mask, f, "missing")).data[cl.mask]))
        else:
            num += np.sum(np.abs(fr.analyze(f).data[cl.mask]))
        den += np.sum(np.abs(fr.analyze(f).data))
    return num / den if den > 0 else None


def kappa_sampled_lower_bound(frames, clusters, mask, trials=64, seed=None):
    """Largest joint-concentration quotient over random admissible tuples.

    Trial components are syntheses of heavy-tailed (Cauchy) coefficients; in
    half of the trials they are restricted to the clusters.  The sum is made
    to lie in the missing subspace by removing P_K(sum f) from f_1.
    """
    if seed is None:
        raise DiagnosticsError("a seed is required")
    if trials < 1:
        raise DiagnosticsError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    done = 0
    attempts = 0
    while done < trials:
        attempts += 1
        if attempts > 10 * trials:
            raise DiagnosticsError("could not draw non-degenerate trial tuples")
        on_cluster = done % 2 == 0
        comps = []
        for fr, cl in zip(frames, clusters):
            c = rng.standard_cauchy(fr.size) + 1j * rng.standard_cauchy(fr.size)
            if on_cluster:
                c = np.where(cl.mask, c, 0)
            comps.append(fr.synthesize(c))
        if mask is not None:
            comps[0] = comps[0] - apply_mask(mask, sum(comps), "known")
        q = concentration_quotient(frames, clusters, comps, mask)
        if q is None or not np.isfinite(q):
            continue
        best = max(best, float(q))
        done += 1
    return best


@dataclass
class Certificate:
    deltas: tuple
    mu: float
    mu_sep: float = float("nan")
    mu_inp: float = float("nan")
    noise: float = 0.0
    kappa_lo: float = float("nan")
    table: dict = field(default_factory=dict)

    @property
    def delta(self):
        return float(sum(self.deltas))

    @property
    def valid(self):
        return self.mu < 0.5

    @property
    def bound(self):
        if not self.valid:
            return float("nan")
        return (2 * self.delta + 2 * self.mu * self.noise) / (1 - 2 * self.mu)


def error_certificate(deltas, mu, noise=None, **extra):
    """Bound (2 delta + 2 mu eps) / (1 - 2 mu); invalid when mu >= 1/2."""
    deltas = tuple(float(d) for d in np.atleast_1d(deltas))
    if min(deltas) < 0 or mu < 0:
        raise DiagnosticsError("delta and mu must be non-negative")
    return Certificate(deltas, float(mu), noise=0.0 if noise is None else float(noise), **extra)


def cluster_abs_sum(cluster):
    """Image x -> sum_{i in Lambda} |phi_i(x)| via lattice convolution per band."""
    fr = cluster.frame
    n = fr.n
    total = np.zeros((n, n))
    for b in range(len(fr.subbands)):
        sel = cluster.mask[fr.band_slice(b)]
        if not sel.any():
            continue
        proto = np.zeros(fr.size, dtype=complex)
        proto[fr.offsets[b]] = 1.0
        a = np.abs(fr.synthesize(proto))
        pos = fr.positions(b).reshape(-1, 2)[sel]
        comb = np.zeros((n, n))
        np.add.at(comb, (pos[:, 0] % n, pos[:, 1] % n), 1.0)
        total += np.real(fft.ifft2(fft.fft2(a) * fft.fft2(comb)))
    return np.maximum(total, 0.0)


def check_lambda_condition(clusters, lam):
    """Worst ratio sum_m ||1_{L_m} Phi_m* z||_1 / ||z||_1 over delta probes at every pixel."""
    field_ = sum(cluster_abs_sum(cl) for cl in clusters)
    ratio = float(field_.max())
    where = np.unravel_index(int(np.argmax(field_)), field_.shape)
    return {"ratio": ratio, "lam": float(lam), "pass": ratio <= lam, "worst_pixel": tuple(int(v) for v in where)}


CSV_COLUMNS = ("j", "pair", "projection", "mu", "delta_1", "delta_2", "delta_3", "kappa_lo", "bound", "valid")


def certificate_rows(j, cert, names=("points", "line", "texture")):
    rows = []
    d = list(cert.deltas) + [float("nan")] * (3 - len(cert.deltas))
    base = dict(j=j, delta_1=d[0], delta_2=d[1], delta_3=d[2], kappa_lo=cert.kappa_lo,
                bound=cert.bound, valid=cert.valid)
    for (nn, m, proj), mu in sorted(cert.table.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))):
        rows.append(dict(base, pair=f"{names[nn]}->{names[m]}", projection=proj or "none", mu=mu))
    rows.append(dict(base, pair="mu_cN", projection="bound", mu=cert.mu))
    return rows


def rows_to_csv(rows, columns=CSV_COLUMNS):
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


DECAY_QUANTITIES = (
    "L1pm->shearlet", "L2pm->wavelet", "L3->shearlet", "L3->wavelet", "L1->gabor", "L2->gabor",
    "PM L3pm->shearlet", "PM L2pm->gabor", "PM L2pm->shearlet", "PM L3->gabor",
)


def default_clusters(frames, j, eps, points, texture_bands, pm=True):
    """Point, line and texture clusters on (wavelet, shearlet, Gabor) frames."""
    W, S, G = frames
    return (cluster_wavelet(W, j, eps, points, pm), cluster_shearlet(S, j, eps, pm=pm),
            cluster_gabor(G, j, eps, texture_bands, pm=pm))


def decay_suite(frames, j, eps, points, texture_bands, mask):
    """The ten cluster coherences whose decay in j the asymptotic theory predicts.

    A cluster always lives on its own frame; Gabor partners are searched over
    the Gabor bands at scales j-1..j+1.  Returns a dict keyed by DECAY_QUANTITIES.
    """
    W, S, G = frames
    L1p, L2p, L3p = default_clusters(frames, j, eps, points, texture_bands)
    L1, L2, L3 = default_clusters(frames, j, eps, points, texture_bands, pm=False)
    gb = partner_bands(G, j)
    vals = (
        cluster_coherence(L1p, S), cluster_coherence(L2p, W),
        cluster_coherence(L3, S), cluster_coherence(L3, W),
        cluster_coherence(L1, G, bands=gb), cluster_coherence(L2, G, bands=gb),
        cluster_coherence(L3p, S, mask, "missing"), cluster_coherence(L2p, G, mask, "missing", bands=gb),
        cluster_coherence(L2p, S, mask, "missing"), cluster_coherence(L3, G, mask, "missing", bands=gb),
    )
    return dict(zip(DECAY_QUANTITIES, vals))
