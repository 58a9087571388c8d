"""Independent reference computations shared by the test modules."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from gsep.frames import custom_frame
from gsep.grid import StripMask, apply_mask


def _even(a):
    # symmetrize under k -> -k so that real images keep real coefficients
    return (a + np.roll(a[::-1, ::-1], 1, axis=(0, 1))) / 2


def toy_instance(seed, n=8, spikes=6):
    """Two random 2-band Parseval filter banks, a strip mask and a sparse observation."""
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(2):
        th = _even(rng.uniform(0, np.pi / 2, (n, n)))
        frames.append(custom_frame([np.cos(th), np.sin(th)]))
    mask = StripMask(n, int(rng.integers(0, 2)))
    f = np.zeros((n, n))
    f.flat[rng.choice(n * n, spikes, replace=False)] = rng.standard_normal(spikes)
    return frames, mask, apply_mask(mask, f)


def analysis_matrix(frame):
    n = frame.n
    eye = np.eye(n * n)
    return np.stack([frame.analyze(e.reshape(n, n)).data.real for e in eye], axis=1)


def lp_oracle(frames, mask, observed):
    """min sum_m ||A_m f_m||_1 s.t. P_K sum f_m = y as an LP in (f, t) with -t <= A f <= t."""
    n = mask.n
    npx = n * n
    A = [analysis_matrix(F) for F in frames]
    sizes = [a.shape[0] for a in A]
    nf = len(frames) * npx
    nv = nf + sum(sizes)
    cost = np.r_[np.zeros(nf), np.ones(sum(sizes))]
    rows = []
    off = nf
    for k, a in enumerate(A):
        for sign in (1, -1):
            R = np.zeros((sizes[k], nv))
            R[:, k * npx:(k + 1) * npx] = sign * a
            R[:, off:off + sizes[k]] = -np.eye(sizes[k])
            rows.append(R)
        off += sizes[k]
    known = np.flatnonzero(np.repeat(~mask.missing_rows, n))
    E = np.zeros((len(known), nv))
    for k in range(len(frames)):
        E[np.arange(len(known)), k * npx + known] = 1
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.zeros(len(rows) * 0 + sum(2 * s for s in sizes)),
                  A_eq=E, b_eq=np.asarray(observed).real.ravel()[known],
                  bounds=[(None, None)] * nf + [(0, None)] * sum(sizes), method="highs")
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)
