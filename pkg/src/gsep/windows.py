"""Smooth frequency windows: low-pass, corona, cone bump and Gabor windows.

All smooth transitions use the Meyer polynomial nu, which satisfies
nu(t) + nu(1 - t) = 1 and is C^3 at the junctions.
"""

from __future__ import annotations

import numpy as np


def meyer_nu(t):
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def xi_hat(u):
    """1 on [-1/16, 1/16], cosine transition, 0 outside [-1/8, 1/8]."""
    a = np.abs(np.asarray(u, dtype=float))
    out = np.cos(0.5 * np.pi * meyer_nu((a - 1 / 16) * 16))
    return np.where(a <= 1 / 16, 1.0, np.where(a >= 1 / 8, 0.0, out))


def theta_hat(x1, x2):
    return xi_hat(x1) * xi_hat(x2)


def corona(j, x1, x2):
    """W_j(xi) = sqrt(theta^2(xi / 4^(j+1)) - theta^2(xi / 4^j))."""
    s = 4.0**j
    outer = theta_hat(x1 / (4 * s), x2 / (4 * s)) ** 2
    inner = theta_hat(x1 / s, x2 / s) ** 2
    return np.sqrt(np.maximum(outer - inner, 0.0))


def corona_top(j, x1, x2):
    """Finest band that also absorbs every frequency above scale j."""
    s = 4.0**j
    return np.sqrt(np.maximum(1.0 - theta_hat(x1 / s, x2 / s) ** 2, 0.0))


def bump(u):
    """Cone bump upsilon, supported in [-1, 1]; shifted squares sum to 1."""
    u = np.asarray(u, dtype=float)
    left = np.sin(0.5 * np.pi * meyer_nu(1 + u))
    right = np.cos(0.5 * np.pi * meyer_nu(u))
    out = np.where(u <= 0, left, right)
    return np.where(np.abs(u) >= 1, 0.0, out)


def ratio(num, den):
    den = np.asarray(den, dtype=float)
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, np.inf, np.asarray(num, dtype=float) / safe)


def cone_h(j, l, x1, x2):
    """V_h(xi^T A_h^-j S_h^-l) = upsilon(2^j xi2 / xi1 - l); zero on xi1 = 0."""
    return bump(2.0**j * ratio(x2, x1) - l)


def cone_v(j, l, x1, x2):
    """V_v(xi^T A_v^-j S_v^-l) = upsilon(2^j xi1 / xi2 - l); zero on xi2 = 0."""
    return bump(2.0**j * ratio(x1, x2) - l)


def gabor_window(u, kind="meyer"):
    """1-D Gabor window profile on [-1, 1] with sum_n g(u + n)^2 = 1."""
    a = np.abs(np.asarray(u, dtype=float))
    if kind == "cosine":
        out = np.cos(0.5 * np.pi * a)
    elif kind == "meyer":
        out = np.cos(0.5 * np.pi * meyer_nu(a))
    else:
        raise ValueError(f"unknown Gabor window {kind!r}")
    return np.where(a >= 1, 0.0, out)


def max_scale(n):
    """Largest j with 2^(2j-1) <= n/2."""
    j = 0
    while 2.0 ** (2 * (j + 1) - 1) <= n / 2:
        j += 1
    return j
