"""Path entropies of the three-step directed walk.

Paths use the steps up, down and right, with no immediate vertical
reversal.  Everything here is a function of one rate,

    R(v, h, s) = lim (1/L) log #{paths with sL right steps, vL vertical
                                 steps and net vertical displacement hL},

which is solved in closed form by a saddle point (see ``path_rate``).  The
exact counting DPs ``count_block_paths`` and ``count_interface_paths`` are
the independent check on it.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

LOG2 = math.log(2.0)

# states of a counting DP larger than this raise ResourceError
MAX_DP_STATES = 50_000_000


class DomainError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def kappa_diag(a):
    """Entropy per step of paths crossing a block along its diagonal."""
    arr = np.asarray(a, dtype=float)
    if np.any(arr < 2) or not np.all(np.isfinite(arr)):
        raise DomainError(f"kappa_diag needs a >= 2, got {a}")
    val = (LOG2 + 0.5 * (_xlogx(arr) - _xlogx(arr - 2.0))) / arr
    return float(val) if np.ndim(val) == 0 else val


def kappa_diag_derivatives(a):
    """Partial derivatives of kappa(a, b) in a and in b, at b = 1.

    Returns ``(d_a, d_b)``.
    """
    arr = np.asarray(a, dtype=float)
    if np.any(arr <= 2):
        raise DomainError(f"derivatives need a > 2, got {a}")
    d_a = -(LOG2 + np.log(arr - 2.0)) / arr**2
    d_b = np.log(4.0 * (arr - 2.0) * (arr - 1.0) ** 2 / arr) / (2.0 * arr)
    if np.ndim(d_a) == 0:
        return float(d_a), float(d_b)
    return d_a, d_b


def entropy_G(mu, a):
    """Comparison function for short excursions from a block diagonal.

    Equals kappa(a,1) + a d_a kappa(a,1) + (a/mu) d_b kappa(a,1).
    """
    mu = np.asarray(mu, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(mu < 1):
        raise DomainError("entropy_G needs mu >= 1")
    if np.any(a < 2):
        raise DomainError("entropy_G needs a >= 2")
    with np.errstate(divide="ignore", invalid="ignore"):
        first = 0.5 * ((mu - 1.0) / mu) * (np.log(a) - np.log(a - 2.0))
    first = np.where(mu == 1.0, 0.0, first)
    val = first + np.log(2.0 * (a - 1.0)) / mu
    return float(val) if np.ndim(val) == 0 else val


def _path_rate_scalar(v, h, s):
    if v < abs(h) - 1e-12 or s < 0:
        raise DomainError("path_rate needs v >= |h| and s >= 0")
    up = max((v + h) / 2.0, 0.0)
    dn = max((v - h) / 2.0, 0.0)
    up, dn = max(up, dn), min(up, dn)
    if s == 0 or up == 0:
        return 0.0
    K = up * dn
    root = s * math.sqrt(4.0 * K + s * s)
    den = 2.0 * K + s * s + root
    q = 2.0 * K / den
    one_q = (s * s + root) / den
    u = (up * one_q + s * q) / (s + up * one_q)
    one_u = s * one_q / (s + up * one_q)
    one_w = up * one_q**2 / (up * one_q + s * q)
    val = s * (math.log(one_q) - math.log(one_u) - math.log(one_w)) - up * math.log(u)
    if dn > 0:
        val -= dn * math.log(q / u)
    return val


def path_rate(v, h, s):
    """Exponential growth rate R(v, h, s) per unit length, vectorized.

    ``s`` right steps split the path into about ``s`` vertical runs, each
    all-up or all-down.  With fugacities u (up) and w (down) one run has
    generating function (1 - uw) / ((1 - u)(1 - w)), and

        R = inf_{u,w} s log F(u,w) - U log u - D log w,

    U = (v+h)/2, D = (v-h)/2.  The two stationarity equations reduce to a
    quadratic in q = uw, solved below in cancellation-free form.
    Requires v >= |h|; s = 0 gives the continuous extension 0.
    """
    if np.ndim(v) == 0 and np.ndim(h) == 0 and np.ndim(s) == 0:
        return _path_rate_scalar(float(v), float(h), float(s))
    v, h, s = np.broadcast_arrays(
        np.asarray(v, dtype=float), np.asarray(h, dtype=float), np.asarray(s, dtype=float)
    )
    if np.any(v < np.abs(h) - 1e-12) or np.any(s < 0):
        raise DomainError("path_rate needs v >= |h| and s >= 0")
    up = np.maximum((v + h) / 2.0, 0.0)
    dn = np.maximum((v - h) / 2.0, 0.0)
    # orient so that up >= dn; the rate is symmetric in h
    up, dn = np.maximum(up, dn), np.minimum(up, dn)
    out = np.zeros(v.shape)
    live = (s > 0) & (up > 0)
    if np.any(live):
        U, D, S = up[live], dn[live], s[live]
        K = U * D
        root = S * np.sqrt(4.0 * K + S * S)
        den = 2.0 * K + S * S + root
        q = 2.0 * K / den
        one_q = (S * S + root) / den
        u = (U * one_q + S * q) / (S + U * one_q)
        one_u = S * one_q / (S + U * one_q)
        one_w = U * one_q**2 / (U * one_q + S * q)
        val = S * (np.log(one_q) - np.log(one_u) - np.log(one_w)) - U * np.log(u)
        haveD = D > 0
        w = np.where(haveD, q / np.where(u > 0, u, 1.0), 1.0)
        val = val - np.where(haveD, D * np.log(np.where(haveD, w, 1.0)), 0.0)
        out[live] = val
    return float(out) if out.ndim == 0 else out


def kappa_block(a, b):
    """Entropy per step of aL-step paths from (0,0) to (bL, L)."""
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        a, b = float(a), float(b)
        if b < 0 or a < 1 + b - 1e-12:
            raise DomainError(f"(a, b) = ({a}, {b}) outside a >= 1 + b, b >= 0")
        return _path_rate_scalar(max(a - b, 1.0), 1.0, b) / a
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < 0) or np.any(a_arr < 1 + b_arr - 1e-12):
        raise DomainError(f"(a, b) = ({a}, {b}) outside a >= 1 + b, b >= 0")
    val = path_rate(np.maximum(a_arr - b_arr, 1.0), 1.0, b_arr) / a_arr
    return float(val) if np.ndim(val) == 0 else val


def kappa_block_grad(a, b):
    """Gradient (d/da, d/db) of kappa_block, from the saddle point."""
    a = float(a)
    b = float(b)
    if b <= 0 or a <= 1 + b:
        raise DomainError("gradient needs an interior point")
    # envelope theorem: dR/dv = -log(q)/2, dR/ds = log F
    eps = 1e-6
    rate = path_rate(a - b, 1.0, b)
    dv = (path_rate(a - b + eps, 1.0, b) - path_rate(a - b - eps, 1.0, b)) / (2 * eps)
    ds = (path_rate(a - b, 1.0, b + eps) - path_rate(a - b, 1.0, b - eps)) / (2 * eps)
    d_a = dv / a - rate / a**2
    d_b = (ds - dv) / a
    return d_a, d_b


def hat_kappa(mu):
    """Entropy per step of paths that return to their starting height.

    ``mu`` is steps per unit of horizontal displacement.
    """
    if np.ndim(mu) == 0:
        mu = float(mu)
        if mu < 1:
            raise DomainError(f"hat_kappa needs mu >= 1, got {mu}")
        if mu > 1e12:
            return (math.log(mu / 2.0) + 2 * LOG2 + 1.0) / mu
        return _path_rate_scalar(mu - 1.0, 0.0, 1.0) / mu
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 1):
        raise DomainError(f"hat_kappa needs mu >= 1, got {mu}")
    big = mu_arr > 1e12
    val = np.where(big, 0.0, path_rate(np.where(big, 0.0, mu_arr - 1.0), 0.0, 1.0) / mu_arr)
    if np.any(big):
        # asymptotic form of the saddle point for very long runs
        m = mu_arr / 2.0
        val = np.where(big, (np.log(m) + 2 * LOG2 + 1.0) / mu_arr, val)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# exact counting


def _as_steps(L, frac, name):
    n = Fraction(frac).limit_denominator(10_000) * L
    if n.denominator != 1:
        raise DomainError(f"{name}*L = {n} is not an integer")
    return int(n)


def _count_paths(n_steps, n_right, target, y_min, y_max):
    """Number of no-reversal paths with given step and right-step counts.

    Heights are confined to [y_min, y_max].  Plain Python ints, so exact.
    """
    if n_steps < 0 or n_right < 0:
        return 0
    height = y_max - y_min + 1
    if (n_steps + 1) * (n_right + 1) * height * 3 > MAX_DP_STATES:
        raise ResourceError(
            f"counting DP needs {(n_steps + 1) * (n_right + 1) * height * 3} states"
        )
    # layer[d][x][y]: last step d in (right, up, down)
    zero = lambda: [[0] * height for _ in range(n_right + 1)]
    cur = [zero(), zero(), zero()]
    cur[0][0][-y_min] = 1
    for _ in range(n_steps):
        nxt = [zero(), zero(), zero()]
        for x in range(n_right + 1):
            r_row, u_row, d_row = cur[0][x], cur[1][x], cur[2][x]
            for iy in range(height):
                tot_ru = r_row[iy] + u_row[iy]
                tot_rd = r_row[iy] + d_row[iy]
                if x < n_right:
                    val = tot_ru + d_row[iy]
                    if val:
                        nxt[0][x + 1][iy] += val
                if tot_ru and iy + 1 < height:
                    nxt[1][x][iy + 1] += tot_ru
                if tot_rd and iy >= 1:
                    nxt[2][x][iy - 1] += tot_rd
        cur = nxt
    iy = target - y_min
    if not 0 <= iy < height:
        return 0
    return cur[0][n_right][iy] + cur[1][n_right][iy] + cur[2][n_right][iy]


def count_block_paths(L, a, b):
    """Exact number of aL-step paths from (0,0) to (bL, L).

    Heights stay in (-L, L].
    """
    if L < 1:
        raise DomainError("L must be positive")
    n = _as_steps(L, a, "a")
    nb = _as_steps(L, b, "b")
    if nb < 0:
        raise DomainError("b must be nonnegative")
    return _count_paths(n, nb, L, -L + 1, L)


def count_interface_paths(L, c, b):
    """Exact number of cL-step paths from (0,0) to (bL, 0), unconfined."""
    if L < 1:
        raise DomainError("L must be positive")
    n = _as_steps(L, c, "c")
    nb = _as_steps(L, b, "b")
    if nb < 0 or n < nb:
        raise DomainError("need c >= b >= 0")
    half = (n - nb) // 2 + 1
    return _count_paths(n, nb, 0, -half, half)


def extrapolate_rate(Ls, values):
    """Least-squares fit of values = k + c1 log(L)/L + c2/L; returns k."""
    Ls = np.asarray(Ls, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(Ls) < 3:
        raise ValueError("need at least three sizes")
    design = np.column_stack([np.ones_like(Ls), np.log(Ls) / Ls, 1.0 / Ls])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(coef[0])
