"""Compiled inner loops for the lattice-path partition functions.

All kernels keep linear-space values with a separate log scale, so sums
over paths never leave floating-point range.  Directions are encoded as
0 = right, 1 = up, 2 = down.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf
RESCALE_EVERY = 8


@njit(cache=True)
def _reach(i, x, n_right, n_steps, Y):
    # largest |y| that is reachable after i steps with x right steps and
    # can still end at (n_right, 0) within n_steps; -1 if none
    return min(i - x, n_steps - i - (n_right - x), Y - 1)


@njit(cache=True, nogil=True)
def interface_logz(logw, n_right, n_steps):
    """log Z of paths ending at (n_right, 0) after every step count.

    ``logw[i]`` is the log-weight of step i+1 when that step lies in the
    lower half-plane (both endpoints at height <= 0).  Steps above the
    interface have weight 1.  Returns an array of length n_steps+1.
    """
    Y = n_steps // 2 + 1
    H = 2 * Y + 1
    cur = np.zeros((3, n_right + 1, H))
    nxt = np.zeros((3, n_right + 1, H))
    scale = np.full(n_right + 1, NEG_INF)
    new_scale = np.full(n_right + 1, NEG_INF)
    cur[0, 0, Y] = 1.0
    scale[0] = 0.0
    out = np.full(n_steps + 1, NEG_INF)
    if n_right == 0:
        out[0] = 0.0
    for i in range(n_steps):
        w = np.exp(logw[i])
        xtop = min(i, n_right)
        xnew = min(i + 1, n_right)
        for x in range(xnew + 1):
            s_same = scale[x] if x <= xtop else NEG_INF
            s_left = scale[x - 1] if x >= 1 and x - 1 <= xtop else NEG_INF
            new_scale[x] = max(s_same, s_left)
        for x in range(xtop + 1):
            if scale[x] == NEG_INF:
                continue
            f_same = np.exp(scale[x] - new_scale[x])
            f_right = 0.0
            lim_r = -1
            if x < n_right:
                f_right = np.exp(scale[x] - new_scale[x + 1])
                lim_r = _reach(i + 1, x + 1, n_right, n_steps, Y)
            lim_v = _reach(i + 1, x, n_right, n_steps, Y)
            lim = _reach(i, x, n_right, n_steps, Y)
            if lim < 0:
                continue
            lo = -lim
            if (x + lo - i) % 2 != 0:
                lo += 1
            for y in range(lo, lim + 1, 2):
                k = y + Y
                r = cur[0, x, k]
                u = cur[1, x, k]
                dn = cur[2, x, k]
                if r == 0.0 and u == 0.0 and dn == 0.0:
                    continue
                # every entry read here is zeroed, so the buffer comes back
                # clean when it is reused two steps later
                cur[0, x, k] = 0.0
                cur[1, x, k] = 0.0
                cur[2, x, k] = 0.0
                if -lim_r <= y <= lim_r:
                    wt = w if y <= 0 else 1.0
                    nxt[0, x + 1, k] += (r + u + dn) * wt * f_right
                if y + 1 <= lim_v:
                    wt = w if y + 1 <= 0 else 1.0
                    nxt[1, x, k + 1] += (r + u) * wt * f_same
                if y - 1 >= -lim_v:
                    wt = w if y <= 0 else 1.0
                    nxt[2, x, k - 1] += (r + dn) * wt * f_same
        # one step multiplies values by at most 3 * exp(|logw|), so
        # rescaling every RESCALE_EVERY steps keeps them in range
        if (i + 1) % RESCALE_EVERY == 0 or i + 1 == n_steps:
            for x in range(xnew + 1):
                lim = _reach(i + 1, x, n_right, n_steps, Y)
                m = 0.0
                for d in range(3):
                    for k in range(Y - lim, Y + lim + 1):
                        if nxt[d, x, k] > m:
                            m = nxt[d, x, k]
                if m > 0.0:
                    inv = 1.0 / m
                    for d in range(3):
                        for k in range(Y - lim, Y + lim + 1):
                            nxt[d, x, k] *= inv
                    new_scale[x] += np.log(m)
                else:
                    new_scale[x] = NEG_INF
        cur, nxt = nxt, cur
        for x in range(xnew + 1):
            scale[x] = new_scale[x]
        if xnew == n_right and scale[n_right] != NEG_INF:
            tot = cur[0, n_right, Y] + cur[1, n_right, Y] + cur[2, n_right, Y]
            if tot > 0.0:
                out[i + 1] = np.log(tot) + scale[n_right]
    return out


@njit(cache=True)
def best_block_path(is_b, weights, n_moves):
    """Best total weight of a coarse path of ``n_moves`` block crossings.

    ``is_b[i, j]`` marks B blocks on an M x M torus; vertex (i, j) sits
    below block (i, j) and above block (i, j - 1).  An up move from
    (i, j) crosses block (i, j) next to (i, j - 1); a down move crosses
    (i, j - 1) next to (i, j).  The pair index is 2 * crossed_is_B +
    neighbour_is_B.  Returns (total, pair counts of the best path); ties
    prefer the up move and the lowest final height.
    """
    M = is_b.shape[0]
    V = np.zeros(M)
    C = np.zeros((M, 4), np.int64)
    Vn = np.empty(M)
    Cn = np.empty((M, 4), np.int64)
    for t in range(n_moves):
        i = t % M
        for j in range(M):
            jb = (j - 1) % M
            pu = 2 * is_b[i, jb] + is_b[i, (j - 2) % M]
            cand_up = V[jb] + weights[pu]
            ja = (j + 1) % M
            pd = 2 * is_b[i, j] + is_b[i, ja]
            cand_dn = V[ja] + weights[pd]
            if cand_up >= cand_dn:
                Vn[j] = cand_up
                for q in range(4):
                    Cn[j, q] = C[jb, q]
                Cn[j, pu] += 1
            else:
                Vn[j] = cand_dn
                for q in range(4):
                    Cn[j, q] = C[ja, q]
                Cn[j, pd] += 1
        V, Vn = Vn, V
        C, Cn = Cn, C
    best = 0
    for j in range(1, M):
        if V[j] > V[best]:
            best = j
    return V[best], C[best].copy()


@njit(cache=True)
def crossing_logz(energy, t0, upper_b, lower_b, L, ell_max, tail_at=-1):
    """Weighted path counts inside one block pair, started at step t0.

    Relative coordinates: the path enters at (0, 0), heights lie in
    [-L, L], horizontal steps need height in (-L, L], vertical steps are
    barred on the entry line x = 0.  A step belongs to the upper block
    when its midpoint height is > 0.  Steps in a B block get weight
    exp(-energy[t0 + s]).  The exit corners (L, L) and (L, -L) absorb.

    Returns log masses per step count: arrival at (L, L), arrival at
    (L, -L), and all other states (unfinished pair visits).  With
    ``tail_at >= 0`` the last one is only filled at that step count.
    """
    H = 2 * L + 1
    cur = np.zeros((3, L + 1, H))
    nxt = np.zeros((3, L + 1, H))
    cur[0, 0, L] = 1.0
    scale = 0.0
    up_out = np.full(ell_max + 1, NEG_INF)
    dn_out = np.full(ell_max + 1, NEG_INF)
    tail = np.full(ell_max + 1, NEG_INF)
    tail[0] = 0.0
    # rescale often enough that 3 * max weight per step cannot overflow
    big = 0.0
    for s in range(ell_max):
        if abs(energy[t0 + s]) > big:
            big = abs(energy[t0 + s])
    every = int(300.0 / (big + np.log(3.0) + 1.0))
    if every < 1:
        every = 1
    if every > 16:
        every = 16
    for s in range(ell_max):
        e = energy[t0 + s]
        w_hi = np.exp(-e) if upper_b else 1.0
        w_lo = np.exp(-e) if lower_b else 1.0
        xmax = min(s, L)
        nxt[:, : min(s + 1, L) + 1, :] = 0.0
        for x in range(xmax + 1):
            for k in range(H):
                r = cur[0, x, k]
                u = cur[1, x, k]
                d = cur[2, x, k]
                if r == 0.0 and u == 0.0 and d == 0.0:
                    continue
                y = k - L
                if x < L and y > -L:
                    nxt[0, x + 1, k] += (r + u + d) * (w_hi if y > 0 else w_lo)
                if x >= 1:
                    if y + 1 <= L:
                        nxt[1, x, k + 1] += (r + u) * (w_hi if y >= 0 else w_lo)
                    if y - 1 >= -L:
                        nxt[2, x, k - 1] += (r + d) * (w_hi if y >= 1 else w_lo)
        up = nxt[0, L, H - 1] + nxt[1, L, H - 1] + nxt[2, L, H - 1]
        dn = nxt[0, L, 0] + nxt[1, L, 0] + nxt[2, L, 0]
        for q in range(3):
            nxt[q, L, H - 1] = 0.0
            nxt[q, L, 0] = 0.0
        if up > 0.0:
            up_out[s + 1] = np.log(up) + scale
        if dn > 0.0:
            dn_out[s + 1] = np.log(dn) + scale
        want_tail = tail_at < 0 or s + 1 == tail_at
        if want_tail or (s + 1) % every == 0:
            tot = 0.0
            m = 0.0
            for q in range(3):
                for x in range(min(s + 1, L) + 1):
                    for k in range(H):
                        v = nxt[q, x, k]
                        tot += v
                        if v > m:
                            m = v
            if want_tail and tot > 0.0:
                tail[s + 1] = np.log(tot) + scale
            if m > 0.0:
                nxt /= m
                scale += np.log(m)
        cur, nxt = nxt, cur
    return up_out, dn_out, tail


@njit(cache=True)
def emulsion_logz(up_log, dn_log, tail_log, pattern, n, L, ell_max):
    """log Z of the block-crossing path model from per-visit log masses.

    ``up_log[t // 2, q, ell]`` etc. are the crossing_logz outputs for a
    pair visit starting at (even) step t with B-pattern q = 2 * upper_B +
    lower_B; ``pattern[c, j + cmax]`` is that pattern at the corner in
    column c, height j (block units).  Corner masses are pulled per step
    count t, each slice with its own log scale, and only the last
    ell_max / 2 + 1 slices are kept.  Slices within ell_max of n are
    closed on the fly with an unfinished pair visit.
    """
    cmax = pattern.shape[0] - 1
    W = 2 * cmax + 1
    nt = n // 2 + 1
    R = ell_max // 2 + 1
    S = np.zeros((R, cmax + 1, W))
    scale = np.full(R, NEG_INF)
    S[0, 0, cmax] = 1.0
    scale[0] = 0.0
    fac_up = np.zeros(4)
    fac_dn = np.zeros(4)
    total = NEG_INF
    for ti in range(nt):
        t = 2 * ti
        slot = ti % R
        if ti > 0:
            S[slot] = 0.0
            scale[slot] = NEG_INF
            ref = NEG_INF
            for ell in range(2 * L, min(ell_max, t) + 1, 2):
                tp = (t - ell) // 2
                sp = scale[tp % R]
                if sp == NEG_INF:
                    continue
                for q in range(4):
                    a = sp + up_log[tp, q, ell]
                    b = sp + dn_log[tp, q, ell]
                    if a > ref:
                        ref = a
                    if b > ref:
                        ref = b
            if ref > NEG_INF:
                for ell in range(2 * L, min(ell_max, t) + 1, 2):
                    tp = (t - ell) // 2
                    sp = scale[tp % R]
                    if sp == NEG_INF:
                        continue
                    for q in range(4):
                        fac_up[q] = np.exp(sp + up_log[tp, q, ell] - ref)
                        fac_dn[q] = np.exp(sp + dn_log[tp, q, ell] - ref)
                    src = tp % R
                    for c in range(min(cmax, tp // L + 1)):
                        for jj in range(cmax - c, cmax + c + 1, 2):
                            v = S[src, c, jj]
                            if v == 0.0:
                                continue
                            q = pattern[c, jj]
                            S[slot, c + 1, jj + 1] += v * fac_up[q]
                            S[slot, c + 1, jj - 1] += v * fac_dn[q]
                m = 0.0
                for c in range(cmax + 1):
                    for jj in range(W):
                        if S[slot, c, jj] > m:
                            m = S[slot, c, jj]
                if m > 0.0:
                    S[slot] /= m
                    scale[slot] = ref + np.log(m)
        # close with an unfinished (possibly empty) pair visit
        rest = n - t
        if rest > ell_max or scale[slot] == NEG_INF:
            continue
        for c in range(cmax + 1):
            for jj in range(W):
                v = S[slot, c, jj]
                if v == 0.0:
                    continue
                val = np.log(v) + scale[slot] + tail_log[ti, pattern[c, jj], rest]
                if val == NEG_INF:
                    continue
                if val > total:
                    total = val + np.log1p(np.exp(total - val))
                else:
                    total = total + np.log1p(np.exp(val - total))
    return total
