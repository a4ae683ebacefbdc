"""Exact partition functions of the finite emulsion model.

A path of n steps (right, up, down, no immediate reversal) starts at the
origin, a block corner.  It moves from corner to corner; between two
corners it stays inside the column of blocks it entered and inside the
two blocks above and below the entry corner, and it leaves at the first
visit of one of the two far corners.  Blocks are half-open squares
(iL, (i+1)L] x (jL, (j+1)L] and a step belongs to the block that
contains its midpoint.  Steps inside a B block carry the weight

    exp(-alpha)  for an A monomer,   exp(beta)  for a B monomer,

and steps in A blocks weight 1.  A block visit may use at most
``cap * L`` steps.

``finite_log_partition`` factorizes over block visits: one inner DP per
(start step, pattern of the two blocks) and one outer DP over corners.
``enumerate_log_partition`` and ``stepwise_log_partition`` sum over
paths step by step in global coordinates and serve as independent
checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import crossing_logz, emulsion_logz
from .entropy import DomainError, ResourceError
from .frequencies import BlockField, sample_field
from .interface import InteractionPoint, sample_monomers

CAP = 8
MAX_CROSSING_WORK = 20_000_000_000
_OMEGA_STREAM = 0xF1A7


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    n: int
    L: int
    omega: np.ndarray
    field: BlockField
    point: InteractionPoint
    cap: int = CAP

    def __post_init__(self):
        if self.L < 4:
            raise DomainError("block size L must be at least 4")
        if self.n < 1 or self.n % 2:
            raise DomainError("n must be a positive even number (corners have even step count)")
        if len(self.omega) < self.n:
            raise DomainError(f"monomer sequence has {len(self.omega)} symbols, need {self.n}")
        if self.cap < 2:
            raise DomainError("cap must allow at least 2L steps per block visit")
        if self.field.M < 2 * self.max_columns + 4:
            raise DomainError(f"field too small: need M >= {2 * self.max_columns + 4}")

    @property
    def max_columns(self):
        return self.n // (2 * self.L)

    @property
    def ell_max(self):
        return self.cap * self.L

    def energy(self):
        """Per-step energy in a B block (weight exp(-energy))."""
        return np.where(self.omega[: self.n], self.point.alpha, -self.point.beta).astype(float)


def make_instance(n, L, point: InteractionPoint, p, seed, cap=CAP) -> FiniteInstance:
    """Instance with i.i.d. fair monomers and an i.i.d. field, both from ``seed``."""
    cols = n // (2 * L)
    M = 2 * cols + 4
    omega = sample_monomers(n, seed, _OMEGA_STREAM)
    return FiniteInstance(n, L, omega, sample_field(p, M, seed), point, cap)


def _pattern_table(inst: FiniteInstance):
    cmax = inst.max_columns
    isb = inst.field.is_b()
    M = inst.field.M
    pat = np.zeros((cmax + 1, 2 * cmax + 1), dtype=np.int64)
    for c in range(cmax + 1):
        for j in range(-cmax, cmax + 1):
            pat[c, j + cmax] = 2 * isb[c % M, j % M] + isb[c % M, (j - 1) % M]
    return pat


def finite_log_partition(inst: FiniteInstance) -> float:
    """(1/n) log Z by the nested block-visit DP."""
    n, L, ell = inst.n, inst.L, inst.ell_max
    nt = n // 2 + 1
    work = nt * 3 * ell * (L + 1) * (2 * L + 1)
    if work > MAX_CROSSING_WORK:
        raise ResourceError(f"finite model needs about {work:.2e} inner DP updates; "
                            f"reduce n or L (bound {MAX_CROSSING_WORK:.0e})")
    energy = np.zeros(n + ell)
    energy[:n] = inst.energy()
    up = np.full((nt, 4, ell + 1), -np.inf)
    dn = np.full_like(up, -np.inf)
    tail = np.full_like(up, -np.inf)
    # an all-A pair ignores the monomers, so one run serves every start
    a0 = crossing_logz(energy, 0, False, False, L, ell)
    up[:, 0], dn[:, 0], tail[:, 0] = a0
    for ti in range(nt):
        for q in (1, 2, 3):
            u, d, tl = crossing_logz(energy, 2 * ti, bool(q & 2), bool(q & 1), L, ell, n - 2 * ti)
            up[ti, q], dn[ti, q], tail[ti, q] = u, d, tl
    logz = emulsion_logz(up, dn, tail, _pattern_table(inst), n, L, ell)
    return float(logz) / n


# ---------------------------------------------------------------------------
# step-by-step references in global coordinates


def _block_of_step(x, y, move, L):
    """(column, row) of the block containing the midpoint of a step."""
    # a coordinate z lies in cell ceil(z / L) - 1 of the half-open cells
    if move == 0:
        return x // L, -(-y // L) - 1
    col = -(-x // L) - 1
    return col, (y if move == 1 else y - 1) // L


def _moves(state, L, cap, omega_e, field_b, M):
    """Successors of (x, y, last, cx, cy, k) with their log weights."""
    x, y, last, cx, cy, k = state
    if k >= cap * L:
        return
    for move, dx, dy in ((0, 1, 0), (1, 0, 1), (2, 0, -1)):
        if (move == 1 and last == 2) or (move == 2 and last == 1):
            continue
        col, row = _block_of_step(x, y, move, L)
        if col != cx or row not in (cy, cy - 1):
            continue
        nx, ny = x + dx, y + dy
        lw = -omega_e if field_b[col % M, row % M] else 0.0
        if nx == (cx + 1) * L and ny in ((cy + 1) * L, (cy - 1) * L):
            yield (nx, ny, move, cx + 1, ny // L, 0), lw
        else:
            yield (nx, ny, move, cx, cy, k + 1), lw


def enumerate_log_partition(inst: FiniteInstance) -> float:
    """(1/n) log Z by listing every path; tiny sizes only."""
    if inst.n > 24:
        raise ResourceError("path listing is limited to n <= 24")
    e = inst.energy()
    isb = inst.field.is_b()
    M = inst.field.M
    terms = []

    def walk(state, t, lw):
        if t == inst.n:
            terms.append(lw)
            return
        for nxt, w in _moves(state, inst.L, inst.cap, e[t], isb, M):
            walk(nxt, t + 1, lw + w)

    walk((0, 0, 0, 0, 0, 0), 0, 0.0)
    terms = np.array(terms)
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum())) / inst.n


def stepwise_log_partition(inst: FiniteInstance, max_states=5_000_000) -> float:
    """(1/n) log Z by a transfer sum over global-coordinate states."""
    e = inst.energy()
    isb = inst.field.is_b()
    M = inst.field.M
    cur = {(0, 0, 0, 0, 0, 0): 1.0}
    log_scale = 0.0
    for t in range(inst.n):
        nxt = {}
        for state, w in cur.items():
            for s2, lw in _moves(state, inst.L, inst.cap, e[t], isb, M):
                nxt[s2] = nxt.get(s2, 0.0) + w * math.exp(lw)
        if len(nxt) > max_states:
            raise ResourceError(f"stepwise sum exceeds {max_states} states")
        top = max(nxt.values())
        log_scale += math.log(top)
        cur = {s: v / top for s, v in nxt.items()}
    return (log_scale + math.log(math.fsum(cur.values()))) / inst.n


# ---------------------------------------------------------------------------
# self-averaging study


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    L: int
    mean: float
    spread: float
    values: tuple


DEFAULT_LADDER = ((512, 8), (2048, 16), (8192, 32))


def convergence_study(point: InteractionPoint, p, ladder=DEFAULT_LADDER, seeds=range(6),
                      cap=CAP) -> list:
    """Mean and seed-to-seed standard deviation of (1/n) log Z per rung."""
    rows = []
    for n, L in ladder:
        vals = tuple(finite_log_partition(make_instance(n, L, point, p, s, cap)) for s in seeds)
        # offsets from the first seed keep identical values at exactly zero spread
        offs = np.array(vals) - vals[0]
        spread = float(offs.std(ddof=1)) if len(offs) > 1 else 0.0
        rows.append(ConvergenceRow(int(n), int(L), float(vals[0] + offs.mean()), spread, vals))
    return rows
