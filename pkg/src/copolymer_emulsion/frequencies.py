"""Block-visit frequencies of coarse-grained paths in a random emulsion.

A coarse path moves from block corner to block corner, one column per
move, either up-right or down-right, and each move crosses one block
next to one neighbouring block.  Pair types are indexed

    AA = 0, AB = 1, BA = 2, BB = 3        (crossed, neighbour)

and all estimates come from exact dynamic programming over sampled
fields on a torus.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import best_block_path
from .entropy import DomainError, ResourceError

PAIR_NAMES = ("AA", "AB", "BA", "BB")
MAX_PATH_WORK = 5_000_000_000
_FIELD_STREAM = 0xB10C


@dataclass(frozen=True, eq=False)
class BlockField:
    """M x M field; ``grid[i, j]`` is True for an A block in column i, row j."""

    grid: np.ndarray
    p: float
    seed: int | None

    @property
    def M(self):
        return self.grid.shape[0]

    def is_b(self):
        return (~self.grid).astype(np.int64)

    def dumps(self):
        """Text form: one line per row j (top row first), one char per column."""
        rows = []
        for j in range(self.M - 1, -1, -1):
            rows.append("".join("A" if a else "B" for a in self.grid[:, j]))
        return "\n".join(rows) + "\n"


def load_field(text, p=math.nan):
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or any(len(ln) != len(lines) for ln in lines):
        raise ValueError("field text must be a square grid of A/B characters")
    if any(ch not in "AB" for ln in lines for ch in ln):
        raise ValueError("field text may only contain 'A' and 'B'")
    M = len(lines)
    grid = np.zeros((M, M), dtype=bool)
    for k, ln in enumerate(lines):
        grid[:, M - 1 - k] = [ch == "A" for ch in ln]
    return BlockField(grid, p, None)


def sample_field(p, M, seed) -> BlockField:
    """I.i.d. field with A-probability p, reproducible from ``seed``."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    if M < 2:
        raise DomainError("field size must be at least 2")
    rng = np.random.default_rng([int(seed), _FIELD_STREAM])
    return BlockField(rng.random((M, M)) < p, float(p), int(seed))


@dataclass(frozen=True)
class FrequencyConfig:
    M: int = 512
    T: int = 2048
    fields: int = 8
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.M < 2 or self.T < 1 or self.fields < 2:
            raise ValueError("need M >= 2, T >= 1 and at least two fields")
        if self.M % 2:
            raise ValueError("M must be even so the torus respects path parity")
        if self.M * self.T * self.fields > MAX_PATH_WORK:
            raise ResourceError("frequency DP exceeds the work bound; lower M, T or fields")


@lru_cache(maxsize=64)
def sample_fields(p, cfg: FrequencyConfig):
    return tuple(sample_field(p, cfg.M, cfg.seed * 1_000_003 + k) for k in range(cfg.fields))


@dataclass(frozen=True)
class PathResult:
    mean: float
    counts: tuple
    T: int

    @property
    def freqs(self):
        return np.asarray(self.counts, dtype=float) / self.T


def max_weighted_path(field: BlockField, weights, T) -> PathResult:
    """Maximal average pair weight over coarse paths of T moves."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be four finite numbers (AA, AB, BA, BB)")
    if T < 1:
        raise ValueError("T must be positive")
    total, counts = best_block_path(field.is_b(), w, int(T))
    return PathResult(float(total) / T, tuple(int(c) for c in counts), int(T))


@dataclass(frozen=True)
class FrequencyTriple:
    """A-crossing, BA and BB frequencies (rho_star + rho_BA + rho_BB = 1)."""

    rho_star: float
    rho_BA: float
    rho_BB: float
    stderr: tuple = (0.0, 0.0, 0.0)
    per_field: tuple = ()

    @classmethod
    def from_rho(cls, rho_star, rho_BA=None):
        """Triple from given values; without rho_BA all B time goes to BB."""
        if not 0.0 <= rho_star <= 1.0:
            raise DomainError("rho_star must lie in [0, 1]")
        rho_BA = 0.0 if rho_BA is None else rho_BA
        if rho_BA < 0 or rho_star + rho_BA > 1.0 + 1e-12:
            raise DomainError("frequencies must be nonnegative and sum to 1")
        return cls(rho_star, rho_BA, max(1.0 - rho_star - rho_BA, 0.0))


def _lexicographic_weights(T):
    # any extra A crossing beats every possible gain in BA crossings
    return np.array([T + 1.0, T + 1.0, 1.0, 0.0])


def field_triple(field: BlockField, T) -> tuple:
    res = max_weighted_path(field, _lexicographic_weights(T), T)
    n_aa, n_ab, n_ba, _ = res.counts
    a = (n_aa + n_ab) / T
    ba = n_ba / T
    return a, ba, 1.0 - a - ba


@lru_cache(maxsize=64)
def rho_star_estimate(p, cfg: FrequencyConfig = FrequencyConfig()) -> FrequencyTriple:
    """Estimate (rho*, rho*_BA, rho*_BB) by lexicographic path DP.

    Per field the DP first maximizes the number of A crossings, then the
    number of BA crossings among those paths; results are averaged over
    ``cfg.fields`` fields.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    fields = sample_fields(p, cfg)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda fld: field_triple(fld, cfg.T), fields))
    else:
        rows = [field_triple(fld, cfg.T) for fld in fields]
    arr = np.array(rows)
    mean = arr.mean(axis=0)
    err = arr.std(axis=0, ddof=1) / math.sqrt(len(rows))
    rho_star, rho_ba = float(mean[0]), float(mean[1])
    return FrequencyTriple(rho_star, rho_ba, 1.0 - rho_star - rho_ba,
                           tuple(float(e) for e in err), tuple(map(tuple, rows)))
