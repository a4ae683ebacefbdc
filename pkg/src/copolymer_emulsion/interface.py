"""Quenched free energy of a copolymer near one flat oil-water interface.

The upper half-plane is oil and the lower half-plane (interface included)
is water.  For each disorder sample one DP run gives log Z for every path
length at once, so a single pass covers the whole slope grid.

The estimate at slope mu is

    hat_kappa(mu) + extrapolated mean of (log Z - log |W|) / (c L)

where |W| is the exact path count.  The ratio Z/|W| is an average of the
Boltzmann factor over uniform paths; its finite-size corrections are
smaller than those of log Z and are removed by a three-term fit in
(1, log L / L, 1 / L).  The A-fractions of the monomer window serve as
control variates for the disorder average.
"""

from __future__ import annotations

import fcntl
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from ._kernels import interface_logz
from .entropy import DomainError, ResourceError, hat_kappa

MAX_INTERFACE_STATES = 2_000_000_000


class CacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class InteractionPoint:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise DomainError("interaction strengths must be finite")
        if self.alpha < abs(self.beta) - 1e-12:
            raise DomainError(f"({self.alpha}, {self.beta}) is outside the cone alpha >= |beta|")

    @property
    def r(self) -> float:
        return self.alpha - self.beta

    @classmethod
    def on_diagonal(cls, r: float, beta: float) -> "InteractionPoint":
        return cls(beta + r, beta)


@dataclass(frozen=True)
class EstimatorConfig:
    L_ladder: tuple = (16, 32, 64)
    samples: int = 32
    mu_max: float = 16.0
    seed: int = 0
    stderr_warn: float = 0.05
    workers: int = 1

    def __post_init__(self):
        ladder = tuple(int(L) for L in self.L_ladder)
        if not ladder or min(ladder) < 2:
            raise ValueError("L ladder needs block sizes >= 2")
        if any(L % ladder[0] for L in ladder):
            raise ValueError("every L in the ladder must be a multiple of the smallest")
        if self.samples < 4:
            raise ValueError("need at least 4 disorder samples")
        if self.mu_max <= 1:
            raise ValueError("mu_max must exceed 1")
        object.__setattr__(self, "L_ladder", tuple(sorted(ladder)))


@dataclass(frozen=True)
class InterfaceEstimate:
    mu: float
    value: float
    stderr: float
    L_used: tuple
    samples: int
    extrapolated: bool


def sample_monomers(length, seed, *stream):
    """i.i.d. fair A/B sequence as a boolean array (True = A)."""
    rng = np.random.default_rng([int(seed), *[int(s) for s in stream]])
    return rng.integers(0, 2, size=int(length)).astype(bool)


def _as_bool_sequence(omega):
    if isinstance(omega, str):
        bad = set(omega) - {"A", "B"}
        if bad:
            raise DomainError(f"monomer symbols must be A or B, got {sorted(bad)}")
        return np.frombuffer(omega.encode(), dtype=np.uint8) == ord("A")
    return np.asarray(omega, dtype=bool)


def _int_steps(L, frac, name):
    val = frac * L
    n = int(round(val))
    if abs(val - n) > 1e-9:
        raise DomainError(f"{name}*L = {val} is not an integer")
    return n


def interface_log_partition(omega, point: InteractionPoint, L: int, c, b) -> float:
    """Exact log partition function over cL-step paths from (0,0) to (bL,0)."""
    n = _int_steps(L, c, "c")
    nb = _int_steps(L, b, "b")
    if nb < 1 or n < nb:
        raise DomainError("need c >= b > 0")
    seq = _as_bool_sequence(omega)
    if len(seq) < n:
        raise DomainError(f"monomer sequence has {len(seq)} symbols, need {n}")
    if (nb + 1) * n * n > MAX_INTERFACE_STATES:
        raise ResourceError("interface DP too large")
    logw = np.where(seq[:n], -point.alpha, point.beta).astype(float)
    return float(interface_logz(logw, nb, n)[n])


def in_annealed_region(point: InteractionPoint) -> bool:
    """True where the annealed bound pins the free energy to hat_kappa."""
    return point.beta <= annealed_beta(point.r)


def annealed_beta(r):
    """Largest beta whose annealed lower-half weight is at most 1."""
    if r < 0:
        raise DomainError("coupling r must be nonnegative")
    if math.isinf(r):
        return math.log(2.0)
    return math.log1p(math.sqrt(-math.expm1(-r)))


# ---------------------------------------------------------------------------
# estimation


@lru_cache(maxsize=64)
def _log_counts(L, n_steps):
    return interface_logz(np.zeros(n_steps), L, n_steps)


def _fit_weights(Ls):
    """Weights turning per-L means into the extrapolated constant."""
    Ls = np.asarray(Ls, dtype=float)
    if len(Ls) >= 3:
        design = np.column_stack([np.ones_like(Ls), np.log(Ls) / Ls, 1.0 / Ls])
    elif len(Ls) == 2:
        design = np.column_stack([np.ones_like(Ls), 1.0 / Ls])
    else:
        return np.ones(1)
    return np.linalg.pinv(design)[0]


def mu_grid(cfg: EstimatorConfig):
    step = 2.0 / cfg.L_ladder[0]
    count = int(math.floor((cfg.mu_max - 1.0) / step + 1e-9))
    return 1.0 + step * np.arange(count + 1)


def _rung(point, L, cfg, mus):
    """Control-variate means and stderrs of (1/cL) log Z at one block size."""
    n_steps = int(round(mus[-1] * L))
    if (L + 1) * n_steps * n_steps > MAX_INTERFACE_STATES:
        raise ResourceError(f"interface DP at L={L} needs too many states")
    idx = np.rint(mus * L).astype(int)

    def one(s):
        omega = sample_monomers(n_steps, cfg.seed, L, s)
        logw = np.where(omega, -point.alpha, point.beta).astype(float)
        logz = interface_logz(logw, L, n_steps)
        csum = np.concatenate([[0.0], np.cumsum(omega - 0.5)])
        return logz[idx] / idx, csum[idx] / idx, csum[idx // 2] / idx

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(one, range(cfg.samples)))
    else:
        rows = [one(s) for s in range(cfg.samples)]
    Y = np.array([r[0] for r in rows])
    X1 = np.array([r[1] for r in rows])
    X2 = np.array([r[2] for r in rows])
    S = cfg.samples
    means = np.empty(len(mus))
    errs = np.empty(len(mus))
    for k in range(len(mus)):
        design = np.column_stack([np.ones(S), X1[:, k], X2[:, k]])
        coef, *_ = np.linalg.lstsq(design, Y[:, k], rcond=None)
        resid = Y[:, k] - design @ coef
        means[k] = coef[0]
        errs[k] = math.sqrt(max(resid @ resid, 0.0) / (S - 3) / S)
    return means, errs


class PhiCache:
    """Append-only text cache of per-L interface estimates.

    Records are ``alpha,beta,mu,L,seed,samples,value,stderr`` where value
    is the disorder mean of (1/cL) log Z at that block size.
    """

    def __init__(self, path=None):
        self.path = path
        self._rows = {}
        if path is not None and os.path.exists(path):
            self._load()

    @staticmethod
    def _key(alpha, beta, mu, L, seed, samples):
        return (round(alpha, 9), round(beta, 9), round(mu, 9), int(L), int(seed), int(samples))

    def _load(self):
        with open(self.path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("alpha"):
                    continue
                parts = line.split(",")
                try:
                    if len(parts) != 8:
                        raise ValueError("expected 8 fields")
                    a, b, mu = (float(x) for x in parts[:3])
                    L, seed, samples = (int(x) for x in parts[3:6])
                    value, err = float(parts[6]), float(parts[7])
                except ValueError as exc:
                    raise CacheError(f"corrupted cache file {self.path}, line {lineno}: {exc}") from None
                self._rows[self._key(a, b, mu, L, seed, samples)] = (value, err)

    def get_rung(self, point, mus, L, cfg):
        out = []
        for mu in mus:
            hit = self._rows.get(self._key(point.alpha, point.beta, mu, L, cfg.seed, cfg.samples))
            if hit is None:
                return None
            out.append(hit)
        arr = np.array(out)
        return arr[:, 0], arr[:, 1]

    def put_rung(self, point, mus, L, cfg, means, errs):
        lines = []
        for mu, m, e in zip(mus, means, errs):
            key = self._key(point.alpha, point.beta, mu, L, cfg.seed, cfg.samples)
            self._rows[key] = (float(m), float(e))
            lines.append(f"{point.alpha!r},{point.beta!r},{float(mu)!r},{L},{cfg.seed},"
                         f"{cfg.samples},{float(m)!r},{float(e)!r}\n")
        if self.path is None:
            return
        with open(self.path, "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                fh.writelines(lines)
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)


_MEMORY_CACHE = PhiCache()
_FILE_CACHES = {}


def default_cache():
    """In-memory cache, or the file named by PHI_CACHE_PATH (loaded once per path)."""
    path = os.environ.get("PHI_CACHE_PATH")
    if not path:
        return _MEMORY_CACHE
    path = os.path.abspath(path)
    if path not in _FILE_CACHES:
        _FILE_CACHES[path] = PhiCache(path)
    return _FILE_CACHES[path]


# ---------------------------------------------------------------------------
# profiles: phi^I as a function of mu


class InterfaceProfile:
    """Base class; subclasses give phi^I(mu) with an error bar.

    ``surrogate`` is the value used inside optimizers and phase criteria.
    """

    exact = False

    def value(self, mu):
        raise NotImplementedError

    def stderr(self, mu):
        raise NotImplementedError

    def surrogate(self, mu):
        return self.value(mu)

    def conjugate(self, f):
        """sup over mu >= 1 of mu * (phi(mu) - f), with the maximizing mu."""
        raise NotImplementedError

    def conjugate_ties(self, f, tol=1e-4):
        mu = self.conjugate(f)[1]
        return mu, mu

    def sup_against(self, fn, shift=0.0):
        """sup over mu of phi(mu) + shift - fn(mu), with a noise band.

        Returns (value, stderr at the maximizer, maximizing mu).
        """
        raise NotImplementedError


class HatKappaProfile(InterfaceProfile):
    """The exactly known profile phi^I = hat_kappa (annealed region)."""

    exact = True

    def value(self, mu):
        return hat_kappa(mu)

    def stderr(self, mu):
        return 0.0 * np.asarray(mu, dtype=float)

    def conjugate(self, f):
        if f <= 0:
            raise DomainError("conjugate needs f > 0")
        # d/dmu of mu*hat_kappa(mu) decreases from +inf to 0
        res = minimize_scalar(
            lambda t: -(math.exp(t) * (hat_kappa(math.exp(t)) - f)),
            bounds=(0.0, 40.0), method="bounded", options={"xatol": 1e-12},
        )
        return float(-res.fun), math.exp(res.x)

    def sup_against(self, fn, shift=0.0):
        grid = np.exp(np.linspace(0.0, math.log(1e4), 400))
        vals = hat_kappa(grid) + shift - fn(grid)
        k = int(np.argmax(vals))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        if hi > lo:
            res = minimize_scalar(
                lambda m: -(hat_kappa(m) + shift - fn(m)),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
            )
            if -res.fun > vals[k]:
                return float(-res.fun), 0.0, float(res.x)
        return float(vals[k]), 0.0, float(grid[k])


@dataclass
class TableProfile(InterfaceProfile):
    """phi^I estimated on a slope grid.

    Between grid nodes mu*phi is interpolated linearly.  Beyond the last
    node the excess of mu*phi over mu*hat_kappa is held constant, which
    keeps the decay to zero at large slope.
    """

    point: InteractionPoint
    mus: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    L_used: tuple
    samples: int
    extrapolated: bool
    rung_means: dict = field(default_factory=dict)

    def _interp(self, arr, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu < 1):
            raise DomainError("mu must be >= 1")
        top = self.mus[-1]
        inside = np.minimum(mu, top)
        prod = np.interp(inside, self.mus, self.mus * arr)
        out = prod / inside
        if np.any(mu > top):
            excess = top * (arr[-1] - hat_kappa(top))
            tail = hat_kappa(np.maximum(mu, top)) + excess / np.maximum(mu, top)
            out = np.where(mu > top, tail, out)
        return float(out) if out.ndim == 0 else out

    def value(self, mu):
        return self._interp(self.values, mu)

    def stderr(self, mu):
        return self._interp(self.errors, mu)

    def surrogate(self, mu):
        # phi^I >= hat_kappa holds exactly, so estimates are floored there
        return np.maximum(self.value(mu), hat_kappa(mu))

    def estimate(self, mu) -> InterfaceEstimate:
        return InterfaceEstimate(float(mu), float(self.value(mu)), float(self.stderr(mu)),
                                 self.L_used, self.samples, self.extrapolated)

    def _tail_grid(self):
        return self.mus[-1] * np.exp(np.linspace(0.0, math.log(1e4), 200))

    def _interp_conjugate(self, f):
        """sup of mu * (interpolant - f); exact for the piecewise-linear part.

        Returns (value, mu, node values).  Beyond the last node the
        function is mu * hat_kappa plus a constant, concave in mu.
        """
        nodes = self.mus * (self.values - f)
        k = int(np.argmax(nodes))
        best, mu_best = float(nodes[k]), float(self.mus[k])
        top = self.mus[-1]
        hk_val, hk_mu = HatKappaProfile().conjugate(f)
        if hk_mu > top:
            excess = top * (self.values[-1] - hat_kappa(top))
            if hk_val + excess > best:
                best, mu_best = hk_val + excess, hk_mu
        return best, mu_best, nodes, (hk_val, hk_mu)

    def conjugate(self, f):
        if f <= 0:
            raise DomainError("conjugate needs f > 0")
        # sup of a pointwise max is the max of the two sups
        best, mu_best, _, (hk_val, hk_mu) = self._interp_conjugate(f)
        if hk_val >= best:
            return hk_val, hk_mu
        return best, mu_best

    def conjugate_ties(self, f, tol=1e-4):
        """Range of slopes whose conjugate value is within ``tol`` of the best."""
        best, mu_best, nodes, (hk_val, hk_mu) = self._interp_conjugate(f)
        top = max(best, hk_val)
        near = list(self.mus[nodes >= top - tol])
        if best >= top - tol:
            near.append(mu_best)
        if hk_val >= top - tol:
            near.append(hk_mu)
        return float(min(near)), float(max(near))

    def sup_against(self, fn, shift=0.0):
        grid = np.concatenate([self.mus, self._tail_grid()[1:]])
        vals = self.surrogate(grid) + shift - fn(grid)
        k = int(np.argmax(vals))
        best, mu_best = float(vals[k]), float(grid[k])
        if 0 < k < len(grid) - 1:
            res = minimize_scalar(
                lambda m: -(self.surrogate(m) + shift - fn(m)),
                bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                options={"xatol": 1e-10},
            )
            if -res.fun > best:
                best, mu_best = float(-res.fun), float(res.x)
        return best, float(self.stderr(mu_best)), mu_best


def phi_I_table(point: InteractionPoint, cfg: EstimatorConfig = EstimatorConfig(),
                cache: PhiCache | None = None) -> TableProfile:
    """Estimate phi^I on the slope grid of ``cfg``."""
    if cache is None:
        cache = default_cache()
    mus = mu_grid(cfg)
    inner = mus[1:]
    rung_means = {}
    rung_errs = {}
    for L in cfg.L_ladder:
        hit = cache.get_rung(point, inner, L, cfg)
        if hit is None:
            means, errs = _rung(point, L, cfg, inner)
            cache.put_rung(point, inner, L, cfg, means, errs)
        else:
            means, errs = hit
        idx = np.rint(inner * L).astype(int)
        counts = _log_counts(L, int(idx[-1]))[idx] / idx
        rung_means[L] = np.asarray(means) - counts
        rung_errs[L] = np.asarray(errs)
    weights = _fit_weights(cfg.L_ladder)
    ratio = sum(w * rung_means[L] for w, L in zip(weights, cfg.L_ladder))
    var = sum(w * w * rung_errs[L] ** 2 for w, L in zip(weights, cfg.L_ladder))
    values = np.concatenate([[0.0], hat_kappa(inner) + ratio])
    errors = np.concatenate([[0.0], np.sqrt(var)])
    if np.max(errors) > cfg.stderr_warn:
        warnings.warn(
            f"phi^I stderr up to {np.max(errors):.3g} at ({point.alpha}, {point.beta}); "
            f"consider more samples", RuntimeWarning, stacklevel=2,
        )
    return TableProfile(point, mus, values, errors, cfg.L_ladder, cfg.samples,
                        len(cfg.L_ladder) > 1, rung_means)


def phi_I(point: InteractionPoint, mu, cfg: EstimatorConfig = EstimatorConfig(),
          cache: PhiCache | None = None) -> InterfaceEstimate:
    """Disorder-averaged, size-extrapolated estimate of phi^I at one slope."""
    if mu < 1:
        raise DomainError("mu must be >= 1")
    if mu > cfg.mu_max:
        step = 2.0 / cfg.L_ladder[0]
        cfg = EstimatorConfig(cfg.L_ladder, cfg.samples,
                              1.0 + step * math.ceil((mu - 1.0) / step), cfg.seed,
                              cfg.stderr_warn, cfg.workers)
    return phi_I_table(point, cfg, cache).estimate(mu)


def phi_I_along_diagonal(point0: InteractionPoint, u_grid, mu,
                         cfg: EstimatorConfig = EstimatorConfig(), cache=None):
    """Estimates at (alpha0 + u, beta0 + u), all sharing disorder samples."""
    return [phi_I(InteractionPoint(point0.alpha + u, point0.beta + u), mu, cfg, cache)
            for u in u_grid]


def interface_profile(point: InteractionPoint, cfg: EstimatorConfig = EstimatorConfig(),
                      cache=None) -> InterfaceProfile:
    """The profile used by the block and phase machinery."""
    if in_annealed_region(point):
        return HatKappaProfile()
    return phi_I_table(point, cfg, cache)
