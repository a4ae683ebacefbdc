"""Phase classification and critical curves in the interaction cone.

Along a diagonal {(beta + r, beta)} of fixed r = alpha - beta the phases
are met in the order D1 or D2 (depending on r against alpha_star), then
L1, then L2.  Every test compares an interface free-energy estimate
against an entropy function; tests that touch the estimate carry a
noise band and may come out undecided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .blocks import Margin, localization_test
from .entropy import DomainError, entropy_G
from .frequencies import FrequencyConfig, FrequencyTriple, rho_star_estimate
from .interface import (
    EstimatorConfig,
    HatKappaProfile,
    InteractionPoint,
    annealed_beta,
    interface_profile,
)
from .solver import solve_f_D1, solve_f_D2, solve_f_L1

LABELS = ("D1", "D2", "L1", "L2", "UNCERTAIN")
BETA_MAX = 16.0


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhaseConfig:
    freq: FrequencyConfig = FrequencyConfig()
    estimator: EstimatorConfig = EstimatorConfig()
    band: float = 2.0
    beta_max: float = BETA_MAX
    beta_tol: float = 1e-2

    def __post_init__(self):
        if self.band < 0 or self.beta_tol <= 0 or self.beta_max <= 0:
            raise ValueError("band >= 0, beta_tol > 0 and beta_max > 0 required")


@dataclass(frozen=True)
class PhaseLabel:
    label: str
    margins: dict
    candidates: tuple

    @property
    def uncertain(self):
        return self.label == "UNCERTAIN"


@dataclass(frozen=True)
class CurvePoint:
    r: float
    beta: float
    uncertainty: float
    censored: bool = False


@dataclass(frozen=True)
class CriticalCurve:
    kind: str
    samples: tuple
    alpha_star: float
    conjectural: bool = False


@dataclass(frozen=True)
class AlphaStar:
    value: float
    residual: float
    bracket: tuple
    rho: FrequencyTriple


@lru_cache(maxsize=4096)
def _d1(r, tri):
    return solve_f_D1(r, tri)


@lru_cache(maxsize=4096)
def _d2(r, tri):
    return solve_f_D2(r, tri, check_stationarity=False)


def lower_bound_curve(r):
    """Annealed lower bound log(1 + sqrt(1 - e^-r)) for both critical curves."""
    return annealed_beta(r)


# ---------------------------------------------------------------------------
# alpha_star


def d1_exit_profile(alpha, rho: FrequencyTriple):
    """sup over mu of hat_kappa + alpha/2 - G(mu, y) with y from the D1 solve at r = alpha."""
    y = _d1(float(alpha), rho).y
    return HatKappaProfile().sup_against(lambda mu: entropy_G(mu, y), shift=0.5 * alpha)[0]


def alpha_star(p, rho: FrequencyTriple | None = None, cfg: PhaseConfig = PhaseConfig(),
               tol=1e-12) -> AlphaStar:
    """Root in alpha of ``d1_exit_profile``; returns the last alpha with profile <= 0."""
    if rho is None:
        if not 0.0 < p < 1.0:
            raise DomainError("p must lie in (0, 1)")
        rho = rho_star_estimate(p, cfg.freq)
    lo = 0.0
    if d1_exit_profile(lo, rho) > 0:
        raise BracketError("exit profile is already positive at alpha = 0")
    hi = 0.25
    while d1_exit_profile(hi, rho) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise BracketError("no sign change of the exit profile below alpha = 1e4")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if d1_exit_profile(mid, rho) > 0:
            hi = mid
        else:
            lo = mid
    return AlphaStar(lo, d1_exit_profile(lo, rho), (lo, hi), rho)


# ---------------------------------------------------------------------------
# classification


def _verdict(m: Margin, band, exact):
    """True if the margin is <= 0 (test passed), False if > 0, None if undecided."""
    if exact or m.stderr == 0.0:
        return m.value <= 0
    s = m.sign(band)
    return {1: False, -1: True, 0: None}[s]


def _both(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def classify(point: InteractionPoint, p, cfg: PhaseConfig = PhaseConfig(),
             rho: FrequencyTriple | None = None, phi=None) -> PhaseLabel:
    """Phase of ``point``: D1, D2, L1, L2, or UNCERTAIN with candidates."""
    if rho is None:
        rho = rho_star_estimate(p, cfg.freq)
    if phi is None:
        phi = interface_profile(point, cfg.estimator)
    r = point.r
    exact = phi.exact
    margins = {}

    y1 = _d1(r, rho).y
    m = phi.sup_against(lambda mu: entropy_G(mu, y1), shift=0.5 * r)
    margins["D1"] = Margin(*m)
    chain = [("D1", _verdict(margins["D1"], cfg.band, exact))]

    d2 = _d2(r, rho)
    x2 = d2.x
    m = phi.sup_against(lambda mu: entropy_G(mu, x2))
    margins["D2_AB"] = Margin(*m)
    loc = localization_test(point, d2.y, phi, cfg.band)
    margins["D2_localization"] = Margin(loc.diff, loc.stderr, loc.mu)
    not_localized = None if loc.localized is None else (not loc.localized)
    chain.append(("D2", _both(_verdict(margins["D2_AB"], cfg.band, exact), not_localized)))

    if chain[0][1] is not True and chain[1][1] is not True:
        x3 = solve_f_L1(point, rho, phi).x
        m = phi.sup_against(lambda mu: entropy_G(mu, x3))
        margins["L1"] = Margin(*m)
        chain.append(("L1", _verdict(margins["L1"], cfg.band, exact)))

    candidates = []
    for name, ok in chain:
        if ok is True:
            candidates.append(name)
            break
        if ok is None:
            candidates.append(name)
    else:
        candidates.append("L2")
    label = candidates[0] if len(candidates) == 1 else "UNCERTAIN"
    return PhaseLabel(label, margins, tuple(candidates))


# ---------------------------------------------------------------------------
# critical curves


def d1_exit_margin(r, beta, p, cfg: PhaseConfig) -> Margin:
    """D1 test margin at (beta + r, beta); positive means D1 is left."""
    point = InteractionPoint.on_diagonal(r, beta)
    rho = rho_star_estimate(p, cfg.freq)
    y = _d1(r, rho).y
    phi = interface_profile(point, cfg.estimator)
    return Margin(*phi.sup_against(lambda mu: entropy_G(mu, y), shift=0.5 * r))


def d2_exit_margin(r, beta, p, cfg: PhaseConfig) -> Margin:
    """Larger of the two D2 test margins; positive means D2 is left."""
    point = InteractionPoint.on_diagonal(r, beta)
    rho = rho_star_estimate(p, cfg.freq)
    d2 = _d2(r, rho)
    phi = interface_profile(point, cfg.estimator)
    x = d2.x
    ab = Margin(*phi.sup_against(lambda mu: entropy_G(mu, x)))
    loc = localization_test(point, d2.y, phi, cfg.band)
    # compare the two tests at their own noise levels
    if ab.value - cfg.band * ab.stderr >= loc.diff - cfg.band * loc.stderr:
        return ab
    return Margin(loc.diff, loc.stderr, loc.mu)


def _bisect_exit(exits, lo, cfg: PhaseConfig, tol):
    """Smallest beta (to tol) with exits(beta) True, searching up from lo."""
    step = 0.25
    hi = lo + step
    while not exits(hi):
        lo = hi
        step *= 2.0
        hi = min(lo + step, cfg.beta_max)
        if lo >= cfg.beta_max:
            return lo, math.inf, True
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if exits(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi, False


def _curve_point(r, margin_fn, p, cfg, band, tol):
    start = lower_bound_curve(r)
    cache = {}

    def margin(beta):
        if beta not in cache:
            cache[beta] = margin_fn(r, beta, p, cfg)
        return cache[beta]

    def exits(beta):
        m = margin(beta)
        return m.value - band * m.stderr > 0

    lo, hi, censored = _bisect_exit(exits, start, cfg, tol)
    if censored:
        return CurvePoint(r, cfg.beta_max, math.inf, True)
    m_lo, m_hi = margin(lo), margin(hi)
    slope = (m_hi.value - m_lo.value) / (hi - lo)
    noise = band * max(m_lo.stderr, m_hi.stderr)
    spread = noise / slope if slope > 0 else math.inf
    return CurvePoint(r, 0.5 * (lo + hi), max(spread, 0.5 * (hi - lo)))


def beta_c1(r, p, cfg: PhaseConfig = PhaseConfig(), a_star: AlphaStar | None = None,
            band=None, tol=None) -> CurvePoint:
    """Exit point of D1 along the diagonal of fixed r in [0, alpha_star].

    The search starts at the annealed lower bound, below which the
    interface free energy is known exactly and D1 holds.
    """
    if a_star is None:
        a_star = alpha_star(p, cfg=cfg)
    if not 0.0 <= r <= a_star.value:
        raise DomainError(f"beta_c1 needs 0 <= r <= alpha_star = {a_star.value:.6g}")
    return _curve_point(r, d1_exit_margin, p, cfg,
                        cfg.band if band is None else band, cfg.beta_tol if tol is None else tol)


def beta_c2(r, p, cfg: PhaseConfig = PhaseConfig(), a_star: AlphaStar | None = None,
            band=None, tol=None) -> CurvePoint:
    """Exit point of D2 along the diagonal of fixed r > alpha_star."""
    if a_star is None:
        a_star = alpha_star(p, cfg=cfg)
    if r <= a_star.value:
        raise DomainError(f"beta_c2 needs r > alpha_star = {a_star.value:.6g}")
    return _curve_point(r, d2_exit_margin, p, cfg,
                        cfg.band if band is None else band, cfg.beta_tol if tol is None else tol)


# ---------------------------------------------------------------------------
# transition order


@dataclass(frozen=True)
class GapRow:
    delta: float
    gap: float
    stderr: float
    noisy: bool

    @property
    def per_delta(self):
        return self.gap / self.delta

    @property
    def per_delta2(self):
        return self.gap / self.delta**2


@dataclass(frozen=True)
class GapProbe:
    kind: str
    r: float
    origin: float
    rows: tuple
    extra: dict = field(default_factory=dict)

    def effective_order(self):
        """Slope of log gap against log delta (least squares)."""
        d = np.array([row.delta for row in self.rows])
        g = np.array([row.gap for row in self.rows])
        if np.any(g <= 0):
            return math.nan
        return float(np.polyfit(np.log(d), np.log(g), 1)[0])


def _richardson(f, x, h):
    """First and second derivatives by central differences, h and h/2 combined."""
    def diffs(step):
        fp, f0, fm = f(x + step), f(x), f(x - step)
        return (fp - fm) / (2 * step), (fp - 2 * f0 + fm) / step**2

    d1_h, d2_h = diffs(h)
    d1_2, d2_2 = diffs(0.5 * h)
    return (4 * d1_2 - d1_h) / 3, (4 * d2_2 - d2_h) / 3, abs(d2_2 - d2_h)


def _l1_root(r, p, cfg, floor_value, tol):
    """Smallest beta on the diagonal where f_L1 leaves the delocalized value."""
    rho = rho_star_estimate(p, cfg.freq)

    def exits(beta):
        point = InteractionPoint.on_diagonal(r, beta)
        return solve_f_L1(point, rho, cfg=cfg.estimator).value > floor_value + 1e-10

    lo, hi, censored = _bisect_exit(exits, lower_bound_curve(r), cfg, tol)
    if censored:
        raise BracketError(f"f_L1 does not leave the delocalized value below beta = {cfg.beta_max}")
    return hi


def transition_gap_probe(kind, r, p, deltas=(0.02, 0.04, 0.06, 0.08, 0.1),
                         cfg: PhaseConfig = PhaseConfig(), a_star: AlphaStar | None = None,
                         root_tol=1e-4, h=1e-3) -> GapProbe:
    """Free-energy gaps just beyond a transition.

    D1D2: f_D2(alpha* + delta) minus the second-order Taylor polynomial
    of f_D1 at alpha* (``r`` is ignored).  D1L1 and D2L1: f_L1 at
    (beta_c + delta + r, beta_c + delta) minus the delocalized value on
    the diagonal of fixed r, with beta_c the point where f_L1 departs
    from it.  Rows are flagged noisy when the gap is below three
    standard errors.
    """
    rho = rho_star_estimate(p, cfg.freq)
    if a_star is None:
        a_star = alpha_star(p, rho, cfg)
    if any(d <= 0 for d in deltas):
        raise ValueError("deltas must be positive")
    rows = []
    if kind == "D1D2":
        a0 = a_star.value

        def f1(x):
            return solve_f_D1(x, rho).value

        d1, d2, d2_change = _richardson(f1, a0, h)
        base = f1(a0)
        for d in deltas:
            gap = _d2(a0 + d, rho).value - (base + d1 * d + 0.5 * d2 * d * d)
            rows.append(GapRow(d, gap, 0.0, False))
        return GapProbe(kind, a0, a0, tuple(rows),
                        {"f_prime": d1, "f_second": d2, "second_h_change": d2_change})
    if kind == "D1L1":
        if not 0.0 <= r < a_star.value:
            raise DomainError("D1L1 needs 0 <= r < alpha_star")
        floor = _d1(r, rho).value
    elif kind == "D2L1":
        if r <= a_star.value:
            raise DomainError("D2L1 needs r > alpha_star")
        floor = _d2(r, rho).value
    else:
        raise ValueError(f"unknown probe kind {kind!r}")
    root = _l1_root(r, p, cfg, floor, root_tol)
    for d in deltas:
        sol = solve_f_L1(InteractionPoint.on_diagonal(r, root + d), rho, cfg=cfg.estimator)
        gap = sol.value - floor
        rows.append(GapRow(d, gap, sol.stderr, gap < 3 * sol.stderr))
    return GapProbe(kind, r, root, tuple(rows), {"delocalized_value": floor})


# ---------------------------------------------------------------------------
# the diagram


@dataclass(frozen=True)
class GridCell:
    r: float
    beta: float
    label: PhaseLabel


@dataclass(frozen=True)
class PhaseDiagram:
    p: float
    alpha_star: AlphaStar
    curves: dict
    grid: tuple

    @property
    def has_uncertain(self):
        return any(c.label.uncertain for c in self.grid)


def trace_phase_diagram(p, r_grid, beta_grid=(), cfg: PhaseConfig = PhaseConfig()) -> PhaseDiagram:
    """alpha_star, both critical curves over ``r_grid`` and a labelled (r, beta) grid.

    Grid cells with beta < -r/2 lie outside the cone and are skipped.
    """
    if len(r_grid) == 0:
        raise ValueError("r grid must be nonempty")
    rho = rho_star_estimate(p, cfg.freq)
    a_star = alpha_star(p, rho, cfg)
    c1, c2, lb = [], [], []
    for r in r_grid:
        if r < 0:
            raise DomainError("r must be nonnegative")
        lb.append(CurvePoint(float(r), lower_bound_curve(r), 0.0))
        if r <= a_star.value:
            c1.append(beta_c1(r, p, cfg, a_star))
        else:
            c2.append(beta_c2(r, p, cfg, a_star))
    curves = {
        "beta_c1": CriticalCurve("beta_c1", tuple(c1), a_star.value),
        "beta_c2": CriticalCurve("beta_c2", tuple(c2), a_star.value),
        "lower_bound": CriticalCurve("lower_bound", tuple(lb), a_star.value),
    }
    cells = []
    for r in r_grid:
        for beta in beta_grid:
            if beta < -0.5 * r:
                continue
            point = InteractionPoint.on_diagonal(float(r), float(beta))
            cells.append(GridCell(float(r), float(beta), classify(point, p, cfg, rho)))
    return PhaseDiagram(p, a_star, curves, tuple(cells))
