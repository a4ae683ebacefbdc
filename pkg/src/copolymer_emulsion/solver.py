"""Variational free energies of the emulsion, solved by Dinkelbach iteration.

Every formula here has the shape

    f = sup over frequencies rho, aspect ratios a >= 2 of
        sum rho_kl a_kl psi_kl(a_kl) / sum rho_kl a_kl .

For a trial value f the parametric problem

    F(f) = sup sum rho_kl sup_a a (psi_kl(a) - f)

is decreasing in f and vanishes at the answer; the Dinkelbach update
f <- (value of the ratio at the parametric maximizers) is Newton's
method on F and increases monotonically from any feasible start.  The
inner suprema over a are the ``conjugate_*`` functions of ``blocks``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import (
    A_MAX,
    Conjugate,
    ExcursionPair,
    OptimizerError,
    conjugate_AA,
    conjugate_BA_hat,
    conjugate_BB,
    conjugate_cross,
    psi_BA_hat,
)
from .entropy import DomainError, kappa_diag
from .frequencies import (
    FrequencyConfig,
    FrequencyTriple,
    max_weighted_path,
    rho_star_estimate,
    sample_fields,
)
from .interface import EstimatorConfig, InteractionPoint, InterfaceProfile, interface_profile

TOL = 1e-13
MAX_ITER = 50
A_STAR = 2.5


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PhaseSolution:
    label: str
    value: float
    x: float | None
    y: float | None
    z: float | None
    excursion: ExcursionPair | None = None
    stderr: float = 0.0
    frequencies: FrequencyTriple | None = None
    trajectory: tuple = ()
    residuals: dict = field(default_factory=dict)
    multiplicity: bool = False
    extra: dict = field(default_factory=dict)


def _as_triple(rho) -> FrequencyTriple:
    if isinstance(rho, FrequencyTriple):
        return rho
    return FrequencyTriple.from_rho(float(rho))


def _dinkelbach(step, f0):
    """Iterate f <- step(f)[0] from a start with F(f0) >= 0.

    ``step(f)`` returns (updated f, payload).  Returns the last f, the
    payload at that f and the trajectory.
    """
    f = f0
    traj = [f]
    for _ in range(MAX_ITER):
        f_new, payload = step(f)
        traj.append(f_new)
        if f_new < f - 1e-12:
            raise ConvergenceError(f"Dinkelbach iterates decreased: {f} -> {f_new}")
        if abs(f_new - f) <= TOL * max(1.0, abs(f)):
            return f_new, step(f_new)[1], tuple(traj)
        f = f_new
    raise ConvergenceError(f"no convergence in {MAX_ITER} iterations (last step {traj[-1] - traj[-2]:.3g})")


def _positive_start(F, guess):
    """A trial value 0 < f <= answer: the guess if feasible, else halved."""
    f = guess if guess > 0 else 0.1
    for _ in range(200):
        if F(f) >= 0:
            return f
        f *= 0.5
    raise ConvergenceError("could not find a feasible positive start")


def _check_box(**aspects):
    for name, a in aspects.items():
        if a is not None and a >= A_MAX:
            raise OptimizerError(f"maximizer {name} = {a:.4g} pinned at the search box edge {A_MAX}")


def _weighted(rhos, conjs, f):
    """Dinkelbach update and F(f) from frequencies and conjugates."""
    num = sum(r * (c.value + f * c.a) for r, c in zip(rhos, conjs) if r > 0)
    den = sum(r * c.a for r, c in zip(rhos, conjs) if r > 0)
    F = sum(r * c.value for r, c in zip(rhos, conjs) if r > 0)
    return num / den, F, den


# ---------------------------------------------------------------------------
# D1: A blocks and B blocks crossed diagonally


def _d1_conjugates(r, f):
    return conjugate_AA(f), conjugate_BB(r, f)


def solve_f_D1(r, rho, tol_residual=1e-8) -> PhaseSolution:
    """sup over x, y >= 2 of the two-block ratio with psi_AA and psi_BB."""
    if r < 0:
        raise DomainError("coupling r = alpha - beta must be >= 0 in the cone")
    tri = _as_triple(rho)
    p_a = tri.rho_star
    if p_a >= 1.0:
        return PhaseSolution("D1", kappa_diag(A_STAR), A_STAR, None, None, frequencies=tri)
    if p_a <= 0.0:
        return PhaseSolution("D1", kappa_diag(A_STAR) - 0.5 * r, None, A_STAR, None, frequencies=tri)
    rhos = (p_a, 1.0 - p_a)

    def F(f):
        return _weighted(rhos, _d1_conjugates(r, f), f)[1]

    def step(f):
        conjs = _d1_conjugates(r, f)
        return _weighted(rhos, conjs, f)[0], conjs

    guess = p_a * kappa_diag(A_STAR) + (1 - p_a) * (kappa_diag(A_STAR) - 0.5 * r)
    f, (cx, cy), traj = _dinkelbach(step, _positive_start(F, guess))
    x, y = cx.a, cy.a
    _check_box(x=x, y=y)
    # x - 2 = 2 / expm1(2 f) without cancellation, likewise y - 2
    log_xm2 = math.log(2.0) - math.log(math.expm1(2.0 * f))
    log_ym2 = math.log(2.0) - math.log(math.expm1(2.0 * f + r))
    res1 = math.log(2.0) + p_a * log_xm2 + (1 - p_a) * log_ym2
    res2 = r + math.log(x / y) + log_ym2 - log_xm2
    if max(abs(res1), abs(res2)) > tol_residual:
        raise ConvergenceError(f"stationarity residuals {res1:.3g}, {res2:.3g} exceed {tol_residual}")
    return PhaseSolution("D1", f, x, y, None, frequencies=tri, trajectory=traj,
                         residuals={"xy_eq1": res1, "xy_eq2": res2})


# ---------------------------------------------------------------------------
# D2: B blocks next to A blocks allow an excursion into the A block


def _three_block(label, conj_ba, r, tri, f_floor):
    rhos = (tri.rho_star, tri.rho_BA, tri.rho_BB)

    def conjs(f):
        return conjugate_AA(f), conj_ba(f), conjugate_BB(r, f)

    def F(f):
        return _weighted(rhos, conjs(f), f)[1]

    def step(f):
        cs = conjs(f)
        return _weighted(rhos, cs, f)[0], cs

    f, cs, traj = _dinkelbach(step, _positive_start(F, f_floor))
    cx, cy, cz = cs
    x = cx.a if rhos[0] > 0 else None
    y = cy.a if rhos[1] > 0 else None
    z = cz.a if rhos[2] > 0 else None
    _check_box(x=x, y=y, z=z)
    den = sum(r_ * c.a for r_, c in zip(rhos, cs) if r_ > 0)
    err = rhos[1] * cy.stderr / den if den > 0 else 0.0
    return f, cs, traj, err, (x, y, z)


def solve_f_D2(r, rho: FrequencyTriple, check_stationarity=True) -> PhaseSolution:
    """Three-block ratio with the excursion free energy psi_BA_hat."""
    if r < 0:
        raise DomainError("coupling r must be >= 0 in the cone")
    tri = _as_triple(rho)
    floor = solve_f_D1(r, tri).value
    f, (cx, cy, cz), traj, _, (x, y, z) = _three_block(
        "D2", lambda f: conjugate_BA_hat(r, f), r, tri, floor)
    residuals = {}
    if check_stationarity and y is not None:
        h = 1e-4
        slope = ((y + h) * psi_BA_hat(r, y + h).value - (y - h) * psi_BA_hat(r, y - h).value) / (2 * h)
        residuals["stationarity_y"] = slope - f
    return PhaseSolution("D2", f, x, y, z, cy.pair, 0.0, tri, traj, residuals)


# ---------------------------------------------------------------------------
# L1: the BA free energy uses the quenched interface


def solve_f_L1(point: InteractionPoint, rho: FrequencyTriple,
               phi: InterfaceProfile | None = None,
               cfg: EstimatorConfig = EstimatorConfig(), tie_tol=1e-4) -> PhaseSolution:
    """Three-block ratio with psi_BA; the denominator weights A time by x."""
    tri = _as_triple(rho)
    if phi is None:
        phi = interface_profile(point, cfg)
    r = point.r
    floor = solve_f_D1(r, tri).value
    f, (cx, cy, cz), traj, err, (x, y, z) = _three_block(
        "L1", lambda f: conjugate_cross("BA", point, f, phi), r, tri, floor)
    multiple = False
    extra = {}
    if y is not None and cy.pair is not None and cy.pair.b > 0:
        mu_lo, mu_hi = phi.conjugate_ties(f, tie_tol)
        b = cy.pair.b
        y_lo = y - cy.pair.c + b * mu_lo
        y_hi = y - cy.pair.c + b * mu_hi
        multiple = (y_hi - y_lo) > 1e-4
        extra["y_range"] = (y_lo, y_hi)
    return PhaseSolution("L1", f, x, y, z, cy.pair, err, tri, traj, {}, multiple, extra)


# ---------------------------------------------------------------------------
# the full formula over achievable coarse paths


@dataclass(frozen=True)
class FullConfig:
    freq: FrequencyConfig = FrequencyConfig()
    estimator: EstimatorConfig = EstimatorConfig()


def _pair_conjugates(point, f, phi):
    return (
        conjugate_AA(f),
        conjugate_cross("AB", point, f, phi),
        conjugate_cross("BA", point, f, phi),
        conjugate_BB(point.r, f),
    )


def solve_f_full(point: InteractionPoint, p, cfg: FullConfig = FullConfig(),
                 phi: InterfaceProfile | None = None) -> PhaseSolution:
    """Dinkelbach over pair weights, maximized by coarse-path DP per field.

    F(f) is the field average of the best path's mean pair weight
    sup_a a(psi_kl(a) - f); pair counts along the best paths give the
    update.  The sup over limiting frequencies is thereby replaced by
    the frequencies achievable on the sampled fields.
    """
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if phi is None:
        phi = interface_profile(point, cfg.estimator)
    fields = sample_fields(p, cfg.freq)
    T = cfg.freq.T

    def evaluate(f):
        conjs = _pair_conjugates(point, f, phi)
        w = np.array([c.value for c in conjs])
        counts = np.zeros(4)
        for fld in fields:
            counts += np.asarray(max_weighted_path(fld, w, T).counts, dtype=float)
        rho = counts / counts.sum()
        return rho, conjs

    def step(f):
        rho, conjs = evaluate(f)
        return _weighted(rho, conjs, f)[0], (rho, conjs)

    def F(f):
        rho, conjs = evaluate(f)
        return _weighted(rho, conjs, f)[1]

    tri = rho_star_estimate(p, cfg.freq)
    floor = solve_f_D1(point.r, tri).value
    f, (rho, conjs), traj = _dinkelbach(step, _positive_start(F, floor))
    _check_box(**{f"a_{n}": (c.a if r_ > 0 else None)
                  for n, r_, c in zip(("AA", "AB", "BA", "BB"), rho, conjs)})
    den = sum(r_ * c.a for r_, c in zip(rho, conjs))
    err = sum(r_ * c.stderr for r_, c in zip(rho, conjs)) / den
    used = FrequencyTriple(float(rho[0] + rho[1]), float(rho[2]), float(rho[3]))
    a = [c.a if r_ > 0 else None for r_, c in zip(rho, conjs)]
    return PhaseSolution("FULL", f, a[0], a[2], a[3], conjs[2].pair, err, used, traj,
                         extra={"a_AB": a[1], "pair_freqs": tuple(float(v) for v in rho)})
