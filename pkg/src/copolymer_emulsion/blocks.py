"""Free energies of a path crossing one block next to a neighbouring block.

A crossing of an aL-step path may first travel cL steps along the
interface with the neighbour, covering bL of the width, and then cross
what is left.  The excursion pair (b, c) ranges over

    DOM(a) = {0 <= b <= 1, c >= b, a - c >= 2 - b}

and the corner b = c = 0 is the plain diagonal crossing.  Writing
c = b + t(a - 2) maps DOM(a) onto the unit square, where the objective is
concave, so nested bounded line searches find the global maximum.

Sums ``conjugate_*`` give sup over a >= 2 of a * (psi(a) - f); the solver
only needs those, and most of them are closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .entropy import DomainError, entropy_G, hat_kappa, kappa_block, kappa_diag, path_rate
from .interface import HatKappaProfile, InteractionPoint, InterfaceProfile, interface_profile

A_MAX = 256.0
XATOL = 1e-11


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExcursionPair:
    b: float
    c: float
    a: float

    @property
    def slope(self):
        return self.c / self.b if self.b > 0 else math.inf


@dataclass(frozen=True)
class BlockFreeEnergy:
    kind: str
    a: float
    value: float
    maximizer: ExcursionPair | None = None
    stderr: float = 0.0
    uncertain: bool = False


@dataclass(frozen=True)
class Margin:
    value: float
    stderr: float
    mu: float

    def sign(self, width=2.0):
        """+1 or -1, or 0 when the noise band straddles zero."""
        if self.value - width * self.stderr > 0:
            return 1
        if self.value + width * self.stderr <= 0:
            return -1
        return 0


def _check_a(a, strict=False):
    if not math.isfinite(a) or a < 2 or (strict and a == 2):
        raise DomainError(f"aspect ratio must be {'>' if strict else '>='} 2, got {a}")


def psi_AA(a) -> BlockFreeEnergy:
    _check_a(a)
    return BlockFreeEnergy("AA", a, kappa_diag(a))


def psi_BB(r, a) -> BlockFreeEnergy:
    _check_a(a)
    return BlockFreeEnergy("BB", a, kappa_diag(a) - 0.5 * r)


# ---------------------------------------------------------------------------
# excursion variational problem at fixed a


def _excursion_total(h, cross_shift, a, b, c):
    """a * objective at (b, c); h(mu) = mu * interface free energy."""
    head = b * h(c / b) if b > 0 else 0.0
    rest = a - c
    return head + rest * (cross_shift + kappa_block(rest, 1.0 - b))


def _maximize_excursion(h, cross_shift, a, start=None):
    """Maximize over DOM(a); returns (a * value, b, c)."""
    span = a - 2.0

    def total(b, t):
        b = min(max(b, 0.0), 1.0)
        t = min(max(t, 0.0), 1.0)
        return _excursion_total(h, cross_shift, a, b, b + t * span)

    corner = total(0.0, 0.0)
    if start is not None:
        b0, c0 = start
        t0 = (c0 - b0) / span if span > 0 else 0.0
        # the optimum often sits just inside a face, where a simplex stalls;
        # a bounded quasi-Newton pass first, then a simplex polish
        box = [(0.0, 1.0), (0.0, 1.0)]
        res = minimize(lambda z: -total(z[0], z[1]), x0=[b0, t0], method="L-BFGS-B",
                       bounds=box, options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 2000})
        res = minimize(lambda z: -total(z[0], z[1]), x0=res.x, method="Nelder-Mead",
                       bounds=box, options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
        b, t = res.x
        best = -res.fun
        if corner >= best:
            return corner, 0.0, 0.0
        return best, b, b + t * span

    def inner(b):
        if span == 0:
            return total(b, 0.0), 0.0
        res = minimize_scalar(lambda t: -total(b, t), bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": XATOL})
        cand = [(-res.fun, res.x), (total(b, 0.0), 0.0), (total(b, 1.0), 1.0)]
        return max(cand)

    res = minimize_scalar(lambda b: -inner(b)[0], bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": XATOL})
    best_b = res.x
    best, best_t = inner(best_b)
    for b_end in (1.0,):
        val, t_end = inner(b_end)
        if val > best:
            best, best_b, best_t = val, b_end, t_end
    if corner >= best - 1e-14:
        return corner, 0.0, 0.0
    return best, best_b, best_b + best_t * span


def _hat_h(mu):
    return mu * hat_kappa(mu)


def psi_BA_hat(r, a, start=None) -> BlockFreeEnergy:
    """BA crossing where the interface stretch uses the path entropy only."""
    _check_a(a)
    total, b, c = _maximize_excursion(_hat_h, -0.5 * r, a, start)
    return BlockFreeEnergy("BA_hat", a, total / a, ExcursionPair(b, c, a))


def psi_cross(kind, point: InteractionPoint, a, phi: InterfaceProfile | None = None,
              start=None) -> BlockFreeEnergy:
    """AB or BA crossing with the quenched interface free energy."""
    if kind not in ("AB", "BA"):
        raise ValueError("kind must be 'AB' or 'BA'")
    _check_a(a)
    if phi is None:
        phi = interface_profile(point)
    shift = -0.5 * point.r if kind == "BA" else 0.0

    def h(mu):
        return mu * float(phi.surrogate(mu))

    total, b, c = _maximize_excursion(h, shift, a, start)
    pair = ExcursionPair(b, c, a)
    err = 0.0
    uncertain = False
    if b > 0:
        err = c * float(phi.stderr(c / b)) / a
        corner = a * (kappa_diag(a) + shift)
        uncertain = (total - corner) / a < 2 * err
    return BlockFreeEnergy(kind, a, total / a, pair, err, uncertain)


def excursion_criterion(point: InteractionPoint, a, which, phi: InterfaceProfile | None = None) -> Margin:
    """Sign test for a strict gain from interface excursions.

    ``AB_vs_AA``: sup over mu of phi(mu) - G(mu, a).
    ``BAhat_vs_BB``: sup over mu of hat_kappa(mu) + r/2 - G(mu, a).
    """
    _check_a(a, strict=True)

    def G(mu):
        return entropy_G(mu, a)

    if which == "AB_vs_AA":
        if phi is None:
            phi = interface_profile(point)
        val, err, mu = phi.sup_against(G)
    elif which == "BAhat_vs_BB":
        val, err, mu = HatKappaProfile().sup_against(G, shift=0.5 * point.r)
    else:
        raise ValueError(f"unknown criterion {which!r}")
    return Margin(val, err, mu)


@dataclass(frozen=True)
class LocalizationResult:
    localized: bool | None
    diff: float
    stderr: float
    mu: float
    maximizer: ExcursionPair


def localization_test(point: InteractionPoint, a, phi: InterfaceProfile | None = None,
                      band=2.0) -> LocalizationResult:
    """Does phi^I exceed hat_kappa at the slope of the BA_hat maximizer?

    ``localized`` is None when the noise band straddles zero.  Without an
    interface stretch (b = 0) the answer is False.
    """
    _check_a(a, strict=True)
    pair = psi_BA_hat(point.r, a).maximizer
    if pair.b == 0.0:
        return LocalizationResult(False, 0.0, 0.0, math.inf, pair)
    if phi is None:
        phi = interface_profile(point)
    mu = pair.slope
    diff = float(phi.value(mu) - hat_kappa(mu))
    err = float(phi.stderr(mu))
    if diff - band * err > 0:
        verdict = True
    elif diff + band * err <= 0 or (phi.exact and diff <= 0):
        verdict = False
    else:
        verdict = None
    return LocalizationResult(verdict, diff, err, mu, pair)


# ---------------------------------------------------------------------------
# conjugates sup_a a * (psi(a) - f)


@dataclass(frozen=True)
class Conjugate:
    value: float
    a: float
    pair: ExcursionPair | None = None
    stderr: float = 0.0


def _diag_conjugate(s):
    """sup over a >= 2 of a * kappa(a,1) - s * a, closed form."""
    if s <= 0:
        raise DomainError("free-energy trial value must make the tilt positive")
    a = 2.0 / -math.expm1(-2.0 * s)
    return 2.0 * math.log(2.0) - math.log(math.expm1(2.0 * s)), a


def conjugate_AA(f) -> Conjugate:
    val, a = _diag_conjugate(f)
    return Conjugate(val, a)


def conjugate_BB(r, f) -> Conjugate:
    val, a = _diag_conjugate(f + 0.5 * r)
    return Conjugate(val, a)


def crossing_conjugate(width, s):
    """sup over a' >= 1 + width of a' * kappa(a', width) - s * a'.

    The optimum solves dR/dv = -log(q)/2 = s, so q = exp(-2s) and the
    saddle-point quadratic gives the vertical length v in closed form.
    Returns (value, a').
    """
    if s <= 0:
        raise DomainError("tilt must be positive")
    if width <= 0:
        return -s, 1.0
    q = math.exp(-2.0 * s)
    v = math.sqrt(1.0 + 4.0 * width * width * q / (1.0 - q) ** 2)
    a = v + width
    return float(path_rate(v, 1.0, width)) - s * a, a


def interface_conjugate_hat(f):
    """sup over mu >= 1 of mu * hat_kappa(mu) - f * mu, closed form."""
    if f <= 0:
        raise DomainError("tilt must be positive")
    q = math.exp(-2.0 * f)
    mu = 1.0 + 2.0 * math.sqrt(q) / (1.0 - q)
    return float(path_rate(mu - 1.0, 0.0, 1.0)) - f * mu, mu


def _excursion_conjugate(head, shift, f):
    """sup over b of b * head + crossing_conjugate(1 - b, f - shift)."""
    s = f - shift

    def val(b):
        return b * head + crossing_conjugate(1.0 - b, s)[0]

    res = minimize_scalar(lambda b: -val(b), bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    cands = [(val(0.0), 0.0), (val(1.0), 1.0), (-res.fun, res.x)]
    best, b = max(cands)
    return best, b


def conjugate_BA_hat(r, f) -> Conjugate:
    head, mu = interface_conjugate_hat(f)
    best, b = _excursion_conjugate(head, -0.5 * r, f)
    a_cross = crossing_conjugate(1.0 - b, f + 0.5 * r)[1]
    c = b * mu
    return Conjugate(best, c + a_cross, ExcursionPair(b, c, c + a_cross))


def conjugate_cross(kind, point: InteractionPoint, f, phi: InterfaceProfile) -> Conjugate:
    head, mu = phi.conjugate(f)
    shift = -0.5 * point.r if kind == "BA" else 0.0
    best, b = _excursion_conjugate(head, shift, f)
    a_cross = crossing_conjugate(1.0 - b, f - shift)[1]
    c = b * mu
    err = c * float(phi.stderr(mu)) if b > 0 else 0.0
    return Conjugate(best, c + a_cross, ExcursionPair(b, c, c + a_cross), err)
