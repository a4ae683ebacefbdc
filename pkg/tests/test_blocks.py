import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FAST_ESTIMATOR
from copolymer_emulsion.blocks import (
    Margin,
    conjugate_AA,
    conjugate_BA_hat,
    conjugate_BB,
    conjugate_cross,
    excursion_criterion,
    localization_test,
    psi_AA,
    psi_BA_hat,
    psi_BB,
    psi_cross,
)
from copolymer_emulsion.entropy import DomainError, hat_kappa, kappa_block, kappa_diag
from copolymer_emulsion.interface import InteractionPoint, PhiCache, phi_I_table


def _dense_excursion(h, shift, a, nb=300, nc=300):
    """Grid search of [h(c/b) b + (a-c)(shift + kappa(a-c, 1-b))] / a over DOM(a)."""
    best = a * (kappa_diag(a) + shift)
    for b in np.linspace(1e-4, 1.0, nb):
        c_hi = a - 2.0 + b
        if c_hi <= b:
            continue
        c = np.linspace(b, c_hi, nc)
        rest = a - c
        vals = b * h(c / b) + rest * (shift + kappa_block(rest, np.full_like(rest, 1.0 - b)))
        best = max(best, float(np.max(vals)))
    return best / a


def _hat_h(mu):
    return mu * hat_kappa(mu)


@pytest.fixture(scope="module")
def localized():
    pt = InteractionPoint(3.0, 2.0)
    return pt, phi_I_table(pt, FAST_ESTIMATOR, PhiCache())


# -- closed forms -------------------------------------------------------------------


def test_psi_closed_forms():
    assert psi_AA(4).value == pytest.approx(math.log(2), abs=1e-14)
    assert psi_BB(0.0, 3.0).value == psi_AA(3.0).value
    assert psi_BB(1.0, 2.5).value == pytest.approx(0.5 * math.log(5) - 0.5, abs=1e-14)
    assert psi_BB(1.0, 2.5).value == pytest.approx(0.304719, abs=1e-6)
    with pytest.raises(DomainError):
        psi_AA(1.5)


@pytest.mark.parametrize("f", [0.05, 0.3, 1.0])
def test_diag_conjugates_against_grid(f):
    a = np.linspace(2.0, 400.0, 400001)
    dense = np.max(a * (kappa_diag(a) - f))
    assert conjugate_AA(f).value == pytest.approx(dense, abs=1e-6)
    dense_bb = np.max(a * (kappa_diag(a) - 0.25 - f))
    assert conjugate_BB(0.5, f).value == pytest.approx(dense_bb, abs=1e-6)


# -- hat excursion --------------------------------------------------------------------


def test_psi_BA_hat_no_gain_at_zero_coupling():
    res = psi_BA_hat(0.0, 3.0)
    gain = res.value - psi_BB(0.0, 3.0).value
    assert 0.0 <= gain <= 1e-6
    assert _dense_excursion(_hat_h, 0.0, 3.0) - psi_BB(0.0, 3.0).value <= 1e-6


@pytest.mark.parametrize("r,a", [(5.0, 3.0), (2.0, 4.0), (1.0, 6.0), (3.0, 2.5)])
def test_psi_BA_hat_against_dense_grid(r, a):
    res = psi_BA_hat(r, a)
    dense = _dense_excursion(_hat_h, -0.5 * r, a)
    assert res.value >= dense - 1e-9
    assert res.value - dense < 2e-3


def test_psi_BA_hat_strict_gain_at_large_r():
    a = 3.0
    res = psi_BA_hat(5.0, a)
    assert res.value > psi_BB(5.0, a).value
    assert res.maximizer.b > 0
    assert excursion_criterion(InteractionPoint(5.0, 0.0), a, "BAhat_vs_BB").value > 0


def test_maximizer_unique_from_random_starts():
    rng = np.random.default_rng(11)
    a = 3.5
    ref = psi_BA_hat(3.0, a).maximizer
    for _ in range(5):
        b = rng.uniform(0.05, 0.95)
        c = b + rng.uniform(0.05, 0.95) * (a - 2.0)
        pair = psi_BA_hat(3.0, a, start=(b, c)).maximizer
        assert pair.b == pytest.approx(ref.b, abs=1e-6)
        assert pair.c == pytest.approx(ref.c, abs=1e-6)


def test_a_psi_hat_concave():
    a = np.linspace(2.05, 12.0, 60)
    vals = np.array([x * psi_BA_hat(2.0, x).value for x in a])
    assert np.all(np.diff(vals, 2) <= 1e-8)


def test_hat_conjugate_matches_grid():
    f = 0.5
    r = 2.0
    a = np.linspace(2.0, 60.0, 291)
    dense = max(x * (psi_BA_hat(r, x).value - f) for x in a)
    conj = conjugate_BA_hat(r, f)
    assert conj.value >= dense - 1e-8
    assert conj.value - dense < 1e-3


# -- criteria -----------------------------------------------------------------------


def test_criteria_at_zero_beta_use_hat_kappa():
    pt = InteractionPoint(0.05, 0.0)
    m = excursion_criterion(pt, 3.0, "AB_vs_AA")
    assert m.stderr == 0.0
    assert m.value < 0
    assert psi_cross("AB", pt, 3.0).value == pytest.approx(psi_AA(3.0).value, abs=1e-9)


def test_criterion_rejects_unknown():
    with pytest.raises(ValueError):
        excursion_criterion(InteractionPoint(1, 0), 3.0, "nope")
    with pytest.raises(DomainError):
        excursion_criterion(InteractionPoint(1, 0), 2.0, "BAhat_vs_BB")


def test_margin_sign():
    assert Margin(1.0, 0.1, 2.0).sign() == 1
    assert Margin(-1.0, 0.1, 2.0).sign() == -1
    assert Margin(0.1, 0.1, 2.0).sign() == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 6.0), st.floats(2.2, 10.0))
def test_criterion_sign_matches_psi_comparison(r, a):
    # two independent routes: the sup criterion and the 2D optimizer
    m = excursion_criterion(InteractionPoint(r, 0.0), a, "BAhat_vs_BB")
    gain = psi_BA_hat(r, a).value - psi_BB(r, a).value
    if m.value > 1e-4:
        assert gain > 0
    elif m.value < -1e-4:
        assert gain <= 1e-9


# -- quenched crossings ----------------------------------------------------------


def test_annealed_crossing_equals_hat():
    pt = InteractionPoint(2.0, 0.2)
    for a in (2.5, 4.0):
        assert psi_cross("BA", pt, a).value == pytest.approx(psi_BA_hat(pt.r, a).value, abs=1e-9)


@pytest.mark.parametrize("a", [2.5, 3.0, 5.0])
def test_crossing_chain(localized, a):
    pt, tab = localized
    ba = psi_cross("BA", pt, a, tab)
    hat = psi_BA_hat(pt.r, a)
    bb = psi_BB(pt.r, a)
    assert bb.value <= hat.value + 1e-12
    assert hat.value <= ba.value + 2 * ba.stderr + 1e-9


def test_crossing_decay_and_growth(localized):
    pt, tab = localized
    for kind in ("AB", "BA"):
        v64 = psi_cross(kind, pt, 64.0, tab).value
        v8 = psi_cross(kind, pt, 8.0, tab).value
        assert v64 < 0.1
        assert 64 * v64 > 8 * v8


def test_cross_conjugate_against_grid(localized):
    pt, tab = localized
    f = 0.7
    a = np.linspace(2.0, 40.0, 191)
    dense = max(x * (psi_cross("AB", pt, x, tab).value - f) for x in a)
    conj = conjugate_cross("AB", pt, f, tab)
    assert conj.value >= dense - 1e-6
    assert conj.value - dense < 5e-3


def test_localization_examples(localized):
    pt, tab = localized
    assert localization_test(InteractionPoint(2.0, 0.1), 3.0).localized is False
    res = localization_test(pt, 3.0, tab)
    direct = psi_cross("BA", pt, 3.0, tab).value - psi_BA_hat(pt.r, 3.0).value
    if res.localized:
        assert direct > 0
    # no excursion: not localized by convention
    flat = localization_test(InteractionPoint(0.0, 0.0), 3.0)
    assert flat.localized is False and flat.mu == math.inf


def test_large_beta_localizes():
    pt = InteractionPoint(9.0, 8.0)
    tab = phi_I_table(pt, FAST_ESTIMATOR, PhiCache())
    assert tab.value(1.25) >= 8.0 / 8 - 2 * tab.stderr(1.25)
    assert localization_test(pt, 3.0, tab).localized is True


def test_cross_kind_validation():
    with pytest.raises(ValueError):
        psi_cross("AA", InteractionPoint(1, 0), 3.0)
