import csv
import itertools
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from copolymer_emulsion.entropy import (
    DomainError,
    ResourceError,
    count_block_paths,
    count_interface_paths,
    entropy_G,
    extrapolate_rate,
    hat_kappa,
    kappa_block,
    kappa_block_grad,
    kappa_diag,
    kappa_diag_derivatives,
    path_rate,
)

LOG2 = math.log(2.0)


def _walks(n):
    for seq in itertools.product("RUD", repeat=n):
        s = "".join(seq)
        if "UD" not in s and "DU" not in s:
            yield s


def _listed_block_count(L, a, b):
    """Count block paths by listing all step sequences."""
    n, nb = round(a * L), round(b * L)
    total = 0
    for s in _walks(n):
        x = y = 0
        for ch in s:
            x += ch == "R"
            y += (ch == "U") - (ch == "D")
            if not -L < y <= L:
                break
        else:
            total += x == nb and y == L
    return total


# -- closed forms -----------------------------------------------------------


@pytest.mark.parametrize("a,expected", [(2, LOG2), (4, LOG2), (2.5, 0.5 * math.log(5))])
def test_kappa_diag_values(a, expected):
    assert kappa_diag(a) == pytest.approx(expected, abs=1e-14)


def test_kappa_diag_rejects_below_two():
    with pytest.raises(DomainError):
        kappa_diag(1.999)


def test_kappa_diag_vectorized_matches_scalar():
    grid = np.linspace(2, 20, 7)
    assert np.allclose(kappa_diag(grid), [kappa_diag(a) for a in grid], rtol=0, atol=1e-15)


def test_derivatives_at_three():
    d_a, d_b = kappa_diag_derivatives(3.0)
    assert d_a == pytest.approx(-LOG2 / 9, abs=1e-14)
    assert d_b == pytest.approx(math.log(16 / 3) / 6, abs=1e-14)


def test_derivatives_reject_two():
    with pytest.raises(DomainError):
        kappa_diag_derivatives(2.0)


@pytest.mark.parametrize("a", [2.3, 3.0, 5.0, 11.0])
def test_derivatives_against_finite_differences(a):
    h = 1e-5
    d_a, d_b = kappa_diag_derivatives(a)
    assert d_a == pytest.approx((kappa_diag(a + h) - kappa_diag(a - h)) / (2 * h), abs=1e-8)
    # second argument from the two-argument rate, one-sided at b = 1
    one_sided = (kappa_block(a, 1.0) - kappa_block(a, 1.0 - h)) / h
    assert d_b == pytest.approx(one_sided, abs=1e-4)


@pytest.mark.parametrize("mu,a,expected", [
    (1, 3, math.log(4)),
    (2, 3, 0.25 * math.log(3) + 0.5 * math.log(4)),
])
def test_G_values(mu, a, expected):
    assert entropy_G(mu, a) == pytest.approx(expected, abs=1e-14)


def test_G_limits_and_edges():
    assert entropy_G(1e12, 3.0) == pytest.approx(0.5 * math.log(3), abs=1e-10)
    assert entropy_G(1.0, 2.0) == pytest.approx(LOG2, abs=1e-15)
    with np.errstate(invalid="ignore", divide="ignore"):
        assert entropy_G(2.0, 2.0) == math.inf


@given(st.floats(1.0, 50.0), st.floats(2.01, 40.0))
def test_G_identity(mu, a):
    d_a, d_b = kappa_diag_derivatives(a)
    rhs = kappa_diag(a) + a * d_a + (a / mu) * d_b
    assert abs(entropy_G(mu, a) - rhs) < 1e-12


@given(st.floats(2.0, 40.0), st.floats(2.01, 40.0))
def test_G_lower_bounds(mu, x):
    g = entropy_G(mu, x)
    if mu >= 2:
        assert g >= 0.25 * math.log(x / (x - 2)) - 1e-14
    assert g >= math.log(2 * (x - 1)) / mu - 1e-14 > -1e-14


def test_a_kappa_strictly_concave():
    a = np.linspace(2.01, 40, 400)
    h = 1e-3
    second = (a + h) * kappa_diag(a + h) - 2 * a * kappa_diag(a) + (a - h) * kappa_diag(a - h)
    assert np.all(second < 0)


def test_kappa_block_matches_diag_on_b_one():
    for a in (2.0, 2.5, 3.0, 7.0, 30.0):
        assert kappa_block(a, 1.0) == pytest.approx(kappa_diag(a), abs=1e-12)


def test_kappa_block_on_boundary_counts_interleavings():
    # with a = 1 + b only up and right steps remain, in any order
    for b in (0.0, 0.5, 2.0):
        a = 1 + b
        interleave = (a * math.log(a) - (b * math.log(b) if b else 0.0)) / a
        assert kappa_block(a, b) == pytest.approx(interleave, abs=1e-12)
    L = 6
    assert count_block_paths(L, 1.5, 0.5) == math.comb(9, 3)


def test_kappa_block_domain():
    with pytest.raises(DomainError):
        kappa_block(1.4, 0.5)
    with pytest.raises(DomainError):
        kappa_block(3.0, -0.1)


def test_kappa_block_gradient_consistent_with_diag():
    d_a, _ = kappa_block_grad(3.0, 0.999999)
    assert d_a == pytest.approx(kappa_diag_derivatives(3.0)[0], abs=1e-4)


def test_path_rate_symmetric_in_height():
    v = np.array([3.0, 5.0, 8.0])
    assert np.allclose(path_rate(v, 1.0, 2.0), path_rate(v, -1.0, 2.0))


def test_hat_kappa_values():
    assert hat_kappa(1.0) == 0.0
    # golden: three-term extrapolation of exact counts, 2*b steps to (b, 0), b = 4..14 even
    assert hat_kappa(2.0) == pytest.approx(0.8782266797128601, abs=2e-2)
    big = 1e6
    assert hat_kappa(big) == pytest.approx(math.log(big) / big, rel=0.2)


def test_hat_kappa_domain():
    with pytest.raises(DomainError):
        hat_kappa(0.99)


def test_mu_hat_kappa_concave_nondecreasing():
    mu = np.linspace(1.0, 100.0, 2000)
    h = mu * hat_kappa(mu)
    assert np.all(np.diff(h) >= -1e-12)
    assert np.all(np.diff(h, 2) < 1e-12)
    assert np.all(hat_kappa(mu) <= math.log(3))


def test_hat_kappa_decreasing_after_peak():
    mu = np.linspace(1.0, 100.0, 5000)
    vals = hat_kappa(mu)
    k = int(np.argmax(vals))
    assert np.all(np.diff(vals[k:]) <= 1e-15)


# -- exact counting -----------------------------------------------------------


def test_block_counts_fixture():
    with open(os.path.join(FIXTURES, "path_counts.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    for row in rows:
        L, a, b = int(row["L"]), float(row["a"]), float(row["b"])
        if round(a * L, 9) != round(a * L):
            continue
        assert count_block_paths(L, a, b) == int(row["count"])


@pytest.mark.parametrize("L,a,b", [(1, 3, 1), (2, 1, 1), (2, 3, 1), (2, 4, 1), (3, 4, 1)])
def test_block_counts_against_listing(L, a, b):
    assert count_block_paths(L, a, b) == _listed_block_count(L, a, b)


def test_block_count_examples():
    assert count_block_paths(1, 3, 1) == 0
    assert count_block_paths(2, 1, 1) == 0
    assert count_block_paths(2, 3, 1) == 7


def test_interface_counts():
    for L in (1, 3):
        assert count_interface_paths(L, 2, 2) == 1
    assert count_interface_paths(1, 5, 2) == 0
    listed = sum(1 for s in _walks(4) if s.count("R") == 2 and s.count("U") == s.count("D"))
    assert count_interface_paths(1, 4, 2) == listed == 6


def test_counting_resource_bound():
    with pytest.raises(ResourceError):
        count_block_paths(4000, 3, 1)


def test_non_integer_steps_rejected():
    with pytest.raises(DomainError):
        count_block_paths(3, 2.5, 1)


def test_kappa_block_against_enumeration():
    # golden: three-term extrapolation of log counts at L = 4, 8, 12
    golden = 0.5403101289639124
    Ls = [4, 8, 12]
    vals = [math.log(count_block_paths(L, 3, 0.5)) / (3 * L) for L in Ls]
    assert extrapolate_rate(Ls, vals) == pytest.approx(golden, abs=1e-12)
    assert kappa_block(3, 0.5) == pytest.approx(golden, abs=2e-2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2), st.floats(0.1, 0.9))
def test_counts_never_exceed_rate_bound(k, b_frac):
    # log |W| <= aL * kappa + O(log L): check the crude bound count <= 3^(aL)
    L = 4
    a = 2 + k
    b = round(b_frac * L) / L
    n = count_block_paths(L, a, b)
    assert 0 <= n <= 3 ** (a * L)
