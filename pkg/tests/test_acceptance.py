"""Acceptance suite: one recorded pass/fail line per criterion.

Each test gathers its sub-checks, records a summary line (printed at the
end of the run) and then asserts.  Criteria 3 and 5-7 run at the default
estimator, frequency and finite-model settings and take tens of minutes.
"""
import math
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import record
from copolymer_emulsion.entropy import (
    count_block_paths,
    count_interface_paths,
    entropy_G,
    extrapolate_rate,
    hat_kappa,
    kappa_diag,
    kappa_diag_derivatives,
)
from copolymer_emulsion.finite_model import convergence_study, finite_log_partition, \
    enumerate_log_partition, make_instance
from copolymer_emulsion.frequencies import rho_star_estimate
from copolymer_emulsion.interface import InteractionPoint, interface_profile, phi_I_table
from copolymer_emulsion.phases import (
    PhaseConfig,
    alpha_star,
    beta_c1,
    beta_c2,
    classify,
    lower_bound_curve,
    transition_gap_probe,
)
from copolymer_emulsion.solver import solve_f_D1, solve_f_D2, solve_f_full, solve_f_L1

P = 0.3
LOG2 = math.log(2.0)


def _report(criterion, checks):
    failed = [name for name, ok in checks.items() if not ok]
    detail = "all sub-checks hold" if not failed else "failed: " + ", ".join(failed)
    record(criterion, not failed, f"({len(checks)} sub-checks) {detail}")
    assert not failed, failed


@pytest.fixture(scope="module")
def phase_cfg():
    return PhaseConfig()


@pytest.fixture(scope="module")
def rho(phase_cfg):
    return rho_star_estimate(P, phase_cfg.freq)


@pytest.fixture(scope="module")
def a_star(phase_cfg, rho):
    return alpha_star(P, rho, phase_cfg)


# ---------------------------------------------------------------------------


def test_criterion_1_closed_forms():
    start = time.perf_counter()
    checks = {
        "kappa(2,1) = log 2": abs(kappa_diag(2.0) - LOG2) < 1e-15,
        "kappa(4,1) = log 2": abs(kappa_diag(4.0) - LOG2) < 1e-15,
        "kappa(5/2,1) = log(5)/2": abs(kappa_diag(2.5) - 0.5 * math.log(5)) < 1e-15,
    }
    res = minimize_scalar(lambda a: -kappa_diag(a), bounds=(2.0, 8.0), method="bounded",
                          options={"xatol": 1e-10})
    checks["argmax of kappa(., 1) at 5/2"] = abs(res.x - 2.5) < 1e-6
    checks["d_a kappa vanishes at 5/2"] = abs(kappa_diag_derivatives(2.5)[0]) < 1e-15
    worst = 0.0
    for mu in (1.0, 1.5, 2.0, 9 / 8, 4.0, 17.0):
        for a in (2.1, 2.5, 3.0, 5.0, 12.0):
            d_a, d_b = kappa_diag_derivatives(a)
            worst = max(worst, abs(entropy_G(mu, a) - (kappa_diag(a) + a * d_a + (a / mu) * d_b)))
    checks["G identity residual < 1e-12"] = worst < 1e-12
    checks["lower bound at r = 0"] = lower_bound_curve(0.0) == 0.0
    checks["lower bound at r = log 2"] = \
        abs(lower_bound_curve(LOG2) - math.log(1 + math.sqrt(0.5))) < 1e-14
    checks["lower bound as r -> inf"] = abs(lower_bound_curve(math.inf) - LOG2) < 1e-15 \
        and abs(lower_bound_curve(80.0) - LOG2) < 1e-15
    checks["runtime < 1 s"] = time.perf_counter() - start < 1.0
    _report(1, checks)


def test_criterion_2_enumeration_agreement():
    # L = 4 is too small for the three-term fit near a = 6; sizes stay <= 16
    Ls = (8, 12, 16)
    checks = {}
    for a in (2.5, 3.0, 3.5, 4.0, 5.0, 6.0):
        vals = [math.log(count_block_paths(L, a, 1)) / (a * L) for L in Ls]
        checks[f"kappa_diag({a})"] = abs(extrapolate_rate(Ls, vals) - kappa_diag(a)) < 2e-2
    for mu in (1.5, 2.0, 3.0, 4.0, 6.0, 8.0):
        vals = [math.log(count_interface_paths(L, mu, 1)) / (mu * L) for L in Ls]
        checks[f"hat_kappa({mu})"] = abs(extrapolate_rate(Ls, vals) - hat_kappa(mu)) < 2e-2
    _report(2, checks)


def test_criterion_3_interface_identities():
    checks = {}
    # the profile shortcut returns hat_kappa inside the annealed region, so
    # the estimator itself is run at every point here
    tables = {}
    for alpha in (0.5, 1.0, 2.0):
        tables[alpha] = phi_I_table(InteractionPoint(alpha, 0.0))
    for alpha, mu in ((0.5, 1.5), (0.5, 3.0), (1.0, 2.0), (1.0, 5.0), (2.0, 1.25), (2.0, 4.0)):
        est = tables[alpha].estimate(mu)
        checks[f"phi({alpha},0;{mu}) = hat_kappa"] = abs(est.value - hat_kappa(mu)) <= 2 * est.stderr
    inside = [InteractionPoint.on_diagonal(r, 0.9 * lower_bound_curve(r)) for r in (0.3, 1.0, 3.0)]
    inside.append(InteractionPoint(0.5, -0.2))
    for pt in inside:
        est = phi_I_table(pt).estimate(2.0)
        checks[f"phi = hat_kappa inside the annealed region at ({pt.alpha:.3g},{pt.beta:.3g})"] = \
            abs(est.value - hat_kappa(2.0)) <= 2 * est.stderr
    big = {}
    for beta in (4.0, 8.0):
        tab = phi_I_table(InteractionPoint(beta + 1.0, beta))
        big[beta] = tab
        est = tab.estimate(9 / 8)
        checks[f"phi(.;9/8) >= beta/8 at beta = {beta}"] = est.value + 2 * est.stderr >= beta / 8
    # the profile handed to the solvers never falls below hat_kappa; raw
    # estimates may, but only as often as Gaussian noise explains
    z_all = []
    surrogate_ok = True
    for tab in list(tables.values()) + list(big.values()):
        gap = tab.values - hat_kappa(tab.mus)
        z_all.extend(gap[1:] / tab.errors[1:])
        surrogate_ok &= bool(np.all(tab.surrogate(tab.mus) >= hat_kappa(tab.mus)))
    z_all = np.array(z_all)
    checks["profile >= hat_kappa at every sampled slope"] = surrogate_ok
    checks["raw breaches of the 2 stderr band at chance rate"] = np.mean(z_all < -2) <= 0.05
    checks["no raw estimate below hat_kappa by 4 stderr"] = z_all.min() > -4
    _report(3, checks)


def test_criterion_4_free_energy_structure():
    checks = {}
    for p in (0.1, 0.3, 0.5):
        tri = rho_star_estimate(p)
        checks[f"f_D1(0) = log(5)/2 at p = {p}"] = abs(solve_f_D1(0.0, tri).value - 0.5 * math.log(5)) < 1e-10
    tri = rho_star_estimate(P)
    worst = max(max(abs(v) for v in solve_f_D1(r, tri).residuals.values())
                for r in (0.05, 0.3, 1.0, 3.0, 10.0))
    checks["stationarity residuals < 1e-8"] = worst < 1e-8
    rng = random.Random(20)
    bad = []
    for _ in range(50):
        alpha = rng.uniform(0.0, 4.0)
        beta = rng.uniform(-alpha, alpha)
        pt = InteractionPoint(alpha, beta)
        phi = interface_profile(pt)
        d1 = solve_f_D1(pt.r, tri).value
        d2 = solve_f_D2(pt.r, tri, check_stationarity=False).value
        l1 = solve_f_L1(pt, tri, phi)
        full = solve_f_full(pt, P, phi=phi)
        tol = 1e-3 + 2 * max(l1.stderr, full.stderr)
        if not (d1 <= d2 + 1e-12 and d2 <= l1.value + 1e-12 and l1.value <= full.value + tol):
            bad.append((alpha, beta))
    checks["chain D1 <= D2 <= L1 <= full at 50 cone points"] = not bad
    drift = 0.0
    for r in (0.1, 1.0, 2.5):
        ref1, ref2 = solve_f_D1(r, tri).value, solve_f_D2(r, tri, check_stationarity=False).value
        for beta in (-0.5 * r, 0.0, 0.7, 3.0):
            pt = InteractionPoint.on_diagonal(r, beta)
            drift = max(drift, abs(solve_f_D1(pt.r, tri).value - ref1),
                        abs(solve_f_D2(pt.r, tri, check_stationarity=False).value - ref2))
    checks["f_D1, f_D2 invariant along diagonals"] = drift < 1e-10
    _report(4, checks)


def test_criterion_5_phase_structure(phase_cfg, rho, a_star):
    checks = {
        "alpha* > 0": a_star.value > 0,
        "root residual < 1e-6": abs(a_star.residual) < 1e-6,
        "(alpha*, 0) is D1": classify(InteractionPoint(a_star.value, 0.0), P, phase_cfg, rho).label == "D1",
        "(alpha* + 0.1, 0) is D2":
            classify(InteractionPoint(a_star.value + 0.1, 0.0), P, phase_cfg, rho).label == "D2",
    }
    c1 = {r: beta_c1(r, P, phase_cfg, a_star) for r in (0.5 * a_star.value, a_star.value)}
    c2 = {r: beta_c2(r, P, phase_cfg, a_star) for r in (a_star.value + 0.01, 1.0, 2.0)}
    checks["critical curves above the lower bound"] = all(
        pt.beta >= lower_bound_curve(r) for r, pt in list(c1.items()) + list(c2.items()))
    near, at = c2[a_star.value + 0.01], c1[a_star.value]
    checks["beta_c2(alpha* + 0.01) <= beta_c1(alpha*) + band"] = \
        near.beta <= at.beta + near.uncertainty + at.uncertainty
    for name, r, pt in (("J1", 0.5 * a_star.value, c1[0.5 * a_star.value]), ("J2", 1.0, c2[1.0])):
        top = pt.beta - pt.uncertainty
        vals, errs = [], []
        for beta in np.linspace(-0.5 * r, top, 5):
            sol = solve_f_full(InteractionPoint.on_diagonal(r, float(beta)), P)
            vals.append(sol.value)
            errs.append(sol.stderr)
        checks[f"f constant on {name} segment at r = {r:.3g}"] = \
            np.var(vals) < (1e-3 + 2 * max(errs)) ** 2
    order = {"D1": 0, "D2": 0, "L1": 1, "L2": 2}
    for r in (0.5 * a_star.value, 1.0):
        seen = []
        for beta in (-0.5 * r, 0.0, 0.5, 1.0, 2.0, 4.0, 8.0):
            lab = classify(InteractionPoint.on_diagonal(r, beta), P, phase_cfg, rho)
            if not lab.uncertain:
                seen.append(order[lab.label])
        checks[f"labels monotone along r = {r:.3g}"] = seen == sorted(seen)
    _report(5, checks)


def test_criterion_6_transition_order(phase_cfg, a_star):
    checks = {}
    d12 = transition_gap_probe("D1D2", 0.0, P, cfg=phase_cfg, a_star=a_star)
    # "bounded below": gap / delta^2 stays positive and does not fade as delta shrinks
    ratios = [row.per_delta2 for row in d12.rows]
    checks["D1-D2 gap / delta^2 bounded below"] = min(ratios) > 0 and ratios[0] >= 0.5 * ratios[-1]
    checks["D1-D2 gaps shrink with delta"] = all(np.diff([row.gap for row in d12.rows]) > 0)
    d1l1 = transition_gap_probe("D1L1", 0.5 * a_star.value, P, cfg=phase_cfg, a_star=a_star)
    rows = d1l1.rows
    checks["D1-L1 gaps positive"] = all(row.gap > 0 for row in rows)
    checks["D1-L1 gap / delta decreases as delta -> 0"] = rows[0].per_delta < rows[-1].per_delta
    ratios = [row.per_delta2 for row in rows]
    checks["D1-L1 gap / delta^2 bounded below"] = min(ratios) > 0 and ratios[0] >= 0.5 * ratios[-1]
    checks["D1-L1 gaps shrink with delta"] = rows[0].gap < rows[-1].gap
    _report(6, checks)


def test_criterion_7_finite_model():
    checks = {}
    worst = 0.0
    for seed in range(3):
        inst = make_instance(16, 4, InteractionPoint(1.0, 0.2), 0.4, seed)
        worst = max(worst, abs(finite_log_partition(inst) - enumerate_log_partition(inst)))
    checks["transfer sum equals path listing at n = 16"] = worst < 1e-12
    for alpha, beta in ((0.5, 0.0), (1.0, 0.2), (2.0, 1.0)):
        pt = InteractionPoint(alpha, beta)
        rows = convergence_study(pt, P)
        spreads = [row.spread for row in rows]
        checks[f"spread shrinks at ({alpha},{beta})"] = all(np.diff(spreads) < 0)
        target = solve_f_full(pt, P).value
        checks[f"largest rung within 0.1 of f at ({alpha},{beta})"] = abs(rows[-1].mean - target) < 0.1
    _report(7, checks)


COMMANDS = [
    ["entropy", "--kappa-diag", "2,3", "--kappa", "3:0.5", "--hat-kappa", "2", "--G", "2:3"],
    ["freq", "--p", "0.3"],
    ["phi", "--alpha", "2", "--beta", "1", "--grid", "1.5,3"],
    ["blocks", "--alpha", "2", "--beta", "1", "--grid", "3,4"],
    ["solve", "--alpha", "2", "--beta", "1"],
    ["phase", "--grid", "0.05,0.5", "--beta-grid=-0.1,0.5", "--beta-tol", "0.1", "--allow-uncertain",
     "--L-ladder", "8,16", "--samples", "8"],
    ["probe-order", "--kind", "D1D2", "--deltas", "0.02,0.05"],
    ["validate", "--alpha", "1", "--beta", "0.2", "--ladder", "64:4,256:8", "--seeds", "3",
     "--tolerance", "1"],
]


def test_criterion_8_determinism(tmp_path):
    checks = {}
    env = dict(os.environ)
    env.pop("PHI_CACHE_PATH", None)
    for argv in COMMANDS:
        outputs = []
        for k in range(2):
            prefix = tmp_path / f"{argv[0]}-{k}" / "run"
            cmd = [sys.executable, "-m", "copolymer_emulsion.cli", *argv]
            stdout = subprocess.run(cmd, capture_output=True, env=env).stdout
            subprocess.run(cmd + ["--out", str(prefix)], capture_output=True, env=env)
            files = sorted(prefix.parent.iterdir())
            outputs.append((stdout, [f.name for f in files], [f.read_bytes() for f in files]))
        same = outputs[0] == outputs[1] and bool(outputs[0][0]) and len(outputs[0][1]) >= 2
        checks[f"{argv[0]} byte-identical"] = same
    _report(8, checks)
