"""Acceptance criteria A1-A8 at the default parameter point.

Every test prints one ``A<n> PASS|FAIL`` line with the measured figure of
merit, then asserts with the stated tolerance.
"""
import math

import numpy as np
import pytest

from conftest import dp_at
from optofb import model, oracle, report
from optofb import spectra as sp
from optofb.model import PhysicalConfig
from optofb.spectra import FeedbackSetting

GRID = np.geomspace(1e4, 1e8, 2000)
THETAS = (0.0, math.pi / 4, math.pi / 2)
TEMPS = (4.0, 70.0, 300.0)
OPT = FeedbackSetting("optimal_per_omega")
OMEGA_M = 1e6
# 500 rad/s spacing puts bins on the normal modes at omega_m +- Omega_e/2
BAND = np.linspace(0.5 * OMEGA_M, 1.5 * OMEGA_M, 2001)


@pytest.fixture
def verdict(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_a1_oracle_equivalence(verdict):
    res = report.oracle_comparison(PhysicalConfig(), GRID, THETAS, TEMPS, OPT, rel_tol=1e-9)
    worst = res["spectra"]
    by_gain = {}
    for case in res["cases"]:
        dev = max(case["max_rel_dev"][f] for f in report.SPECTRUM_FIELDS)
        by_gain[case["feedback"]] = max(by_gain.get(case["feedback"], 0.0), dev)
    detail = ("max rel dev " + ", ".join(f"{k}={v['max_rel_dev']:.2e}" for k, v in worst.items())
              + "; by gain " + ", ".join(f"{k}:{v:.2e}" for k, v in by_gain.items()))
    verdict("A1", res["passed"], detail)
    assert res["passed"], detail


def test_a2_qnd_identity(verdict):
    worst_cf = worst_or = 0.0
    for T in TEMPS:
        dp = dp_at(T)
        worst_cf = max(worst_cf, float(np.max(np.abs(sp.s_x0_out_fb(GRID, 0.0, dp) - 1))))
        worst_cf = max(worst_cf, float(np.max(np.abs(sp.s_x_out(GRID, 0.0, dp) - 1))))
        rows = oracle.oracle_rows(GRID, 0.0, 0.0, dp)
        worst_or = max(worst_or, max(abs(r.S_X0_out - 1) for r in rows))
    ok = worst_cf <= 1e-12 and worst_or <= 1e-12
    verdict("A2", ok, f"max |S_X0_out - 1| closed form {worst_cf:.2e}, oracle {worst_or:.2e}")
    assert ok


def test_a3_optimal_gain(verdict):
    res = report.optimality_scan(PhysicalConfig(), seed=20261016, n_draws=100,
                                 omega_range=(1e4, 1e8), T_range=(4.0, 300.0), tol=1e-12)
    detail = (f"{res['n_draws']} draws: order violations {res['order_violations']}, "
              f"max |S(lambda_opt) - S_min| {res['max_value_error']:.2e}, "
              f"strict sub-unity violations {res['strict_violations']}")
    verdict("A3", res["passed"], detail)
    assert res["passed"]


def test_a4_fig1_structure(verdict):
    w = np.union1d(GRID, BAND)
    in_band = (w >= 0.5 * OMEGA_M) & (w <= 1.5 * OMEGA_M)
    curves = {}
    for T in TEMPS:
        dp = dp_at(T)
        curves[T] = sp.s_x0_out_fb(w, sp.lambda_opt(w, dp), dp)
    order = bool(np.all(curves[300.0][in_band] >= curves[70.0][in_band] - 1e-10)
                 and np.all(curves[70.0][in_band] >= curves[4.0][in_band] - 1e-10))
    mins = {T: (float(w[np.argmin(S)]), float(S.min())) for T, S in curves.items()}
    located = all(0.5 * OMEGA_M <= m[0] <= 1.5 * OMEGA_M for m in mins.values())
    below = all(m[1] < 1 for m in mins.values())
    ok = order and located and below
    verdict("A4", ok, f"ordering {order}; minima (omega, S) "
            + ", ".join(f"{T:g}K: ({m[0]:.6g}, {m[1]:.4f})" for T, m in mins.items()))
    assert ok


def test_a5_thermal_equilibrium(verdict):
    res = report.equilibrium_residual(PhysicalConfig(), GRID, TEMPS, tol=1e-9)
    verdict("A5", res["passed"], f"max |S_IT/(k_B T/2R) - 1| = {res['max_residual']:.2e}")
    assert res["passed"]


def test_a6_uncertainty_scan(verdict):
    res = report.uncertainty_scan(PhysicalConfig(), GRID, TEMPS, OPT, tol=1e-9)
    detail = (f"min p46 {res['min_p46']:.12f}, min p47 {res['min_p47']:.12f} "
              f"(oracle {res['oracle_min_p46']:.12f}, {res['oracle_min_p47']:.12f})")
    verdict("A6", res["passed"], detail)
    assert res["passed"]


def test_a7_monte_carlo(verdict):
    worst = 1.0
    deterministic = True
    for T in TEMPS:
        dp = dp_at(T)
        lam = sp.lambda_opt(BAND, dp)
        ref = np.array([r.S_X0_out for r in oracle.oracle_rows(BAND, 0.0, lam, dp)])
        a = oracle.monte_carlo(dp, lam, 0.0, BAND, 4000, seed=7)
        worst = min(worst, oracle.mc_coverage(a, ref, "X0_out", 3.0))
        if T == 300.0:
            b = oracle.monte_carlo(dp, lam, 0.0, BAND, 4000, seed=7)
            deterministic = (a.mean.tobytes() == b.mean.tobytes()
                             and a.stderr.tobytes() == b.stderr.tobytes())
    ok = worst >= 0.99 and deterministic
    verdict("A7", ok, f"lowest coverage within 3 SE over {BAND.size} bins: {worst:.4f}; "
            f"bitwise deterministic: {deterministic}")
    assert ok


def test_a8_reality_and_evenness(verdict):
    dp = dp_at(300.0)
    w = np.union1d(GRID, BAND)
    worst_f = 0.0
    for fn in (model.chi0, model.impedance_bare, model.impedance_eff, model.chi_eff,
               model.gain, model.f_fb):
        a, b = fn(-w, dp), fn(w, dp)
        # Z0 vanishes at omega_e: there the pair must agree exactly
        rel = np.abs(a - np.conj(b)) / np.maximum(np.abs(b), np.finfo(float).tiny)
        worst_f = report._worse(worst_f, float(np.max(rel)))
    worst_s = {}
    for T in TEMPS:
        dp = dp_at(T)
        for lam in (np.zeros_like(w), sp.lambda_opt(w, dp)):
            for th in THETAS:
                pos = sp.closed_form_rows(w, th, lam, dp)
                neg = sp.closed_form_rows(-w, th, lam, dp)
                for f in ("S_psi", "S_X_intra", "S_X_out", "S_X0_out", "S_Iout", "S_cond"):
                    x = np.array([getattr(r, f) for r in neg])
                    y = np.array([getattr(r, f) for r in pos])
                    key = f if f in ("S_psi", "S_X0_out", "S_Iout", "S_cond") else f"{f}@{th:.3f}"
                    worst_s[key] = report._worse(worst_s.get(key, 0.0),
                                                 float(np.max(np.abs(x - y) / np.abs(y))))
    bad = {k: v for k, v in worst_s.items() if not v <= 1e-12}
    ok = worst_f <= 1e-12 and not bad
    detail = (f"response functions {worst_f:.2e}; spectra above 1e-12: "
              + (", ".join(f"{k}={v:.2e}" for k, v in sorted(bad.items())) or "none"))
    verdict("A8", ok, detail)
    assert ok, detail
