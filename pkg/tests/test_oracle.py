import ast
import dataclasses
import logging
import math
from pathlib import Path

import numpy as np
import pytest

from conftest import dp_at
from optofb import oracle
from optofb import spectra as sp
from optofb.model import gain

W = np.concatenate([np.geomspace(1e4, 1e8, 300), np.linspace(0.998e6, 1.002e6, 201)])


def relerr(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-30))


def col(rows, name):
    return np.array([getattr(r, name) for r in rows])


def cold(dp):
    return dataclasses.replace(dp, T_mech=0.0, T_elec=0.0)


# --- input spectra ----------------------------------------------------------

def test_input_csd(dp):
    S = oracle.input_csd(dp)
    S.check()
    assert np.array_equal(S.S[:2, :2], np.array([[1, 1j], [-1j, 1]]))
    assert np.allclose(np.linalg.eigvalsh(S.S[:2, :2]), [0, 2], atol=1e-15)
    assert S.S[2, 2] == 2 * dp.m * dp.gamma_m * dp.k_B * 300
    assert S.S[3, 3] == dp.k_B * 300 / 100
    F = S.factor()
    assert np.allclose(F @ F.conj().T, S.S, rtol=1e-14, atol=1e-40)


def test_input_csd_rejections():
    with pytest.raises(ValueError):
        oracle.InputCSD(np.array([[1, 1j], [1j, 1]])).check()
    with pytest.raises(ValueError):
        oracle.InputCSD(np.diag([1.0, -1.0])).factor()


# --- transfer matrix structure -----------------------------------------------

def test_amplitude_quadrature_row_without_feedback(dp):
    tm = oracle.assemble(W, 0.0, 0.0, dp)
    row = tm.row("X0_out")
    M = (dp.gamma + 1j * W) / (dp.gamma - 1j * W)
    assert relerr(row[:, 0], M) <= 1e-12
    assert np.max(np.abs(row[:, 1:])) <= 1e-12


@pytest.mark.parametrize("lam", [0.0, 3e8])
def test_transfer_matrix_reality(dp, lam):
    pos = oracle.assemble(W, lam, 0.7, dp).H
    neg = oracle.assemble(-W, lam, 0.7, dp).H
    scale = np.max(np.abs(pos), axis=0, keepdims=True)
    assert np.max(np.abs(neg - pos.conj()) / np.maximum(scale, 1e-300)) <= 1e-12


def test_empty_cavity_is_shot_noise_limited(dp):
    d = cold(dataclasses.replace(dp, zeta=0.0, alpha=0.0))
    for th in (0.0, 0.4, math.pi / 2):
        rows = oracle.oracle_rows(W, th, 0.0, d)
        assert relerr(col(rows, "S_X_out"), 1.0) <= 1e-12
    # with light on, radiation pressure alone moves the off-axis quadratures
    lit = cold(dataclasses.replace(dp, zeta=0.0))
    assert np.max(col(oracle.oracle_rows(W, 0.4, 0.0, lit), "S_X_out")) > 1e3


def test_propagate_trivial_cases(dp):
    tm = oracle.assemble(W[:3], 0.0, 0.0, dp)
    zero = oracle.InputCSD(np.zeros((4, 4), dtype=complex))
    assert np.all(oracle.output_csd(tm, zero) == 0)
    H = np.zeros((1, len(oracle.OUTPUTS), 4), dtype=complex)
    H[0, oracle.OUT["X0_out"], 0] = 1
    H[0, oracle.OUT["Xpi2_out"], 1] = 1
    ident = oracle.TransferMatrix(np.array([1.0]), 0.0, np.zeros(1), H,
                                  np.ones(1), np.ones(1))
    vac = np.zeros((4, 4), dtype=complex)
    vac[:2, :2] = [[1, 1j], [-1j, 1]]
    S = oracle.output_csd(ident, oracle.InputCSD(vac))[0]
    assert S[oracle.OUT["X0_out"], oracle.OUT["X0_out"]] == 1
    assert S[oracle.OUT["Xpi2_out"], oracle.OUT["Xpi2_out"]] == 1


def test_diagonals_are_real(dp):
    lam = sp.lambda_opt(W, dp)
    S = oracle.output_csd(oracle.assemble(W, lam, 0.9, dp), oracle.input_csd(dp))
    d = np.diagonal(S, axis1=1, axis2=2)
    assert np.all(np.abs(d.imag) <= 1e-12 * np.abs(d.real))


def test_thermal_contributions_scale_linearly():
    dp = dp_at(50.0)
    lam = 2e8
    base = oracle.oracle_rows(W, math.pi / 2, lam, cold(dp))
    one = oracle.oracle_rows(W, math.pi / 2, lam, dp)
    two = oracle.oracle_rows(W, math.pi / 2, lam, dataclasses.replace(dp, T_mech=100.0, T_elec=100.0))
    for f in ("S_psi", "S_X_out", "S_Iout"):
        b, x1, x2 = col(base, f), col(one, f), col(two, f)
        assert np.allclose(x2 - b, 2 * (x1 - b), rtol=1e-9, atol=1e-9 * np.max(np.abs(x2)))


# --- agreement with closed forms at lambda = 0 -------------------------------

@pytest.mark.parametrize("T", [4.0, 300.0])
def test_detuning_spectrum_full_grid(T):
    dp = dp_at(T)
    w = np.geomspace(1e4, 1e8, 2000)
    assert relerr(col(oracle.oracle_rows(w, 0.0, 0.0, dp), "S_psi"), sp.s_psi(w, dp)) <= 1e-9


def test_point_examples(dp):
    wm = dp.omega_m
    at = lambda w, th: oracle.oracle_rows([w], th, 0.0, dp)[0]
    assert relerr(at(wm, 0.0).C_psi_xin, sp.c_psi_xin(wm, 0.0, dp)) <= 1e-9
    assert relerr(at(0.9 * wm, 0.0).C_psi_it, sp.c_psi_it(0.9 * wm, dp)) <= 1e-9
    assert relerr(at(wm, math.pi / 2).S_X_intra, sp.s_x_intra(wm, math.pi / 2, dp)) <= 1e-9
    assert relerr(at(1.1 * wm, math.pi / 4).S_X_out, sp.s_x_out(1.1 * wm, math.pi / 4, dp)) <= 1e-9
    # the commutator-bearing cross term at theta = pi/2
    assert relerr(at(wm, math.pi / 2).S_X_out, sp.s_x_out(wm, math.pi / 2, dp)) <= 1e-9


def test_products_without_readout(dp):
    d = dataclasses.replace(dp, zeta=0.0)
    rows = oracle.oracle_rows(W, 0.0, 0.0, d)
    s_pi2 = sp.s_x_out(W, math.pi / 2, d)
    assert relerr(col(rows, "product_46"), s_pi2) <= 1e-9
    assert relerr(col(rows, "product_47"), s_pi2) <= 1e-9


# --- measured current: the coupled equations carry twice the gain -----------

def test_current_transfer_is_twice_the_gain(dp):
    tm = oracle.assemble(W, 0.0, 0.0, dp)
    assert relerr(tm.row("I_out")[:, 0], 2 * dp.alpha_in * gain(W, dp)) <= 1e-9


def test_open_loop_current_and_conditioning(dp):
    s = dp.alpha_in * gain(W, dp)
    N = dp.nyquist_psd
    rows = oracle.oracle_rows(W, 0.0, 0.0, dp)
    assert relerr(col(rows, "S_Iout"), 4 * np.abs(s)**2 + N) <= 1e-9
    assert relerr(col(rows, "S_cond"), N / (4 * np.abs(s)**2 + N)) <= 1e-9


@pytest.mark.parametrize("T", [4.0, 300.0])
def test_closed_loop_amplitude_quadrature(T):
    dp = dp_at(T)
    w = np.concatenate([W, np.linspace(1e6 - 1000, 1e6 + 1000, 2001)])
    lam = sp.lambda_opt(w, dp)
    s = dp.alpha_in * gain(w, dp)
    N = dp.nyquist_psd
    rows = oracle.oracle_rows(w, 0.0, lam, dp)
    D = np.abs(1 + 4 * lam * s)**2
    assert relerr(col(rows, "S_X0_out"), (1 + 4 * lam**2 * N) / D) <= 1e-12
    assert relerr(col(rows, "S_Iout"), (4 * np.abs(s)**2 + N) / D) <= 1e-12


def _paper_model(w, theta, lam, dp):
    """Open-loop feedback on top of the lambda = 0 oracle: the modulator is
    driven by alpha_in*G*X0_in + I_T, i.e. the current with the optical
    column halved and without the loop closed."""
    H0 = oracle.assemble(w, 0.0, theta, dp).H
    meas = H0[:, oracle.OUT["I_out"], :].copy()
    meas[:, 0] *= 0.5
    H = H0 - 2 * lam[:, None, None] * H0[:, :, :1] * meas[:, None, :]
    S = H @ oracle.input_csd(dp).S @ np.conj(np.swapaxes(H, 1, 2))
    return lambda name: S[:, oracle.OUT[name], oracle.OUT[name]].real


@pytest.mark.parametrize("theta", [0.0, math.pi / 4, math.pi / 2])
def test_feedback_closed_forms_are_the_open_loop_model(theta):
    dp = dp_at(70.0)
    lam = sp.lambda_opt(W, dp)
    auto = _paper_model(W, theta, lam, dp)
    assert relerr(sp.s_x_out_fb(W, theta, lam, dp), auto("Xtheta_out")) <= 1e-9
    assert relerr(sp.s_x_intra_fb(W, theta, lam, dp), auto("Xtheta_intra")) <= 1e-9
    assert relerr(sp.s_psi(W, dp, lam), auto("psi")) <= 1e-9


# --- singularities and diagnostics -----------------------------------------

def test_singular_loop_names_frequency(dp, monkeypatch):
    monkeypatch.setattr(oracle, "COND_LIMIT", 1.0)
    with pytest.raises(oracle.SingularLoopError, match="omega = 10000.0"):
        oracle.assemble(W, 0.0, 0.0, dp)


def test_loop_diagnostic(dp, caplog):
    tm = oracle.assemble(W, sp.lambda_opt(W, dp), 0.0, dp)
    d = oracle.loop_diagnostic(tm)
    assert set(d) == {"min_det_ratio", "omega_at_min", "max_cond"}
    assert 0 < d["min_det_ratio"] <= 1
    fake = dataclasses.replace(tm, det=np.r_[1e-20, np.ones(W.size - 1)])
    with caplog.at_level(logging.WARNING):
        oracle.loop_diagnostic(fake)
    assert "determinant" in caplog.text


def test_rejects_bad_domain(dp):
    with pytest.raises(ValueError):
        oracle.assemble([0.0, 1.0], 0.0, 0.0, dp)


# --- Monte Carlo ------------------------------------------------------------

def test_monte_carlo_is_deterministic(dp):
    grid = np.linspace(0.9e6, 1.1e6, 5)
    a = oracle.monte_carlo(dp, 1e8, 0.0, grid, 50, seed=7)
    b = oracle.monte_carlo(dp, 1e8, 0.0, grid, 50, seed=7)
    c = oracle.monte_carlo(dp, 1e8, 0.0, grid, 50, seed=8)
    assert a.mean.tobytes() == b.mean.tobytes() and a.stderr.tobytes() == b.stderr.tobytes()
    assert a.mean.tobytes() != c.mean.tobytes()


def test_monte_carlo_converges(dp):
    grid = np.linspace(0.999e6, 1.001e6, 3)
    lam = sp.lambda_opt(grid, dp)
    ref = col(oracle.oracle_rows(grid, math.pi / 2, lam, dp), "S_X_out")
    res = oracle.monte_carlo(dp, lam, math.pi / 2, grid, 40000, seed=1)
    mean, se = res.channel("Xtheta_out")
    assert np.all(np.abs(mean - ref) <= 5 * se)
    assert np.all(se <= 0.02 * ref)


def test_monte_carlo_rejects_single_realization(dp):
    with pytest.raises(ValueError):
        oracle.monte_carlo(dp, 0.0, 0.0, [1e6], 1, seed=0)


# --- comparison -------------------------------------------------------------

def test_compare_identical(dp):
    rows = sp.closed_form_rows(W[:20], 0.0, 0.0, dp)
    rep = oracle.compare(rows, rows, 1e-9)
    assert rep.passed
    assert all(d.max_rel_dev == 0 for d in rep.deviations.values())


def test_compare_names_perturbed_field(dp):
    rows = sp.closed_form_rows(W[:20], 0.0, 0.0, dp)
    bad = list(rows)
    bad[7] = dataclasses.replace(bad[7], S_psi=bad[7].S_psi * (1 + 1e-3))
    rep = oracle.compare(bad, rows, 1e-9)
    assert not rep.passed
    [f] = rep.failures
    assert f.field == "S_psi" and f.omega == rows[7].omega
    assert rep.to_dict()["failed_fields"] == ["S_psi"]


def test_compare_rejects_grid_mismatch(dp):
    a = sp.closed_form_rows(W[:5], 0.0, 0.0, dp)
    with pytest.raises(ValueError):
        oracle.compare(a, a[:4], 1e-9)
    with pytest.raises(ValueError):
        oracle.compare(a, sp.closed_form_rows(W[1:6], 0.0, 0.0, dp), 1e-9)


# --- independence -------------------------------------------------------------

def test_oracle_does_not_use_closed_forms():
    src = Path(oracle.__file__).read_text()
    imported = set()
    for node in ast.walk(ast.parse(src)):
        if isinstance(node, ast.ImportFrom) and node.module in ("spectra", "model"):
            imported |= {a.name for a in node.names}
    assert imported <= {"SpectraRow", "ROW_VALUE_FIELDS", "rows_from_arrays",
                        "DerivedParams", "PhysicalConfig", "derive_params"}
