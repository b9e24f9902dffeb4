"""Closed-form noise spectra, with and without Markovian current feedback.

Spectra follow the one-argument convention
``<A(omega) B(omega')> = 2*pi*delta(omega + omega') * C_AB(omega)``; they are
*unsymmetrized*, so the vacuum input carries ``<X_0 X_{pi/2}> = i`` and the
correlation ``C_{psi, X_theta^in}`` picks up the phase ``exp(i*theta)``.
Quadrature spectra are in shot-noise units (coherent input = 1), current
spectra in A^2 s, the detuning spectrum in s.

The feedback replaces the input amplitude quadrature by
``X_0^in - 2*lambda*dI_out`` with a real gain ``lambda`` (A^-1 s^-1/2).  The
feedback-modified quadrature spectra are the published closed forms: the
fed-back current is the measured current ``alpha_in*G*X_0^in + I_T``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Literal, Optional

import numpy as np

from .model import (DerivedParams, SplitTemperatureError, _nonzero, chi0,
                    chi_eff, f_fb, gain, impedance_bare, impedance_eff)

log = logging.getLogger(__name__)


class ClosedLoopSingularError(ArithmeticError):
    """1 + 2*lambda*alpha_in*G vanishes: the current loop has no steady state."""


# ---------------------------------------------------------------------------
# feedback policy
# ---------------------------------------------------------------------------

FeedbackMode = Literal["off", "fixed", "optimal_per_omega", "optimal_at"]


@dataclass(frozen=True)
class FeedbackSetting:
    mode: FeedbackMode = "off"
    value: float = 0.0  # gain for "fixed", reference omega for "optimal_at"

    def __post_init__(self):
        if self.mode not in ("off", "fixed", "optimal_per_omega", "optimal_at"):
            raise ValueError(f"unknown feedback mode {self.mode!r}")
        if self.mode == "optimal_at" and not self.value > 0:
            raise ValueError("optimal_at needs a positive reference frequency")

    @classmethod
    def parse(cls, text: str) -> "FeedbackSetting":
        """Parse ``off``, ``fixed:VALUE``, ``opt`` or ``opt-at:OMEGA``."""
        text = text.strip()
        if text == "off":
            return cls("off")
        if text == "opt":
            return cls("optimal_per_omega")
        head, _, arg = text.partition(":")
        if head == "fixed" and arg:
            return cls("fixed", float(arg))
        if head == "opt-at" and arg:
            return cls("optimal_at", float(arg))
        raise ValueError(f"cannot parse feedback setting {text!r}")

    def __str__(self):
        return {"off": "off", "fixed": f"fixed:{self.value!r}",
                "optimal_per_omega": "opt",
                "optimal_at": f"opt-at:{self.value!r}"}[self.mode]

    def gains(self, omega, dp: DerivedParams) -> np.ndarray:
        """Feedback gain actually used at each frequency."""
        w = np.asarray(omega, dtype=float)
        if self.mode == "off":
            return np.zeros_like(w)
        if self.mode == "fixed":
            return np.full_like(w, self.value)
        if self.mode == "optimal_per_omega":
            return lambda_opt(w, dp)
        return np.full_like(w, float(lambda_opt(self.value, dp)))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _qnd(dp: DerivedParams) -> float:
    dp.require_qnd()
    return dp.alpha_real


def _kT(dp: DerivedParams) -> float:
    return dp.k_B * dp.T


def _lorentz(w, dp):
    return dp.gamma**2 + w**2


def _k_psi(w, dp, alpha):
    """Coefficient of X_0^in in the detuning fluctuation."""
    return (4 * dp.hbar * dp.k0**2 * alpha * chi_eff(w, dp)
            * math.sqrt(2 * dp.gamma) / ((dp.gamma - 1j * w) * dp.tau))


def _signal(w, dp):
    """alpha_in * G: input amplitude quadrature to measured current."""
    return dp.alpha_in * gain(w, dp)


# ---------------------------------------------------------------------------
# thermal current
# ---------------------------------------------------------------------------

def s_thermal_current(dp: DerivedParams) -> float:
    """Thermal line current spectrum at equilibrium, k_B*T/(2R)."""
    if not dp.equal_temperatures:
        raise SplitTemperatureError(
            "k_B*T/(2R) is the equilibrium value and needs equal mechanical and "
            "electrical temperatures; use s_thermal_current_assembled instead")
    return _kT(dp) / (2 * dp.R)


def s_thermal_current_assembled(omega, dp: DerivedParams):
    """Thermal current spectrum built term by term from the reflected line
    noise and the transduced Langevin force.  Equals k_B*T/(2R) only when
    both baths share one temperature."""
    w = _nonzero(omega)
    Z = impedance_eff(w, dp)
    refl = np.abs((dp.R - Z) / (dp.R + Z))**2
    trans = np.abs(dp.zeta * chi0(w, dp) / (dp.R + Z))**2
    return refl * dp.nyquist_psd + trans * dp.thermal_force_psd


# ---------------------------------------------------------------------------
# detuning statistics
# ---------------------------------------------------------------------------

def s_psi(omega, dp: DerivedParams, lam=0.0):
    """Detuning (round-trip phase) spectrum, s.

    At ``lam = 0`` this is the sum of radiation-pressure, Langevin-force and
    line-noise drive through the loaded susceptibility.  With feedback the
    fed-back current also drives the mirror through the amplitude quadrature.
    """
    w = _nonzero(omega)
    alpha = _qnd(dp)
    chi = chi_eff(w, dp)
    Z0 = impedance_bare(w, dp)
    bracket = (4 * dp.hbar**2 * dp.k0**2 * alpha**2 * 2 * dp.gamma / (_lorentz(w, dp) * dp.tau**2)
               + dp.thermal_force_psd
               + dp.zeta**2 / w**2 * 4 * dp.R**2 / np.abs(dp.R + Z0)**2 * dp.nyquist_psd)
    S = 4 * dp.k0**2 * np.abs(chi)**2 * bracket
    if np.all(np.asarray(lam) == 0):
        return S
    lam = np.asarray(lam, dtype=float)
    K = _k_psi(w, dp, alpha)
    s = _signal(w, dp)
    N = dp.nyquist_psd
    cross = np.conj(s) * K + c_psi_it(w, dp)
    return (S - 4 * lam * np.real(np.conj(K) * cross)
            + 4 * lam**2 * np.abs(K)**2 * (np.abs(s)**2 + N))


def c_psi_xin(omega, theta, dp: DerivedParams, lam=0.0):
    """Correlation between detuning and the input quadrature X_theta^in."""
    w = _nonzero(omega)
    alpha = _qnd(dp)
    K = _k_psi(w, dp, alpha)
    C = K * np.exp(1j * np.asarray(theta))
    if np.all(np.asarray(lam) == 0):
        return C
    return C - 2 * np.asarray(lam) * K * _signal(w, dp) * np.exp(1j * np.asarray(theta))


def c_psi_it(omega, dp: DerivedParams, lam=0.0):
    """Correlation between detuning and the thermal current I_T."""
    w = _nonzero(omega)
    kT = _kT(dp)
    chi = chi_eff(w, dp)
    c0 = chi0(w, dp)
    Z0 = impedance_bare(w, dp)
    Zc = np.conj(impedance_eff(w, dp))
    mech = dp.zeta * np.conj(c0) / (dp.R + Zc) * 2 * dp.m * dp.gamma_m
    elec = 1j * dp.zeta / w / (dp.R + Z0) * (dp.R - Zc) / (dp.R + Zc)
    C = 2 * dp.k0 * chi * (mech + elec) * kT
    if np.all(np.asarray(lam) == 0):
        return C
    K = _k_psi(w, dp, _qnd(dp))
    return C - 2 * np.asarray(lam) * K * dp.nyquist_psd


# ---------------------------------------------------------------------------
# quadrature spectra without feedback
# ---------------------------------------------------------------------------

def s_x_intra(omega, theta, dp: DerivedParams):
    """Intracavity quadrature spectrum (2*gamma/(gamma^2+omega^2) is vacuum)."""
    w = _nonzero(omega)
    alpha = _qnd(dp)
    s = np.sin(theta)
    lor = _lorentz(w, dp)
    C = c_psi_xin(w, theta, dp)
    return (4 * alpha**2 * s**2 / (lor * dp.tau**2) * s_psi(w, dp)
            + 2 * dp.gamma / lor
            + 2 * math.sqrt(2 * dp.gamma) * alpha * s / (lor * dp.tau) * 2 * np.real(C))


def s_x_out(omega, theta, dp: DerivedParams):
    """Output quadrature spectrum; identically 1 on the amplitude quadrature.

    The cross term is ``2 Re{(gamma - i*omega) C}``: the output carries the
    intracavity detuning response times ``sqrt(2 gamma)`` against an input
    filtered by ``(gamma + i omega)/(gamma - i omega)``, whose conjugate
    supplies the factor.
    """
    w = _nonzero(omega)
    alpha = _qnd(dp)
    s = np.sin(theta)
    lor = _lorentz(w, dp)
    C = c_psi_xin(w, theta, dp)
    return (8 * dp.gamma * alpha**2 * s**2 / (lor * dp.tau**2) * s_psi(w, dp)
            + 1
            + 2 * math.sqrt(2 * dp.gamma) * alpha * s / (lor * dp.tau)
            * 2 * np.real((dp.gamma - 1j * w) * C))


# ---------------------------------------------------------------------------
# feedback
# ---------------------------------------------------------------------------

def s_x_intra_fb(omega, theta, lam, dp: DerivedParams):
    """Intracavity quadrature spectrum with feedback gain ``lam``."""
    w = _nonzero(omega)
    alpha = _qnd(dp)
    lam = np.asarray(lam, dtype=float)
    th = np.asarray(theta, dtype=float)
    sn, cs = np.sin(th), np.cos(th)
    lor = _lorentz(w, dp)
    g2 = 2 * dp.gamma / lor
    s = _signal(w, dp)
    f = f_fb(w, dp)
    N = dp.nyquist_psd
    drive = np.conj(s) * c_psi_xin(w, 0.0, dp) + c_psi_it(w, dp)
    direct = np.real(np.conj(s) * np.exp(-1j * th) * (cs + np.conj(f) * sn))
    backact = np.real((np.sin(2 * th) + 2 * np.conj(f) * sn**2) * drive)
    return (s_x_intra(w, th, dp)
            - 4 * lam * g2 * direct
            - 4 * lam * math.sqrt(2 * dp.gamma) * alpha / (lor * dp.tau) * backact
            + 4 * lam**2 * g2 * (np.abs(s)**2 + N) * np.abs(cs + f * sn)**2)


def s_x_out_fb(omega, theta, lam, dp: DerivedParams):
    """Output quadrature spectrum with feedback gain ``lam``."""
    w = _nonzero(omega)
    alpha = _qnd(dp)
    lam = np.asarray(lam, dtype=float)
    th = np.asarray(theta, dtype=float)
    sn, cs = np.sin(th), np.cos(th)
    lor = _lorentz(w, dp)
    g = dp.gamma
    s = _signal(w, dp)
    f = f_fb(w, dp)
    N = dp.nyquist_psd
    drive = np.conj(s) * c_psi_xin(w, 0.0, dp) + c_psi_it(w, dp)
    direct = np.real(np.conj(s) * np.exp(-1j * th)
                     * (cs + 2 * g * np.conj(f) / (g - 1j * w) * sn))
    backact = np.real(math.sqrt(2 * g) * alpha / dp.tau
                      * (np.sin(2 * th) / (g + 1j * w) + 4 * g * np.conj(f) * sn**2 / lor)
                      * drive)
    K = (g + 1j * w) / (g - 1j * w) * cs + 2 * g * f / (g - 1j * w) * sn
    return (s_x_out(w, th, dp)
            - 4 * lam * direct
            - 4 * lam * backact
            + 4 * lam**2 * (np.abs(s)**2 + N) * np.abs(K)**2)


def s_x0_out_fb(omega, lam, dp: DerivedParams):
    """Amplitude-quadrature output spectrum under feedback,
    ``|1 - 2 lambda alpha_in G|^2 + 4 lambda^2 k_B T/(2R)``.

    Expanded as ``1 - deficit`` so the result is a monotone function of the
    deficit and rounds only once.
    """
    return 1 - squeezing_deficit(omega, lam, dp)


def squeezing_deficit(omega, lam, dp: DerivedParams):
    """``1 - s_x0_out_fb`` evaluated without cancellation.

    Far from resonance the noise reduction is many orders of magnitude below
    double-precision epsilon; this form keeps it resolvable.
    """
    s = _signal(_nonzero(omega), dp)
    lam = np.asarray(lam, dtype=float)
    return 4 * lam * np.real(s) - 4 * lam**2 * (np.abs(s)**2 + dp.nyquist_psd)


def lambda_opt(omega, dp: DerivedParams):
    """Feedback gain minimising the amplitude-quadrature output spectrum."""
    s = _signal(_nonzero(omega), dp)
    # 2 alpha_in^2 |G|^2 + k_B T / R, written with N = k_B T_elec / (2R)
    den = 2 * np.abs(s)**2 + 2 * dp.nyquist_psd
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.real(s) / den
    return np.where(den > 0, lam, 0.0)


def min_x0_out(omega, dp: DerivedParams):
    """Minimum over lambda of the amplitude-quadrature output spectrum."""
    s = _signal(_nonzero(omega), dp)
    return 1 - np.real(s)**2 / (np.abs(s)**2 + dp.nyquist_psd)


def squeezing_significance(omega, dp: DerivedParams):
    """alpha_in*|G| over the thermal current amplitude sqrt(k_B T/(2R)).

    Returns ``inf`` (and logs it) where the thermal noise vanishes but the
    gain does not.
    """
    num = np.abs(_signal(_nonzero(omega), dp))
    den = math.sqrt(dp.nyquist_psd)
    if den == 0:
        out = np.where(num > 0, np.inf, 0.0)
        if np.any(np.isinf(out)):
            log.warning("significance unbounded: zero thermal current noise")
        return out
    return num / den


def squeezing_bandwidth(omega, S, epsilon: float = 0.01) -> tuple[float, float, float]:
    """Contiguous band around the global minimum of ``S`` where ``S < 1 - epsilon``.

    Returns ``(omega_lo, omega_hi, omega_hi - omega_lo)`` using grid points;
    ``(nan, nan, 0.0)`` when the minimum does not reach the threshold.
    """
    w = np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float)
    i = int(np.argmin(S))
    below = S < 1 - epsilon
    if not below[i]:
        return math.nan, math.nan, 0.0
    lo = i
    while lo > 0 and below[lo - 1]:
        lo -= 1
    hi = i
    while hi < w.size - 1 and below[hi + 1]:
        hi += 1
    return float(w[lo]), float(w[hi]), float(w[hi] - w[lo])


# ---------------------------------------------------------------------------
# measured current and conditioning
# ---------------------------------------------------------------------------

def _loop(w, lam, s):
    D = 1 + 2 * lam * s
    bad = np.abs(D) <= 1e-12
    if np.any(bad):
        where = np.broadcast_to(w, D.shape)[bad]
        raise ClosedLoopSingularError(
            f"1 + 2*lambda*alpha_in*G vanishes at omega = {float(where[0])!r} rad/s")
    return D


def s_iout(omega, lam, dp: DerivedParams):
    """Spectrum of the measured line current, A^2 s.

    With feedback the current is fed back into its own source, so it is
    eliminated self-consistently: ``(|s|^2 + N)/|1 + 2 lambda s|^2`` with
    ``s = alpha_in*G``.
    """
    w = _nonzero(omega)
    lam = np.asarray(lam, dtype=float)
    s = _signal(w, dp)
    D = _loop(w, lam, s)
    return (np.abs(s)**2 + dp.nyquist_psd) / np.abs(D)**2


def c_x0out_iout(omega, lam, dp: DerivedParams):
    """Correlation of the output amplitude quadrature with the current."""
    w = _nonzero(omega)
    lam = np.asarray(lam, dtype=float)
    s = _signal(w, dp)
    D = _loop(w, lam, s)
    M = (dp.gamma + 1j * w) / (dp.gamma - 1j * w)
    return M * ((1 - 2 * lam * s) * np.conj(s) - 2 * lam * dp.nyquist_psd) / np.conj(D)


def s_conditioned(omega, lam, dp: DerivedParams):
    """Amplitude-quadrature output spectrum conditioned on the current record
    (Gaussian Schur complement)."""
    w = _nonzero(omega)
    S_I = s_iout(w, lam, dp)
    if np.any(S_I == 0):
        raise ZeroDivisionError("current spectrum vanishes; conditioning undefined")
    C = c_x0out_iout(w, lam, dp)
    return s_x0_out_fb(w, lam, dp) - np.abs(C)**2 / S_I


def uncertainty_products(omega, lam, dp: DerivedParams):
    """``(S_X0 * S_Xpi/2, S_X0|I * S_Xpi/2)`` for the output field."""
    w = _nonzero(omega)
    s_pi2 = s_x_out_fb(w, math.pi / 2, lam, dp)
    return s_x0_out_fb(w, lam, dp) * s_pi2, s_conditioned(w, lam, dp) * s_pi2


# ---------------------------------------------------------------------------
# rows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectraRow:
    """All spectra at one (omega, theta, lambda) point.

    ``S_X0_out`` duplicates ``S_X_out`` at theta = 0 and is kept separately so
    the amplitude-quadrature result is available on every row.
    """

    omega: float
    theta: float
    lambda_used: float
    S_psi: float
    S_X_intra: float
    S_X_out: float
    S_X0_out: float
    S_Iout: float
    S_cond: float
    product_46: float
    product_47: float
    C_psi_xin: complex
    C_psi_it: complex
    C_x0out_iout: complex
    source: str = "closed_form"


ROW_VALUE_FIELDS = tuple(f.name for f in fields(SpectraRow)
                         if f.name not in ("omega", "theta", "lambda_used", "source"))


def rows_from_arrays(source: str, omega, theta, lam, **columns) -> list[SpectraRow]:
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    th = np.broadcast_to(np.asarray(theta, dtype=float), w.shape)
    la = np.broadcast_to(np.asarray(lam, dtype=float), w.shape)
    cols = {k: np.broadcast_to(np.asarray(v), w.shape) for k, v in columns.items()}
    complex_fields = {"C_psi_xin", "C_psi_it", "C_x0out_iout"}
    out = []
    for i in range(w.size):
        vals = {k: (complex(v[i]) if k in complex_fields else float(np.real(v[i])))
                for k, v in cols.items()}
        out.append(SpectraRow(omega=float(w[i]), theta=float(th[i]),
                              lambda_used=float(la[i]), source=source, **vals))
    return out


def closed_form_rows(omega, theta: float, lam, dp: DerivedParams) -> list[SpectraRow]:
    """Evaluate every closed form on a frequency grid at one quadrature angle.

    ``lam`` is a scalar or an array aligned with ``omega``.
    """
    w = _nonzero(np.atleast_1d(omega))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), w.shape)
    p46, p47 = uncertainty_products(w, lam, dp)
    return rows_from_arrays(
        "closed_form", w, theta, lam,
        S_psi=s_psi(w, dp, lam),
        S_X_intra=s_x_intra_fb(w, theta, lam, dp),
        S_X_out=s_x_out_fb(w, theta, lam, dp),
        S_X0_out=s_x0_out_fb(w, lam, dp),
        S_Iout=s_iout(w, lam, dp),
        S_cond=s_conditioned(w, lam, dp),
        product_46=p46, product_47=p47,
        C_psi_xin=c_psi_xin(w, theta, dp, lam),
        C_psi_it=c_psi_it(w, dp, lam),
        C_x0out_iout=c_x0out_iout(w, lam, dp))
