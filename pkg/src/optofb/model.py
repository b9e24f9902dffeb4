"""Physical parameters and single-frequency response functions.

Fourier convention throughout the package: ``d/dt -> -i*omega``, so a damped
oscillator responds as ``1/(omega_m**2 - omega**2 - i*omega*gamma_m)`` and
the circuit current is ``I(omega) = -i*omega*Q(omega)``.  Every response
function accepts a scalar or an ndarray of angular frequencies (rad/s) and
satisfies ``F(-omega) == conj(F(omega))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import constants as _sc


class ConfigError(ValueError):
    """Invalid physical or run configuration."""


class QNDConditionError(ValueError):
    """Raised when a spectrum is requested at non-zero steady-state detuning."""


class SplitTemperatureError(ValueError):
    """Operation needs a single bath temperature but the config splits it."""


class ClassicalBathWarning(UserWarning):
    """k_B*T is not large compared with hbar*omega_m."""


@dataclass(frozen=True)
class Constants:
    hbar: float = _sc.hbar
    k_B: float = _sc.k
    c: float = _sc.c


CONST = Constants()


@dataclass(frozen=True)
class PhysicalConfig:
    """User-supplied parameters in SI units.

    Defaults reproduce the demonstration point used for the Fig. 1 style
    curves: a 1 mg mirror at 1e6 rad/s with Q_m = 1e6, a 1e6 1/s cavity with
    10 ps round trip, 0.5 um light at 100 mW, and a resonant circuit with
    Q_e = 1e6 and coupling frequency 1e3 rad/s on a 50 Ohm line.

    ``T_mech`` / ``T_elec`` override ``T`` for one bath only; leaving both at
    None keeps the two baths at the same temperature.
    """

    m: float = 1e-6
    omega_m: float = 1e6
    Q_m: float = 1e6
    gamma: float = 1e6
    tau: float = 1e-11
    wavelength0: float = 0.5e-6
    P_in: float = 0.1
    Delta: float = 0.0
    T: float = 300.0
    R: float = 50.0
    omega_e: Optional[float] = None
    Q_e: float = 1e6
    Omega_e: float = 1e3
    lambda_fb: float = 0.0
    T_mech: Optional[float] = None
    T_elec: Optional[float] = None

    def __post_init__(self):
        positive = ("m", "omega_m", "gamma", "tau", "wavelength0", "P_in",
                    "T", "R", "Omega_e")
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("omega_e", "T_mech", "T_elec"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        if not (self.Q_m >= 1 and self.Q_e >= 1):
            raise ConfigError("quality factors Q_m and Q_e must be >= 1")
        if not math.isfinite(self.Delta):
            raise ConfigError("Delta must be finite")
        if not math.isfinite(self.lambda_fb):
            raise ConfigError("lambda_fb must be finite (and real)")
        coldest = min(self.temperature_mech, self.temperature_elec)
        if CONST.k_B * coldest < 10 * CONST.hbar * self.omega_m:
            warnings.warn(
                f"k_B*T = {CONST.k_B * coldest:.3g} J is below 10*hbar*omega_m; "
                "the classical thermal-force spectrum 2*m*gamma_m*k_B*T is not reliable",
                ClassicalBathWarning, stacklevel=3)

    @property
    def temperature_mech(self) -> float:
        return self.T if self.T_mech is None else self.T_mech

    @property
    def temperature_elec(self) -> float:
        return self.T if self.T_elec is None else self.T_elec

    @property
    def electric_resonance(self) -> float:
        return self.omega_m if self.omega_e is None else self.omega_e


@dataclass(frozen=True)
class DerivedParams:
    """Everything the response functions need, computed once per config.

    Frozen and flat on purpose: limiting cases (``zeta = 0``, ``alpha = 0``,
    zero temperature) are built with :func:`dataclasses.replace`.
    """

    omega0: float
    k0: float
    alpha_in: float
    psi: float
    alpha: complex
    m: float
    omega_m: float
    gamma_m: float
    gamma: float
    tau: float
    R: float
    omega_e: float
    gamma_e: float
    L: float
    C: float
    zeta: float
    T_mech: float
    T_elec: float
    hbar: float = field(default=CONST.hbar, repr=False)
    k_B: float = field(default=CONST.k_B, repr=False)

    @property
    def Q_m(self) -> float:
        return self.omega_m / self.gamma_m

    @property
    def Q_e(self) -> float:
        return self.omega_e / self.gamma_e

    @property
    def Omega_e(self) -> float:
        return self.zeta * math.sqrt(self.C / self.m)

    @property
    def equal_temperatures(self) -> bool:
        return self.T_mech == self.T_elec

    @property
    def T(self) -> float:
        if not self.equal_temperatures:
            raise SplitTemperatureError(
                f"mechanical ({self.T_mech} K) and electrical ({self.T_elec} K) "
                "bath temperatures differ")
        return self.T_mech

    @property
    def thermal_force_psd(self) -> float:
        """Langevin force spectrum 2*m*gamma_m*k_B*T_mech, N^2 s."""
        return 2 * self.m * self.gamma_m * self.k_B * self.T_mech

    @property
    def nyquist_psd(self) -> float:
        """Line current noise k_B*T_elec/(2R), A^2 s."""
        return self.k_B * self.T_elec / (2 * self.R)

    @property
    def alpha_real(self) -> float:
        """Intracavity amplitude; only defined on the QND (psi = 0) branch."""
        self.require_qnd()
        return float(np.real(self.alpha))

    def require_qnd(self) -> None:
        if self.psi != 0:
            raise QNDConditionError(
                f"steady-state detuning psi = {self.psi!r} != 0; the amplitude "
                "quadrature is a QND observable only at psi = 0 (set Delta = 0)")


def derive_params(config: PhysicalConfig) -> DerivedParams:
    """Compute the derived optical, mechanical and circuit quantities.

    ``L`` follows from ``gamma_e = R/L``, ``C`` from ``L*C*omega_e**2 = 1`` and
    the piezoelectric constant from ``Omega_e = zeta*sqrt(C/m)``.  A non-zero
    ``psi`` is stored (with the corresponding complex ``alpha``) but every
    spectrum refuses it.
    """
    omega0 = 2 * math.pi * CONST.c / config.wavelength0
    k0 = omega0 / CONST.c
    alpha_in = math.sqrt(config.P_in / (CONST.hbar * omega0))
    psi = config.tau * config.Delta
    if psi == 0:
        alpha: complex = math.sqrt(2 / config.gamma) * alpha_in
    else:
        alpha = math.sqrt(2 * config.gamma) * alpha_in / (config.gamma - 1j * psi / config.tau)
    omega_e = config.electric_resonance
    gamma_e = omega_e / config.Q_e
    L = config.R / gamma_e
    C = 1 / (L * omega_e**2)
    zeta = config.Omega_e * math.sqrt(config.m / C)
    return DerivedParams(
        omega0=omega0, k0=k0, alpha_in=alpha_in, psi=psi, alpha=alpha,
        m=config.m, omega_m=config.omega_m, gamma_m=config.omega_m / config.Q_m,
        gamma=config.gamma, tau=config.tau, R=config.R, omega_e=omega_e,
        gamma_e=gamma_e, L=L, C=C, zeta=zeta,
        T_mech=config.temperature_mech, T_elec=config.temperature_elec)


def _nonzero(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0):
        raise ValueError("omega = 0 is outside the domain (1/(C*omega) and zeta/omega diverge)")
    return w


def chi0(omega, dp: DerivedParams):
    """Bare mechanical susceptibility, m/N."""
    w = np.asarray(omega, dtype=float)
    return (1 / dp.m) / (dp.omega_m**2 - w**2 - 1j * w * dp.gamma_m)


def impedance_bare(omega, dp: DerivedParams):
    """Impedance of the uncoupled series LC circuit, Ohm (purely imaginary)."""
    w = _nonzero(omega)
    return 1j * (1 / (dp.C * w) - dp.L * w)


def impedance_eff(omega, dp: DerivedParams):
    """Circuit impedance dressed by the piezoelectric coupling to the mirror."""
    w = _nonzero(omega)
    return impedance_bare(w, dp) - 1j * dp.zeta**2 / w * chi0(w, dp)


def chi_eff(omega, dp: DerivedParams):
    """Mechanical susceptibility loaded by the circuit and the line."""
    w = _nonzero(omega)
    inv = 1 / chi0(w, dp) - 1j * dp.zeta**2 / w / (dp.R + impedance_bare(w, dp))
    return 1 / inv


def gain(omega, dp: DerivedParams):
    """Measurement gain from input amplitude quadrature to line current, A s."""
    w = _nonzero(omega)
    optical = 2 * dp.hbar * dp.k0 / ((dp.gamma - 1j * w) * dp.tau)
    return optical * dp.zeta * chi0(w, dp) / (dp.R + impedance_eff(w, dp))


def f_fb(omega, dp: DerivedParams):
    """Back-action path of the fed-back amplitude into the phase quadrature."""
    w = _nonzero(omega)
    alpha = dp.alpha_real
    return (8 * dp.hbar * dp.k0**2 * alpha**2 * chi_eff(w, dp)
            / ((dp.gamma - 1j * w) * dp.tau**2))


@dataclass(frozen=True)
class ResponseSet:
    omega: np.ndarray
    chi0: np.ndarray
    Z0: np.ndarray
    Z: np.ndarray
    chi: np.ndarray
    gain: np.ndarray
    f_fb: np.ndarray


def response_set(omega, dp: DerivedParams) -> ResponseSet:
    w = _nonzero(omega)
    return ResponseSet(omega=w, chi0=chi0(w, dp), Z0=impedance_bare(w, dp),
                       Z=impedance_eff(w, dp), chi=chi_eff(w, dp),
                       gain=gain(w, dp), f_fb=f_fb(w, dp))
