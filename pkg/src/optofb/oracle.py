"""Transfer-matrix verification path.

The coupled linear equations (cavity quadratures, mirror, piezoelectric
circuit and line, feedback modulator) are written down term by term and
solved numerically at each frequency.  Nothing here calls the closed forms in
:mod:`optofb.spectra`, or the derived response functions in
:mod:`optofb.model`; only the parameter bundle is shared.

Channel ordering
----------------
inputs  : X0_in, Xpi2_in, F_T, I_in
outputs : X0_out, Xpi2_out, Xtheta_out, I_out, psi, Xtheta_intra,
          Xtheta_in, I_T

``I_T`` is the line current with the light off and no feedback, i.e. the
purely thermal current.  The feedback loop is closed exactly: the modulated
input amplitude quadrature is an unknown of the linear system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import DerivedParams, PhysicalConfig, derive_params
from .spectra import ROW_VALUE_FIELDS, SpectraRow, rows_from_arrays

log = logging.getLogger(__name__)

INPUTS = ("X0_in", "Xpi2_in", "F_T", "I_in")
OUTPUTS = ("X0_out", "Xpi2_out", "Xtheta_out", "I_out", "psi",
           "Xtheta_intra", "Xtheta_in", "I_T")
OUT = {name: i for i, name in enumerate(OUTPUTS)}

# unknowns of the per-frequency system; I_out = I - I_in is formed afterwards
# because I is a small difference of two nearly opposite line currents
_X0, _XP, _X, _I, _XT0 = range(5)

# equilibrated condition number beyond which refinement can no longer recover
# double precision
COND_LIMIT = 1e15


class SingularLoopError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TransferMatrix:
    omega: np.ndarray      # (n,)
    theta: float
    lam: np.ndarray        # (n,)
    H: np.ndarray          # (n, len(OUTPUTS), len(INPUTS))
    cond: np.ndarray       # equilibrated condition number of the closed-loop system
    det: np.ndarray        # |det| of the row-equilibrated closed-loop system

    def row(self, name: str) -> np.ndarray:
        return self.H[:, OUT[name], :]


@dataclass(frozen=True)
class InputCSD:
    """Cross-spectral density of the four input channels (constant in omega)."""

    S: np.ndarray

    def check(self, tol: float = 1e-12) -> None:
        S = self.S
        if S.shape != (len(INPUTS), len(INPUTS)):
            raise ValueError(f"input CSD must be {len(INPUTS)}x{len(INPUTS)}, got {S.shape}")
        scale = max(1.0, float(np.max(np.abs(S))))
        if np.max(np.abs(S - S.conj().T)) > tol * scale:
            raise ValueError("input cross-spectral matrix is not Hermitian")

    def factor(self) -> np.ndarray:
        """F with F @ F^H == S, via eigendecomposition (S may be singular)."""
        self.check()
        evals, evecs = np.linalg.eigh(self.S)
        if evals.min() < -1e-12 * max(1.0, evals.max()):
            raise ValueError(f"input CSD is not positive semidefinite (min eigenvalue {evals.min():.3g})")
        return evecs * np.sqrt(np.clip(evals, 0, None))


def input_csd(dp: DerivedParams) -> InputCSD:
    # vacuum: <X_theta X_theta'> = exp(i(theta' - theta)), so <X_0 X_pi/2> = i
    S = np.zeros((4, 4), dtype=complex)
    S[0, 0] = S[1, 1] = 1.0
    S[0, 1] = 1j
    S[1, 0] = -1j
    S[2, 2] = 2 * dp.m * dp.gamma_m * dp.k_B * dp.T_mech
    S[3, 3] = dp.k_B * dp.T_elec / (2 * dp.R)
    return InputCSD(S)


def _system(w: np.ndarray, lam: np.ndarray, dp: DerivedParams, alpha: float):
    n = w.size
    g = dp.gamma
    sq = math.sqrt(2 * g)
    A = np.zeros((n, 5, 5), dtype=complex)
    B = np.zeros((n, 5, 4), dtype=complex)
    # cavity amplitude quadrature, driven by the (modulated) input only
    A[:, 0, _X0] = g - 1j * w
    A[:, 0, _XT0] = -sq
    # cavity phase quadrature, driven by detuning dpsi = 2 k0 x
    A[:, 1, _XP] = g - 1j * w
    A[:, 1, _X] = -2 * alpha / dp.tau * 2 * dp.k0
    B[:, 1, 1] = sq
    # mirror: x / chi0 = F_R + zeta Q + F_T, Q = i I / omega
    A[:, 2, _X] = dp.m * (dp.omega_m**2 - w**2 - 1j * w * dp.gamma_m)
    A[:, 2, _X0] = -2 * dp.hbar * dp.k0 * alpha / dp.tau
    A[:, 2, _I] = -dp.zeta * 1j / w
    B[:, 2, 2] = 1
    # circuit Z0 I - zeta x = V, line V = R (I_in - I_out), I = I_in + I_out
    A[:, 3, _I] = 1j * (1 / (dp.C * w) - dp.L * w) + dp.R
    A[:, 3, _X] = -dp.zeta
    B[:, 3, 3] = 2 * dp.R
    # modulator: X0_in -> X0_in - 2 lambda I_out (real lambda leaves X_pi/2 alone)
    A[:, 4, _XT0] = 1
    A[:, 4, _I] = 2 * lam
    B[:, 4, 0] = 1
    B[:, 4, 3] = 2 * lam
    return A, B


def _equilibrate(A):
    r = 1 / np.max(np.abs(A), axis=2, keepdims=True)
    c = 1 / np.max(np.abs(A * r), axis=1, keepdims=True)
    return r, c


def _solve(A, B, refine: int = 3):
    """Equilibrated solve with iterative refinement.

    The loop couples a ~1e-14 radiation-pressure entry to feedback gains of
    ~1e9, so even the equilibrated system reaches condition numbers ~1e8;
    residuals are accumulated in extended precision to recover full double
    accuracy.
    """
    r, c = _equilibrate(A)
    As = A * r * c
    Bs = B * r
    y = np.linalg.solve(As, Bs)
    As_l = As.astype(np.clongdouble)
    Bs_l = Bs.astype(np.clongdouble)
    for _ in range(refine):
        res = (Bs_l - As_l @ y.astype(np.clongdouble)).astype(complex)
        y = y + np.linalg.solve(As, res)
    return y * np.swapaxes(c, 1, 2)


def assemble(omega, lam, theta: float, dp: DerivedParams) -> TransferMatrix:
    """Closed-loop transfer matrix from the input channels to every output."""
    dp.require_qnd()
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(w == 0):
        raise ValueError("omega = 0 is outside the domain")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), w.shape).copy()
    alpha = float(np.real(dp.alpha))

    A, B = _system(w, lam, dp, alpha)
    r, c = _equilibrate(A)
    cond = np.linalg.cond(A * r * c)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularLoopError(
            f"closed-loop system singular at omega = {float(w[i])!r} rad/s "
            f"(condition number {cond[i]:.3g})")
    sol = _solve(A, B)

    A0, B0 = _system(w, np.zeros_like(w), dp, 0.0)
    e3 = np.array([0, 0, 0, 1], dtype=complex)
    thermal = _solve(A0, B0)[:, _I, :] - e3

    sq = math.sqrt(2 * dp.gamma)
    cs, sn = math.cos(theta), math.sin(theta)
    e0 = np.array([1, 0, 0, 0], dtype=complex)
    e1 = np.array([0, 1, 0, 0], dtype=complex)
    H = np.zeros((w.size, len(OUTPUTS), len(INPUTS)), dtype=complex)
    # a_out = sqrt(2 gamma) a - a_in, with a_in the modulated input
    H[:, OUT["X0_out"]] = sq * sol[:, _X0] - sol[:, _XT0]
    H[:, OUT["Xpi2_out"]] = sq * sol[:, _XP] - e1
    H[:, OUT["Xtheta_out"]] = cs * H[:, OUT["X0_out"]] + sn * H[:, OUT["Xpi2_out"]]
    H[:, OUT["I_out"]] = sol[:, _I] - e3
    H[:, OUT["psi"]] = 2 * dp.k0 * sol[:, _X]
    H[:, OUT["Xtheta_intra"]] = cs * sol[:, _X0] + sn * sol[:, _XP]
    H[:, OUT["Xtheta_in"]] = cs * e0 + sn * e1
    H[:, OUT["I_T"]] = thermal
    det = np.abs(np.linalg.det(A * r))
    return TransferMatrix(omega=w, theta=float(theta), lam=lam, H=H, cond=cond, det=det)


def loop_diagnostic(tm: TransferMatrix) -> dict:
    """Smallest |det| of the closed-loop system relative to its median."""
    med = float(np.median(tm.det))
    lo = int(np.argmin(tm.det))
    ratio = float(tm.det[lo] / med) if med > 0 else 0.0
    if ratio < 1e-12:
        log.warning("closed-loop determinant dips to %.3g of its median at omega = %r",
                    ratio, float(tm.omega[lo]))
    return {"min_det_ratio": ratio, "omega_at_min": float(tm.omega[lo]),
            "max_cond": float(np.max(tm.cond))}


def output_csd(tm: TransferMatrix, S_in: InputCSD) -> np.ndarray:
    """S_out = H S_in H^dagger for every frequency, shape (n, 8, 8)."""
    S_in.check()
    H = tm.H
    return H @ S_in.S @ np.conj(np.swapaxes(H, 1, 2))


def propagate(tm: TransferMatrix, S_in: InputCSD) -> list[SpectraRow]:
    S = output_csd(tm, S_in)

    def auto(name):
        v = S[:, OUT[name], OUT[name]]
        return v.real

    def cross(a, b):
        return S[:, OUT[a], OUT[b]]

    S_x0 = auto("X0_out")
    S_pi2 = auto("Xpi2_out")
    S_I = auto("I_out")
    C_xi = cross("X0_out", "I_out")
    with np.errstate(divide="ignore", invalid="ignore"):
        S_cond = S_x0 - np.abs(C_xi)**2 / S_I
    return rows_from_arrays(
        "oracle", tm.omega, tm.theta, tm.lam,
        S_psi=auto("psi"),
        S_X_intra=auto("Xtheta_intra"),
        S_X_out=auto("Xtheta_out"),
        S_X0_out=S_x0,
        S_Iout=S_I,
        S_cond=S_cond,
        product_46=S_x0 * S_pi2,
        product_47=S_cond * S_pi2,
        C_psi_xin=cross("psi", "Xtheta_in"),
        C_psi_it=cross("psi", "I_T"),
        C_x0out_iout=C_xi)


def oracle_rows(omega, theta: float, lam, dp: DerivedParams) -> list[SpectraRow]:
    return propagate(assemble(omega, lam, theta, dp), input_csd(dp))


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloResult:
    omega: np.ndarray
    channels: tuple[str, ...]
    mean: np.ndarray        # (n_bins, n_channels)
    stderr: np.ndarray      # (n_bins, n_channels)
    n_realizations: int
    seed: int

    def channel(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        i = self.channels.index(name)
        return self.mean[:, i], self.stderr[:, i]


def monte_carlo(params, lam, theta: float, grid, n_realizations: int, seed: int) -> MonteCarloResult:
    """Sample the output power spectra per frequency bin.

    Each bin draws ``n_realizations`` complex Gaussian input vectors with
    covariance ``S_in`` (via :meth:`InputCSD.factor`; the vacuum block is
    rank one), maps them through the closed-loop transfer matrix and averages
    ``|output|^2``.  Bins get independent child seeds spawned from ``seed``.
    """
    if n_realizations < 2:
        raise ValueError("n_realizations must be >= 2")
    dp = derive_params(params) if isinstance(params, PhysicalConfig) else params
    tm = assemble(grid, lam, theta, dp)
    F = input_csd(dp).factor()
    children = np.random.SeedSequence(seed).spawn(tm.omega.size)
    mean = np.empty((tm.omega.size, len(OUTPUTS)))
    stderr = np.empty_like(mean)
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        z = (rng.standard_normal((n_realizations, 4))
             + 1j * rng.standard_normal((n_realizations, 4))) / math.sqrt(2)
        y = z @ (tm.H[b] @ F).T
        power = np.abs(y)**2
        mean[b] = power.mean(axis=0)
        stderr[b] = power.std(axis=0, ddof=1) / math.sqrt(n_realizations)
    return MonteCarloResult(omega=tm.omega, channels=OUTPUTS, mean=mean, stderr=stderr,
                            n_realizations=n_realizations, seed=seed)


def mc_coverage(result: MonteCarloResult, reference: np.ndarray, channel: str = "X0_out",
                n_sigma: float = 3.0) -> float:
    """Fraction of bins whose sample mean lies within ``n_sigma`` standard
    errors of ``reference``."""
    mean, se = result.channel(channel)
    return float(np.mean(np.abs(mean - reference) <= n_sigma * se))


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class FieldDeviation:
    field: str
    max_rel_dev: float
    omega: float
    theta: float
    lambda_used: float


@dataclass
class ComparisonReport:
    rel_tol: float
    n_rows: int
    deviations: dict[str, FieldDeviation]

    @property
    def failures(self) -> list[FieldDeviation]:
        return [d for d in self.deviations.values() if not d.max_rel_dev <= self.rel_tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"rel_tol": self.rel_tol, "n_rows": self.n_rows, "passed": self.passed,
                "fields": {k: vars(v) for k, v in self.deviations.items()},
                "failed_fields": [d.field for d in self.failures]}


def compare(closed_form: list[SpectraRow], oracle: list[SpectraRow], rel_tol: float,
            fields: tuple[str, ...] = ROW_VALUE_FIELDS) -> ComparisonReport:
    """Maximum relative deviation of each field, oracle as the reference."""
    if len(closed_form) != len(oracle):
        raise ValueError(f"grid mismatch: {len(closed_form)} vs {len(oracle)} rows")
    for a, b in zip(closed_form, oracle):
        if (a.omega, a.theta) != (b.omega, b.theta) or not math.isclose(
                a.lambda_used, b.lambda_used, rel_tol=1e-15, abs_tol=0.0):
            raise ValueError(f"grid mismatch at omega = {a.omega!r} / {b.omega!r}")
    devs = {}
    for name in fields:
        x = np.array([getattr(r, name) for r in closed_form])
        y = np.array([getattr(r, name) for r in oracle])
        rel = np.abs(x - y) / np.maximum(np.abs(y), 1e-30)
        rel = np.where(np.isnan(rel), np.inf, rel)
        i = int(np.argmax(rel)) if rel.size else 0
        r = closed_form[i] if closed_form else None
        devs[name] = FieldDeviation(
            field=name, max_rel_dev=float(rel[i]) if rel.size else 0.0,
            omega=r.omega if r else float("nan"), theta=r.theta if r else float("nan"),
            lambda_used=r.lambda_used if r else float("nan"))
    return ComparisonReport(rel_tol=rel_tol, n_rows=len(closed_form), deviations=devs)
