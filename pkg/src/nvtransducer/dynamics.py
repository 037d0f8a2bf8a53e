"""Rotating-frame master equation of the driven three-level emitter.

Level |1> is moved into a frame rotating at ``mu_s`` and level |2> at
``mu_s + mu_d``.  In that frame the signal and the resonant 1-2 pump are
static and only the far-detuned 0-2 pump term oscillates, at exactly
``mu_s``.  The periodic steady state is then a single Fourier series in
``mu_s``, which :func:`harmonic_balance_solve` obtains from one linear
system.  :func:`ode_steady_state` gets the same coefficients by time
integration and serves as the independent check.

Density matrices are vectorised row-major (``vec(rho)[3*i + j] = rho[i, j]``).
:class:`SteadyHarmonics` stores expectation values ``<sigma_jk> = rho[k, j]``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .errors import OracleTimeoutError, SolverError
from .params import DriveConfig, EffectiveRates, EmitterParams

TWO_PI = 2.0 * math.pi

_I3 = np.eye(3)
# reduced ODE state: every rho entry except rho_00, which follows from the trace
_REDUCED = [1, 2, 3, 4, 5, 6, 7, 8]
_POS_11, _POS_22 = 3, 7

PHYSICALITY_TOL = {"trace": 1e-12, "hermiticity": 1e-12, "min_eigenvalue": -1e-10}


def _sigma(i, j):
    m = np.zeros((3, 3), dtype=complex)
    m[i, j] = 1.0
    return m


def _commutator(H):
    return -1j * (np.kron(H, _I3) - np.kron(_I3, H.T))


def _dissipator(L):
    LdL = L.conj().T @ L
    return np.kron(L, L.conj()) - 0.5 * np.kron(LdL, _I3) - 0.5 * np.kron(_I3, LdL.T)


def dephasing_superoperator(gamma_phi_1: float, gamma_phi_2: float) -> np.ndarray:
    """Independent pure dephasing of |1> and |2> (rates in rad/s).

    Projector dissipators at ``2*gamma_phi`` make a single-level coherence
    decay at ``gamma_phi`` and rho_12 at ``gamma_phi_1 + gamma_phi_2``.
    """
    return (2 * gamma_phi_1 * _dissipator(_sigma(1, 1))
            + 2 * gamma_phi_2 * _dissipator(_sigma(2, 2)))


@dataclass(frozen=True)
class RotatingFrameGenerator:
    """``L(t) = l0 + l_plus exp(-i mu_s t) + l_minus exp(+i mu_s t)``.

    Operators are 9x9 in rad/s; ``mu_s``, ``mu_d``, ``delta_1``, ``delta_2``
    are in Hz; the Rabi amplitudes are in rad/s.
    """

    l0: np.ndarray
    l_plus: np.ndarray
    l_minus: np.ndarray
    mu_s: float
    mu_d: float
    delta_1: float
    delta_2: float
    omega_s: complex
    omega_21: complex
    omega_20: complex
    gamma_10_t: float

    @property
    def angular_mu_s(self) -> float:
        return TWO_PI * self.mu_s

    def at(self, t: float) -> np.ndarray:
        phase = np.exp(-1j * self.angular_mu_s * t)
        return self.l0 + self.l_plus * phase + self.l_minus * np.conj(phase)

    def to_json(self) -> str:
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return json.dumps({
            "l0": cplx(self.l0), "l_plus": cplx(self.l_plus), "l_minus": cplx(self.l_minus),
            "mu_s": self.mu_s, "mu_d": self.mu_d,
            "delta_1": self.delta_1, "delta_2": self.delta_2,
            "omega_s": cplx(self.omega_s), "omega_21": cplx(self.omega_21),
            "omega_20": cplx(self.omega_20),
        })


def build_generator(
    rates: EffectiveRates, emitter: EmitterParams, drives: DriveConfig
) -> RotatingFrameGenerator:
    """Assemble the rotating-frame Liouvillian for the given operating point.

    Hamiltonian (units of hbar)::

        d1 s11 + d2 s22 + (Os s10 + O21 s21 + O20 e^{+i mu_s t} s20 + h.c.)

    with ``O = sqrt(gamma^e) E``, matching ``c_out = c_in - i sqrt(gamma^e) sigma``.
    """
    if drives.mu_s <= 0 or drives.mu_d <= 0:
        raise SolverError("tone frequencies mu_s and mu_d must be > 0")
    delta_1 = emitter.omega_10 + emitter.delta_omega_10 - drives.mu_s
    delta_2 = emitter.omega_20 + emitter.delta_omega_20 - (drives.mu_s + drives.mu_d)

    # the single Hz -> rad/s boundary
    w = TWO_PI
    omega_s = math.sqrt(w * rates.gamma_10_e) * complex(drives.e_s)
    omega_21 = math.sqrt(w * rates.gamma_21_e) * complex(drives.e_d)
    omega_20 = math.sqrt(w * rates.gamma_20_e) * complex(drives.e_d)

    H0 = (
        w * delta_1 * _sigma(1, 1)
        + w * delta_2 * _sigma(2, 2)
        + omega_s * _sigma(1, 0) + np.conj(omega_s) * _sigma(0, 1)
        + omega_21 * _sigma(2, 1) + np.conj(omega_21) * _sigma(1, 2)
    )
    l0 = (
        _commutator(H0)
        + w * rates.gamma_10_t * _dissipator(_sigma(0, 1))
        + w * rates.gamma_20_t * _dissipator(_sigma(0, 2))
        + w * rates.gamma_21_t * _dissipator(_sigma(1, 2))
        + dephasing_superoperator(w * emitter.gamma_phi_1, w * emitter.gamma_phi_2)
    )
    return RotatingFrameGenerator(
        l0=l0,
        l_plus=_commutator(np.conj(omega_20) * _sigma(0, 2)),
        l_minus=_commutator(omega_20 * _sigma(2, 0)),
        mu_s=drives.mu_s,
        mu_d=drives.mu_d,
        delta_1=delta_1,
        delta_2=delta_2,
        omega_s=omega_s,
        omega_21=omega_21,
        omega_20=omega_20,
        gamma_10_t=rates.gamma_10_t,
    )


@dataclass(frozen=True)
class SteadyHarmonics:
    """Fourier coefficients of the periodic rotating-frame steady state.

    ``coeffs[n + n_h, j, k]`` multiplies ``exp(-i n mu_s t)`` in
    ``<sigma_jk>(t)``; in the lab frame that term oscillates at
    ``n mu_s + nu_k - nu_j`` with ``nu = (0, mu_s, mu_s + mu_d)``.
    """

    coeffs: np.ndarray
    n_h: int
    mu_s: float
    mu_d: float

    def __getitem__(self, n: int) -> np.ndarray:
        if abs(n) > self.n_h:
            return np.zeros((3, 3), dtype=complex)
        return self.coeffs[n + self.n_h]

    def rho(self, n: int = 0) -> np.ndarray:
        """Density-matrix coefficient of harmonic ``n`` (``rho[k, j] = <sigma_jk>``)."""
        return self[n].T

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.coeffs[self.n_h]))

    def evaluate_rho(self, t: float) -> np.ndarray:
        ns = np.arange(-self.n_h, self.n_h + 1)
        phases = np.exp(-1j * TWO_PI * self.mu_s * ns * t)
        return np.tensordot(phases, self.coeffs, axes=1).T

    def to_json(self) -> str:
        return json.dumps({
            "n_h": self.n_h, "mu_s": self.mu_s, "mu_d": self.mu_d,
            "re": self.coeffs.real.tolist(), "im": self.coeffs.imag.tolist(),
        })


def physicality_report(h: SteadyHarmonics) -> dict:
    """Trace, hermiticity-pairing and positivity diagnostics of a solution."""
    c = h.coeffs
    scale = max(np.abs(c).max(), 1.0)
    trace_err = abs(np.trace(c[h.n_h]) - 1.0)
    for n in range(1, h.n_h + 1):
        trace_err = max(trace_err, abs(np.trace(c[h.n_h + n])), abs(np.trace(c[h.n_h - n])))
    herm_err = np.abs(c - np.conj(np.transpose(c[::-1], (0, 2, 1)))).max() / scale
    rho_avg = h.rho(0)
    min_eig = np.linalg.eigvalsh(0.5 * (rho_avg + rho_avg.conj().T)).min()
    return {"trace": float(trace_err), "hermiticity": float(herm_err),
            "min_eigenvalue": float(min_eig)}


def assert_physical(h: SteadyHarmonics) -> None:
    rep = physicality_report(h)
    if (rep["trace"] > PHYSICALITY_TOL["trace"]
            or rep["hermiticity"] > PHYSICALITY_TOL["hermiticity"]
            or rep["min_eigenvalue"] < PHYSICALITY_TOL["min_eigenvalue"]):
        raise SolverError(f"unphysical steady state: {rep}")


def assemble_harmonic_system(gen: RotatingFrameGenerator, n_h: int):
    """Block-tridiagonal system ``A x = b`` for all harmonics ``|n| <= n_h``.

    Block row ``n`` reads ``(-i n mu_s - l0) x_n - l_plus x_{n-1} - l_minus x_{n+1} = 0``;
    the rho_00 row of ``n = 0`` is replaced by the trace condition.
    """
    if n_h < 1:
        raise SolverError(f"harmonic truncation must be >= 1, got {n_h}")
    if gen.mu_s <= 0:
        raise SolverError("harmonic balance needs mu_s > 0")
    nb = 2 * n_h + 1
    A = np.zeros((9 * nb, 9 * nb), dtype=complex)
    eye = np.eye(9)
    for i, n in enumerate(range(-n_h, n_h + 1)):
        rows = slice(9 * i, 9 * i + 9)
        A[rows, rows] = -1j * n * gen.angular_mu_s * eye - gen.l0
        if i > 0:
            A[rows, 9 * (i - 1):9 * i] = -gen.l_plus
        if i < nb - 1:
            A[rows, 9 * (i + 1):9 * (i + 2)] = -gen.l_minus
    b = np.zeros(9 * nb, dtype=complex)
    r = 9 * n_h
    A[r, :] = 0.0
    A[r, [r, r + 4, r + 8]] = 1.0
    b[r] = 1.0
    return A, b


def harmonics_from_vector(x: np.ndarray, n_h: int, mu_s: float, mu_d: float) -> SteadyHarmonics:
    rho = np.asarray(x).reshape(2 * n_h + 1, 3, 3)
    return SteadyHarmonics(np.transpose(rho, (0, 2, 1)).copy(), n_h, mu_s, mu_d)


def factor_harmonic_system(A: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu = scipy.linalg.lu_factor(A, check_finite=True)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
            raise SolverError(f"harmonic-balance system is singular: {exc}") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= np.finfo(float).eps * diag.max():
        raise SolverError(
            "harmonic-balance system is singular "
            f"(pivot ratio {diag.min() / diag.max():.3e}); check mu_s and the decay rates"
        )
    return lu


def harmonic_balance_solve(gen: RotatingFrameGenerator, n_h: int = 3) -> SteadyHarmonics:
    """Periodic steady state by harmonic balance, truncated at ``|n| <= n_h``."""
    A, b = assemble_harmonic_system(gen, n_h)
    x = scipy.linalg.lu_solve(factor_harmonic_system(A), b)
    h = harmonics_from_vector(x, n_h, gen.mu_s, gen.mu_d)
    assert_physical(h)
    return h


def relative_residual(gen: RotatingFrameGenerator, h: SteadyHarmonics) -> float:
    A, b = assemble_harmonic_system(gen, h.n_h)
    x = np.transpose(h.coeffs, (0, 2, 1)).ravel()
    return float(np.linalg.norm(A @ x - b)
                 / (np.linalg.norm(A, 2) * np.linalg.norm(x) + np.linalg.norm(b)))


def solve_steady_state(
    gen: RotatingFrameGenerator, n_h: int = 3, convergence_tol: float = 1e-8
) -> SteadyHarmonics:
    """Harmonic balance plus a truncation check at ``n_h + 1``.

    Emits a ``RuntimeWarning`` if raising the truncation changes any
    coefficient by more than ``convergence_tol``.
    """
    h = harmonic_balance_solve(gen, n_h)
    finer = harmonic_balance_solve(gen, n_h + 1)
    change = np.abs(finer.coeffs[1:-1] - h.coeffs).max()
    if change > convergence_tol:
        warnings.warn(
            f"harmonic truncation n_h={n_h} not converged (change {change:.2e})",
            RuntimeWarning, stacklevel=2,
        )
    return h


def _reduce(L: np.ndarray):
    """Split a 9x9 generator into the affine form acting on rho without rho_00."""
    A = L[np.ix_(_REDUCED, _REDUCED)].copy()
    c = L[_REDUCED, 0].copy()
    A[:, _POS_11] -= c
    A[:, _POS_22] -= c
    return A, c


def _matrix_power(U: np.ndarray, n: int) -> np.ndarray:
    result = np.eye(U.shape[0], dtype=U.dtype)
    base = U
    while n:
        if n & 1:
            result = base @ result
        base = base @ base
        n >>= 1
    return result


def ode_steady_state(
    gen: RotatingFrameGenerator,
    horizon: float | None = None,
    dt_ctrl: float = 1e-13,
    n_h: int = 3,
    samples: int = 64,
    drift_tol: float = 1e-9,
) -> SteadyHarmonics:
    """Time-domain oracle for :func:`harmonic_balance_solve`.

    Integrates the full time-dependent master equation (DOP853, relative
    tolerance ``dt_ctrl``) over one drive period to obtain the period
    propagator, carries ``rho(0) = |0><0|`` forward over ``horizon`` seconds
    by composing it, and projects one settled period onto ``exp(-i n mu_s t)``.

    The trace is used to eliminate rho_00, and a second pass integrates the
    deviation from the first pass's period average.  Together these keep small
    harmonics on top of O(1) averages accurate to many digits.
    """
    if gen.mu_s <= 0:
        raise SolverError("time-domain oracle needs mu_s > 0")
    mu = gen.angular_mu_s
    period = TWO_PI / mu
    if horizon is None:
        horizon = 50.0 / gen.gamma_10_t
    n_periods = max(2, math.ceil(horizon / period))
    ts = np.arange(samples + 1) * period / samples

    A0, c0 = _reduce(gen.l0)
    Ap, cp = _reduce(gen.l_plus)
    Am, cm = _reduce(gen.l_minus)

    def period_flow(shift):
        f0, fp, fm = A0 @ shift + c0, Ap @ shift + cp, Am @ shift + cm

        def rhs(t, y):
            e = np.exp(-1j * mu * t)
            G = np.zeros((9, 9), dtype=complex)
            G[:8, :8] = A0 + Ap * e + Am / e
            G[:8, 8] = f0 + fp * e + fm / e
            return (G @ y.reshape(9, 9)).ravel()

        sol = solve_ivp(rhs, (0.0, period), np.eye(9, dtype=complex).ravel(),
                        method="DOP853", rtol=dt_ctrl, atol=1e-24, t_eval=ts)
        if not sol.success:
            raise SolverError(f"time integration failed: {sol.message}")
        return sol.y.T.reshape(-1, 9, 9)

    def settle(props, start):
        U = props[-1]
        half = _matrix_power(U, n_periods // 2) @ start
        end = _matrix_power(U, n_periods - n_periods // 2) @ half
        drift = np.abs(end - half).max() / max(np.abs(end[:8]).max(), 1e-300)
        return end, drift

    ground = np.zeros(9, dtype=complex)
    ground[8] = 1.0
    props = period_flow(np.zeros(8, dtype=complex))
    y_end, drift = settle(props, ground)
    if drift > drift_tol:
        raise OracleTimeoutError(
            f"state still drifting at horizon {horizon:.3e} s (relative change {drift:.2e})"
        )
    ybar = np.array([props[k] @ y_end for k in range(samples)])[:, :8].mean(axis=0)

    props = period_flow(ybar)
    start = np.append(y_end[:8] - ybar, 1.0)
    z_end, _ = settle(props, start)
    z = np.array([props[k] @ z_end for k in range(samples)])[:, :8]

    out = np.zeros((2 * n_h + 1, 9), dtype=complex)
    for i, n in enumerate(range(-n_h, n_h + 1)):
        zn = (z * np.exp(1j * n * mu * ts[:samples])[:, None]).mean(axis=0)
        if n == 0:
            zn = zn + ybar
        out[i, _REDUCED] = zn
        out[i, 0] = (1.0 if n == 0 else 0.0) - zn[_POS_11] - zn[_POS_22]
    return harmonics_from_vector(out.ravel(), n_h, gen.mu_s, gen.mu_d)


# lab-frame rotation of each level as (mu_d, mu_s) multiples
_FRAME = {0: (0, 0), 1: (0, 1), 2: (1, 1)}


def lab_frame_component(h: SteadyHarmonics, entry: tuple[int, int], p: int, q: int) -> complex:
    """Coefficient of ``<sigma_jk>`` at lab frequency ``p mu_d + q mu_s``."""
    j, k = entry
    a = _FRAME[k][0] - _FRAME[j][0]
    b = _FRAME[k][1] - _FRAME[j][1]
    n = q - b
    if p != a or abs(n) > h.n_h:
        raise SolverError(
            f"component (p, q) = ({p}, {q}) of sigma_{j}{k} is not represented "
            f"(needs p = {a} and |q - {b}| <= n_h = {h.n_h})"
        )
    return complex(h.coeffs[n + h.n_h, j, k])
