"""Detected photon fluxes, single-photon figures of merit and parameter sweeps.

The optical output is ``c_out = c_in - i X`` with
``X = sqrt(gamma_21^e) sigma_12 + sqrt(gamma_20^e) sigma_02``.  A filter
removes only the coherent line at the drive frequency, so the detected flux
is the full dipole emission ``(gamma_20^e + gamma_21^e) <sigma_22>`` minus
``|X^(1,0)|^2``.  Mean fields are in sqrt(photons/s), fluxes in photons/s.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from . import dynamics
from .dynamics import SteadyHarmonics, lab_frame_component
from .errors import DegenerateResultError, SaturationError, SolverError, TransducerError
from .params import DriveConfig, EffectiveRates, SystemConfig

TWO_PI = 2.0 * math.pi

#: signal fluxes (photons/s) of the regression estimate
REGRESSION_FLUXES = (1e3, 2e3, 4e3, 8e3, 1.6e4)


@dataclass(frozen=True)
class FluxResult:
    r_tot: float
    r_coh: float
    c_out_11: complex
    c_out_10_dipole: complex
    s22_dc: float
    r_sideband: float  # |<c_out^(1,-1)>|^2, excluded from r_tot


@dataclass(frozen=True)
class ConversionMetrics:
    p_tot: float
    p_coh: float
    p_inc: float
    theta: float
    r_dark: float | None = None
    bandwidth_fwhm: float | None = None
    tau_conv: float | None = None


@dataclass(frozen=True)
class SmallSignal:
    """Linear-response quantities at vanishing signal flux.

    ``transfer`` is d<c_out^(1,1)>/dE_s; ``p_coh = |transfer|^2``.
    """

    p_tot: float
    p_coh: float
    transfer: complex
    r_dark: float

    @property
    def theta(self) -> float:
        return float(np.angle(self.transfer)) if self.p_coh > 0 else 0.0

    @property
    def ratio(self) -> float:
        return self.p_coh / self.p_tot if self.p_tot > 0 else math.nan


def _output_fields(h: SteadyHarmonics, rates: EffectiveRates):
    a21 = math.sqrt(TWO_PI * rates.gamma_21_e)
    a20 = math.sqrt(TWO_PI * rates.gamma_20_e)

    def X(p, q):
        try:
            s12 = lab_frame_component(h, (1, 2), p, q)
        except SolverError:
            s12 = 0.0
        try:
            s02 = lab_frame_component(h, (0, 2), p, q)
        except SolverError:
            s02 = 0.0
        return a21 * s12 + a20 * s02

    return X


def photon_fluxes(h: SteadyHarmonics, rates: EffectiveRates, drives: DriveConfig | None = None) -> FluxResult:
    """Detected total and coherent-converted fluxes from a steady state.

    ``drives`` is accepted for symmetry with the input-output relation; the
    ``c_in x dipole`` cross terms cancel between the two flux terms, so the
    result does not depend on it.
    """
    X = _output_fields(h, rates)
    x10, x11, x1m1 = X(1, 0), X(1, 1), X(1, -1)
    s22 = float(np.real(h[0][2, 2]))
    emitted = TWO_PI * (rates.gamma_20_e + rates.gamma_21_e) * s22
    return FluxResult(
        r_tot=emitted - abs(x10) ** 2,
        r_coh=abs(x11) ** 2,
        c_out_11=-1j * x11,
        c_out_10_dipole=x10,
        s22_dc=s22,
        r_sideband=abs(x1m1) ** 2,
    )


def pump_output_amplitude(h: SteadyHarmonics, rates: EffectiveRates, drives: DriveConfig) -> complex:
    """Coherent optical output at the pump frequency, ``E_d - i sqrt(gamma_20^e) <sigma_02>``.

    Only meaningful for the transmitted pump; used to pin the drive and
    input-output sign conventions against the two-level reflection formula.
    """
    s02 = dynamics.lab_frame_component(h, (0, 2), 1, 0)
    return complex(drives.e_d - 1j * math.sqrt(TWO_PI * rates.gamma_20_e) * s02)


def steady_state(cfg: SystemConfig, signal_flux: float | None = None) -> SteadyHarmonics:
    gen = dynamics.build_generator(cfg.rates(), cfg.emitter, cfg.drive(signal_flux))
    return dynamics.harmonic_balance_solve(gen, cfg.n_h)


def fluxes(cfg: SystemConfig, signal_flux: float | None = None) -> FluxResult:
    return photon_fluxes(steady_state(cfg, signal_flux), cfg.rates(), cfg.drive(signal_flux))


def small_signal(cfg: SystemConfig) -> SmallSignal:
    """Perturbative slopes dR/d|E_s|^2 at E_s -> 0 (real signal amplitude).

    The generator is affine in the signal amplitude ``eps``, so the
    harmonic-balance matrix is ``A0 + eps A1``.  Expanding
    ``x = x0 + eps x1 + eps^2 x2`` gives ``A0 x1 = -A1 x0`` and
    ``A0 x2 = -A1 x1``.  R_coh starts at ``eps^2 |X11[x1]|^2``.  R_tot has no
    odd orders (the loop phase of the three couplings averages out of DC
    quantities), so its slope is the ``eps^2`` coefficient.
    """
    rates = cfg.rates()
    n_h = cfg.n_h
    gen0 = dynamics.build_generator(rates, cfg.emitter, cfg.drive(0.0))
    gen1 = dynamics.build_generator(rates, cfg.emitter, cfg.drive(1.0))
    A0, b = dynamics.assemble_harmonic_system(gen0, n_h)
    A1 = dynamics.assemble_harmonic_system(gen1, n_h)[0] - A0
    lu = dynamics.factor_harmonic_system(A0)
    x0 = scipy.linalg.lu_solve(lu, b)
    x1 = scipy.linalg.lu_solve(lu, -A1 @ x0)
    x2 = scipy.linalg.lu_solve(lu, -A1 @ x1)

    def fields(x):
        h = dynamics.harmonics_from_vector(x, n_h, gen0.mu_s, gen0.mu_d)
        X = _output_fields(h, rates)
        return X(1, 0), X(1, 1), float(np.real(h[0][2, 2]))

    h0 = dynamics.harmonics_from_vector(x0, n_h, gen0.mu_s, gen0.mu_d)
    dynamics.assert_physical(h0)
    x10_0, _, s22_0 = fields(x0)
    x10_1, x11_1, _ = fields(x1)
    x10_2, _, s22_2 = fields(x2)
    emit = TWO_PI * (rates.gamma_20_e + rates.gamma_21_e)
    r_dark = emit * s22_0 - abs(x10_0) ** 2
    p_tot = emit * s22_2 - (2 * np.real(np.conj(x10_0) * x10_2) + abs(x10_1) ** 2)
    transfer = -1j * x11_1
    return SmallSignal(p_tot=float(p_tot), p_coh=float(abs(transfer) ** 2),
                       transfer=complex(transfer), r_dark=float(r_dark))


def regression_efficiencies(
    cfg: SystemConfig, signal_fluxes: Sequence[float] = REGRESSION_FLUXES,
    max_curvature: float = 0.01,
) -> tuple[float, float]:
    """Slopes of R_tot and R_coh from a quadratic fit over ``signal_fluxes``.

    Raises :class:`SaturationError` when the quadratic term is not negligible
    (``|c| max(flux) / b >= max_curvature``).
    """
    f = np.asarray(signal_fluxes, dtype=float)
    r = np.array([[fr.r_tot, fr.r_coh] for fr in (fluxes(cfg, x) for x in f)])
    slopes = []
    for col in r.T:
        c, b, _ = np.polyfit(f, col, 2)
        if b != 0 and abs(c) * f.max() / abs(b) >= max_curvature:
            raise SaturationError(
                f"quadratic term is {abs(c) * f.max() / abs(b):.2%} of the slope; "
                "shrink the signal-flux grid"
            )
        slopes.append(float(b))
    return slopes[0], slopes[1]


def single_photon_efficiencies(cfg: SystemConfig, validate: bool = False) -> ConversionMetrics:
    """Single-photon P_tot, P_coh, P_inc and transduction phase.

    Values come from the perturbative solve; with ``validate=True`` the
    regression estimate is computed as well and must agree within 1 %.
    """
    ss = small_signal(cfg)
    if validate:
        p_tot_a, p_coh_a = regression_efficiencies(cfg)
        for name, a, b in (("p_tot", p_tot_a, ss.p_tot), ("p_coh", p_coh_a, ss.p_coh)):
            if abs(a - b) > 0.01 * max(abs(b), 1e-12) and abs(a - b) > 1e-12:
                raise SolverError(f"{name}: regression {a:.6g} vs perturbative {b:.6g}")
    return ConversionMetrics(
        p_tot=ss.p_tot, p_coh=ss.p_coh, p_inc=ss.p_tot - ss.p_coh,
        theta=ss.theta, r_dark=ss.r_dark,
    )


def dark_count_rate(cfg: SystemConfig) -> float:
    """Detected flux with the signal switched off (Hz)."""
    return fluxes(cfg, 0.0).r_tot


@dataclass(frozen=True)
class Bandwidth:
    bandwidth_fwhm: float
    tau_conv: float
    curve: list[tuple[float, float]]
    center: float


def tau_from_bandwidth(bw: float) -> float:
    return 4.0 / (TWO_PI * bw)


def conversion_bandwidth(
    cfg: SystemConfig, span_factor: float = 4.0, n_initial: int = 81, rel_tol: float = 1e-3,
) -> Bandwidth:
    """FWHM of P_coh versus signal detuning, by refined linear interpolation."""
    em = cfg.emitter
    span = span_factor * (em.gamma_20 + em.gamma_21)
    if span <= 0:
        raise DegenerateResultError("zero sweep span: gamma_20 + gamma_21 = 0")
    samples: dict[float, float] = {}

    def p(delta):
        delta = float(delta)
        if delta not in samples:
            samples[delta] = small_signal(replace(cfg, signal_detuning=delta)).p_coh
        return samples[delta]

    for d in np.linspace(-span, span, n_initial):
        p(d)
    best = max(samples, key=samples.get)
    step = 2 * span / (n_initial - 1)
    opt = minimize_scalar(lambda d: -p(d), bounds=(best - step, best + step),
                          method="bounded", options={"xatol": step * 1e-6})
    center = float(opt.x) if -opt.fun >= samples[best] else best
    peak = p(center)
    if not peak > 0:
        raise DegenerateResultError("P_coh vanishes across the sweep")

    def crossings():
        xs = np.array(sorted(samples))
        ys = np.array([samples[x] for x in xs]) - peak / 2
        ic = int(np.searchsorted(xs, center))
        left = right = None
        for i in range(ic - 1, -1, -1):
            if ys[i] < 0 <= ys[i + 1]:
                left = (xs[i], xs[i + 1])
                break
        for i in range(ic, len(xs) - 1):
            if ys[i] >= 0 > ys[i + 1]:
                right = (xs[i], xs[i + 1])
                break
        if left is None or right is None:
            raise DegenerateResultError("P_coh does not fall below half maximum within the sweep")

        def interp(a, b):
            ya, yb = samples[a] - peak / 2, samples[b] - peak / 2
            return a + (b - a) * ya / (ya - yb)

        return left, right, interp(*right) - interp(*left)

    left, right, fwhm = crossings()
    for _ in range(60):
        p(0.5 * (left[0] + left[1]))
        p(0.5 * (right[0] + right[1]))
        left, right, new = crossings()
        done = abs(new - fwhm) <= rel_tol * fwhm
        fwhm = new
        if done:
            break
    curve = sorted(samples.items())
    return Bandwidth(bandwidth_fwhm=fwhm, tau_conv=tau_from_bandwidth(fwhm),
                     curve=curve, center=center)


def conversion_metrics(cfg: SystemConfig, validate: bool = False) -> ConversionMetrics:
    m = single_photon_efficiencies(cfg, validate=validate)
    bw = conversion_bandwidth(cfg)
    return replace(m, bandwidth_fwhm=bw.bandwidth_fwhm, tau_conv=bw.tau_conv)


def map_grid(func: Callable, items: Iterable, threads: int = 1,
             on_error: Callable | None = None) -> list:
    """Evaluate ``func`` over ``items``; results keep the input order.

    With ``on_error`` set, a point that raises :class:`TransducerError` yields
    ``on_error(item, exc)`` instead of aborting the whole grid.
    """
    items = list(items)
    if on_error is not None:
        inner = func

        def func(it):
            try:
                return inner(it)
            except TransducerError as exc:
                return on_error(it, exc)

    if threads <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def reference_phase(cfg: SystemConfig) -> float:
    """Transduction phase of the resonant, undephased transducer."""
    ref = cfg.with_emitter(delta_omega_10=0.0, delta_omega_20=0.0,
                           gamma_phi_1=0.0, gamma_phi_2=0.0)
    ref = replace(ref, signal_detuning=0.0, pump_detuning=0.0)
    return small_signal(ref).theta


def wrap_phase(x: float) -> float:
    return float((x + math.pi) % (2 * math.pi) - math.pi)


def sweep_pump(cfg: SystemConfig, powers: Sequence[float], threads: int = 1,
               on_error: Callable | None = None) -> list[dict]:
    if any(p <= 0 for p in powers):
        raise SolverError("pump powers must be > 0")

    def row(power):
        ss = small_signal(replace(cfg, pump_power=power))
        return {"power": power, "p_coh": ss.p_coh, "r_dark": ss.r_dark, "p_tot": ss.p_tot}

    return map_grid(row, powers, threads, on_error)


def sweep_dephasing(cfg: SystemConfig, grid_1: Sequence[float], grid_2: Sequence[float],
                    threads: int = 1, on_error: Callable | None = None) -> list[dict]:
    points = [(g1, g2) for g1 in grid_1 for g2 in grid_2]
    theta_ref = reference_phase(cfg)

    def row(pt):
        g1, g2 = pt
        ss = small_signal(cfg.with_emitter(gamma_phi_1=g1, gamma_phi_2=g2))
        return {"gamma_phi_1": g1, "gamma_phi_2": g2, "p_coh": ss.p_coh,
                "p_tot": ss.p_tot, "ratio": ss.ratio,
                "theta": wrap_phase(ss.theta - theta_ref), "r_dark": ss.r_dark}

    return map_grid(row, points, threads, on_error)


def sweep_detuning(cfg: SystemConfig, grid_10: Sequence[float], grid_20: Sequence[float],
                   threads: int = 1, on_error: Callable | None = None) -> list[dict]:
    points = [(d10, d20) for d10 in grid_10 for d20 in grid_20]
    theta_ref = reference_phase(cfg)

    def row(pt):
        d10, d20 = pt
        ss = small_signal(cfg.with_emitter(delta_omega_10=d10, delta_omega_20=d20))
        return {"delta_omega_10": d10, "delta_omega_20": d20, "p_coh": ss.p_coh,
                "p_tot": ss.p_tot, "ratio": ss.ratio,
                "theta": wrap_phase(ss.theta - theta_ref), "r_dark": ss.r_dark}

    return map_grid(row, points, threads, on_error)
