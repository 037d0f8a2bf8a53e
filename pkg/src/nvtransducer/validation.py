"""Self-checks of solver invariants, runnable from the command line.

These are properties the implementation must satisfy for any sensible
configuration: agreement with the time-domain oracle, physicality,
truncation convergence, frame independence and the input-output sign.
They do not compare against published figures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import dynamics, response
from .entanglement import (
    click_weights, fidelity_single_click, optimal_excitation, reference_nodes,
)
from .params import OVERCOUPLED_CHAIN, EmitterParams, SystemConfig


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def _below(name, value, limit):
    return Check(name, float(value), float(limit), bool(value < limit))


def harmonic_mismatch(h_a: dynamics.SteadyHarmonics, h_b: dynamics.SteadyHarmonics,
                      floor: float = 1e-12) -> float:
    """Largest relative difference over coefficients above ``floor`` in ``h_a``."""
    mask = np.abs(h_a.coeffs) > floor
    return float(np.max(np.abs(h_a.coeffs - h_b.coeffs)[mask] / np.abs(h_a.coeffs)[mask]))


def check_oracle(cfg: SystemConfig, signal_flux: float = 1e4) -> Check:
    gen = dynamics.build_generator(cfg.rates(), cfg.emitter, cfg.drive(signal_flux))
    err = harmonic_mismatch(dynamics.harmonic_balance_solve(gen, cfg.n_h),
                            dynamics.ode_steady_state(gen, n_h=cfg.n_h))
    return _below("harmonic balance vs time-domain oracle", err, 1e-6)


def check_physicality(cfg: SystemConfig, signal_flux: float = 1e4) -> Check:
    rep = dynamics.physicality_report(response.steady_state(cfg, signal_flux))
    worst = max(rep["trace"], rep["hermiticity"], max(0.0, -rep["min_eigenvalue"]))
    return _below("trace, hermiticity and positivity", worst, 1e-10)


def check_truncation(cfg: SystemConfig) -> Check:
    a = response.small_signal(cfg)
    b = response.small_signal(replace(cfg, n_h=cfg.n_h + 1))
    diffs = [abs(x - y) / max(abs(y), 1e-300)
             for x, y in ((a.p_tot, b.p_tot), (a.p_coh, b.p_coh), (a.r_dark, b.r_dark))]
    return _below(f"n_h {cfg.n_h} -> {cfg.n_h + 1} relative change", max(diffs), 1e-8)


def check_sideband(cfg: SystemConfig, signal_flux: float = 1e4) -> Check:
    fr = response.fluxes(cfg, signal_flux)
    return _below("image sideband |c^(1,-1)|^2 / R_coh", fr.r_sideband / fr.r_coh, 1e-3)


def check_frame_independence(cfg: SystemConfig) -> list[Check]:
    base = response.fluxes(cfg, 0.0)
    shifted = response.fluxes(replace(cfg, signal_detuning=cfg.signal_detuning + 7.3e6), 0.0)
    scale = max(abs(base.r_tot), abs(base.s22_dc), 1e-300)
    change = max(abs(base.r_tot - shifted.r_tot), abs(base.s22_dc - shifted.s22_dc)) / scale
    return [
        _below("no-signal observables vs signal frequency", change, 1e-10),
        _below("no-signal converted amplitude |c^(1,1)|", abs(base.c_out_11), 1e-300),
    ]


def check_sign_convention(pump_power: float = 1e-20) -> Check:
    """Weak resonant drive of an overcoupled 0-2 transition alone."""
    cfg = SystemConfig(
        cavity=replace(OVERCOUPLED_CHAIN, g_12=0.0),
        emitter=EmitterParams(gamma_21=0.0),
        pump_power=pump_power,
        pump_detuning=EmitterParams().omega_10,
    )
    rates, drives = cfg.rates(), cfg.drive(0.0)
    out = response.pump_output_amplitude(response.steady_state(cfg, 0.0), rates, drives)
    expected = drives.e_d * (1 - 2 * rates.gamma_20_e / rates.gamma_20_t)
    return _below("two-level reflection vs input-output formula",
                  abs(out - expected) / abs(expected), 1e-4)


def check_methods_agree(cfg: SystemConfig) -> Check:
    ss = response.small_signal(cfg)
    p_tot, p_coh = response.regression_efficiencies(cfg)
    err = max(abs(p_tot - ss.p_tot) / ss.p_tot, abs(p_coh - ss.p_coh) / ss.p_coh)
    return _below("regression vs perturbative efficiencies", err, 1e-2)


def check_optimal_excitation(cfg: SystemConfig) -> Check:
    node, _, _ = reference_nodes(cfg)
    p_e = optimal_excitation(click_weights(node, node))
    f_opt = fidelity_single_click(node, node, p_e).f_1c
    gain = min(f_opt - fidelity_single_click(node, node, p_e * s).f_1c for s in (0.9, 1.1))
    return Check("fidelity at closed-form p_e vs p_e(1 +- 0.1)", gain, 0.0, gain >= 0.0)


def run_invariant_suite(cfg: SystemConfig | None = None) -> list[Check]:
    cfg = cfg or SystemConfig()
    ss = response.small_signal(cfg)
    checks = [
        check_oracle(cfg),
        check_physicality(cfg),
        check_truncation(cfg),
        check_sideband(cfg),
        *check_frame_independence(cfg),
        check_sign_convention(),
        check_methods_agree(cfg),
        check_optimal_excitation(cfg),
        Check("p_coh - p_tot", ss.p_coh - ss.p_tot, 0.0, ss.p_coh <= ss.p_tot),
    ]
    return checks


def all_passed(checks: list[Check]) -> bool:
    return all(c.passed for c in checks) and not any(math.isnan(c.value) for c in checks)
