"""Single-click remote entanglement between two transducer nodes.

Each node converts a photon with probability ``p_tot`` (of which ``p_coh``
keeps its phase) and adds a noise photon with probability ``p_dark``.  The
herald is a click on one fixed detector behind a 50/50 beam splitter, so
every photon reaches it with probability 1/2 and detection is threshold-type.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateResultError, InvalidParameterError
from .params import SystemConfig
from .response import (
    conversion_bandwidth,
    map_grid,
    reference_phase,
    small_signal,
    wrap_phase,
)


@dataclass(frozen=True)
class NodeChannel:
    p_tot: float
    p_coh: float
    theta: float
    p_dark: float
    tau_conv: float | None = None

    def __post_init__(self):
        if not (0 <= self.p_coh <= self.p_tot + 1e-12 <= 1 + 1e-12):
            raise InvalidParameterError(
                f"need 0 <= p_coh <= p_tot <= 1, got p_coh={self.p_coh}, p_tot={self.p_tot}")
        if not (0 <= self.p_dark < 1):
            raise InvalidParameterError(f"p_dark must be in [0, 1), got {self.p_dark}")

    @property
    def p_inc(self) -> float:
        return self.p_tot - self.p_coh

    @classmethod
    def from_rates(cls, p_tot, p_coh, theta, r_dark, tau_conv):
        return cls(p_tot=float(p_tot), p_coh=float(p_coh), theta=float(theta),
                   p_dark=float(tau_conv * r_dark), tau_conv=float(tau_conv))


@dataclass(frozen=True)
class ClickWeights:
    pi_00: float
    pi_01: float
    pi_10: float
    pi_11: float


@dataclass(frozen=True)
class EntanglementResult:
    p_e: float
    n_click: float
    f_1c: float
    r_herald: float | None = None
    regime_ok: bool = True


def click_weights(a: NodeChannel, b: NodeChannel) -> ClickWeights:
    """Probability of a herald click given photon numbers ``|ij>`` at the nodes."""
    noise = (1 - a.p_dark / 2) * (1 - b.p_dark / 2)

    def pi(i, j):
        return 1 - (1 - i * a.p_tot / 2) * (1 - j * b.p_tot / 2) * noise

    return ClickWeights(pi_00=pi(0, 0), pi_01=pi(0, 1), pi_10=pi(1, 0), pi_11=pi(1, 1))


def optimal_excitation(w: ClickWeights) -> float:
    """Qubit excitation probability that maximises the single-click fidelity."""
    if w.pi_00 + w.pi_11 <= 0:
        raise DegenerateResultError("pi_00 and pi_11 are both zero")
    r00, r11 = math.sqrt(w.pi_00), math.sqrt(w.pi_11)
    return r00 / (r00 + r11)


def fidelity_single_click(a: NodeChannel, b: NodeChannel, p_e: float) -> EntanglementResult:
    """Bell-state fidelity and total click probability at excitation ``p_e``.

    The relative phase is ``theta_a - theta_b``; only the coherent parts of the
    two conversions interfere, attenuated by the chance that neither node adds
    a noise photon at the herald detector.
    """
    if not (0 < p_e < 1):
        raise InvalidParameterError(f"p_e must lie in (0, 1), got {p_e}")
    w = click_weights(a, b)
    alpha = (1 - a.p_dark / 2) * (1 - b.p_dark / 2)
    delta = math.sqrt(a.p_coh * b.p_coh)
    theta = a.theta - b.theta
    q = 1 - p_e
    n_click = 2 * (q * q * w.pi_00 + p_e * q * (w.pi_10 + w.pi_01) + p_e * p_e * w.pi_11)
    if n_click <= 0:
        raise DegenerateResultError("total single-click probability is zero")
    f = (w.pi_10 + w.pi_01 + alpha * delta * math.cos(theta)) * p_e * q / n_click
    dark = max(a.p_dark, b.p_dark)
    return EntanglementResult(p_e=p_e, n_click=n_click, f_1c=f,
                              regime_ok=dark < 0.1 * p_e and p_e <= 0.1)


def heralding_rate(n_click: float, r_rep: float) -> float:
    if not (r_rep > 0):
        raise InvalidParameterError("repetition rate must be > 0")
    return n_click * r_rep


def entangle(a: NodeChannel, b: NodeChannel, r_rep: float = 1e6) -> EntanglementResult:
    """Fidelity and heralding rate at the optimal excitation probability."""
    p_e = optimal_excitation(click_weights(a, b))
    res = fidelity_single_click(a, b, p_e)
    if not res.regime_ok:
        warnings.warn(
            f"outside the P_d << P_e << 1 regime (p_e={p_e:.3g}, "
            f"p_dark={max(a.p_dark, b.p_dark):.3g})", RuntimeWarning, stacklevel=2)
    return replace(res, r_herald=heralding_rate(res.n_click, r_rep))


def ideal_reference(cfg: SystemConfig) -> SystemConfig:
    """Resonant, undephased copy of ``cfg`` (node B and the phase reference)."""
    ref = cfg.with_emitter(delta_omega_10=0.0, delta_omega_20=0.0,
                           gamma_phi_1=0.0, gamma_phi_2=0.0)
    return replace(ref, signal_detuning=0.0, pump_detuning=0.0)


def node_channel(cfg: SystemConfig, tau_conv: float, theta_ref: float) -> NodeChannel:
    ss = small_signal(cfg)
    return NodeChannel.from_rates(ss.p_tot, ss.p_coh, wrap_phase(ss.theta - theta_ref),
                                  ss.r_dark, tau_conv)


def reference_nodes(cfg: SystemConfig):
    """(node-B channel, tau_conv, theta_ref) for the ideal transducer.

    The drive-pulse length and detection window are both the ideal node's
    conversion time; node A is evaluated with the same window.
    """
    ref = ideal_reference(cfg)
    tau = conversion_bandwidth(ref).tau_conv
    theta_ref = reference_phase(ref)
    return node_channel(ref, tau, theta_ref), tau, theta_ref


def sweep_entanglement_dephasing(cfg: SystemConfig, grid_1: Sequence[float],
                                 grid_2: Sequence[float], threads: int = 1,
                                 on_error: Callable | None = None) -> list[dict]:
    node_b, tau, theta_ref = reference_nodes(cfg)
    points = [(g1, g2) for g1 in grid_1 for g2 in grid_2]

    def row(pt):
        g1, g2 = pt
        node_a = node_channel(cfg.with_emitter(gamma_phi_1=g1, gamma_phi_2=g2), tau, theta_ref)
        res = fidelity_single_click(node_a, node_b,
                                    optimal_excitation(click_weights(node_a, node_b)))
        return {"gamma_phi_1": g1, "gamma_phi_2": g2, "f_1c": res.f_1c,
                "r_herald": heralding_rate(res.n_click, cfg.r_rep),
                "ratio_a": node_a.p_coh / node_a.p_tot if node_a.p_tot > 0 else math.nan,
                "p_dark_a": node_a.p_dark, "p_e": res.p_e, "n_click": res.n_click,
                "regime_ok": int(res.regime_ok)}

    return map_grid(row, points, threads, on_error)


def sweep_entanglement_detuning(cfg: SystemConfig, grid_10: Sequence[float],
                                grid_20: Sequence[float], threads: int = 1,
                                on_error: Callable | None = None) -> list[dict]:
    node_b, tau, theta_ref = reference_nodes(cfg)
    points = [(d10, d20) for d10 in grid_10 for d20 in grid_20]

    def row(pt):
        d10, d20 = pt
        node_a = node_channel(cfg.with_emitter(delta_omega_10=d10, delta_omega_20=d20),
                              tau, theta_ref)
        res = fidelity_single_click(node_a, node_b,
                                    optimal_excitation(click_weights(node_a, node_b)))
        return {"delta_omega_10": d10, "delta_omega_20": d20, "f_1c": res.f_1c,
                "r_herald": heralding_rate(res.n_click, cfg.r_rep),
                "theta": node_a.theta, "ratio_a": node_a.p_coh / node_a.p_tot
                if node_a.p_tot > 0 else math.nan,
                "p_e": res.p_e, "n_click": res.n_click, "regime_ok": int(res.regime_ok)}

    return map_grid(row, points, threads, on_error)


def sample_click_weights(a: NodeChannel, b: NodeChannel, trials: int,
                         rng: np.random.Generator, chunk: int = 1_000_000,
                         ) -> tuple[ClickWeights, ClickWeights]:
    """Monte-Carlo estimate of the click weights and their standard errors.

    Each trial draws which of the four possible photons (two converted, two
    noise) reach the herald detector; a click is registered if any does.
    All four weights are estimated from the same draws.
    """
    probs = np.array([a.p_tot / 2, b.p_tot / 2, a.p_dark / 2, b.p_dark / 2])[:, None]
    counts = np.zeros((2, 2), dtype=np.int64)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        hits = rng.random((4, n)) < probs
        noise = hits[2] | hits[3]
        counts[0, 0] += np.count_nonzero(noise)
        counts[1, 0] += np.count_nonzero(noise | hits[0])
        counts[0, 1] += np.count_nonzero(noise | hits[1])
        counts[1, 1] += np.count_nonzero(noise | hits[0] | hits[1])
        done += n
    est = counts / trials
    err = np.sqrt(np.maximum(est * (1 - est), 1.0 / trials) / trials)
    return _weights(est), _weights(err)


def _weights(m: np.ndarray) -> ClickWeights:
    return ClickWeights(pi_00=float(m[0, 0]), pi_01=float(m[0, 1]),
                        pi_10=float(m[1, 0]), pi_11=float(m[1, 1]))
