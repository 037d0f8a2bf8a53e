"""Physical parameters and closed-form rate formulas for the NV0 transducer.

Every frequency and rate stored here is an ordinary frequency in Hz (the
``X/2pi`` value).  Conversion to angular units happens once, when the
rotating-frame generator is assembled in :mod:`nvtransducer.dynamics`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from scipy.constants import h as PLANCK
from scipy.special import erf

from .errors import InvalidParameterError

#: FWHM-to-sigma factor of a Gaussian, rounded as it is quoted for PLE lines.
GAUSSIAN_FWHM_PER_SIGMA = 2.36


def _require_nonneg(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (value >= 0) or math.isinf(value):
            raise InvalidParameterError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class CavityChain:
    """Microwave (a), mechanical (b) and optical (c) modes and their couplings.

    The defaults carry small internal losses in the mechanical and optical
    resonators.  The external rates are chosen so that the waveguide-coupled
    emitter rates stay at 1.3 MHz, 14 MHz and 0.56 MHz; the internal parts were
    fitted once with :func:`nvtransducer.calibration.calibrate_internal_losses`.
    See :data:`CALIBRATION_RECORD`.
    """

    omega_a: float = 10e9
    omega_b: float = 10e9
    omega_c: float = 500e12
    g_x: float = 1e6
    g_y: float = 1e6
    g_02: float = 1e9
    g_12: float = 0.2e9
    kappa_a_i: float = 0.0
    kappa_a_e: float = 2.31e6
    kappa_b_i: float = 1.121e6
    kappa_b_e: float = 1.189e6
    kappa_c_i: float = 52.06e9
    kappa_c_e: float = 165.17e9

    def __post_init__(self):
        _require_nonneg(self, [f.name for f in fields(self)])
        for mode in "abc":
            if self.total_kappa(mode) <= 0:
                raise InvalidParameterError(
                    f"total linewidth of cavity {mode!r} must be > 0 "
                    f"(kappa_{mode}_i + kappa_{mode}_e = 0)"
                )

    def total_kappa(self, mode: str) -> float:
        return getattr(self, f"kappa_{mode}_i") + getattr(self, f"kappa_{mode}_e")


#: Fully overcoupled chain (no internal cavity loss).  Reproduces the printed
#: external rates exactly but not the printed conversion figures.
OVERCOUPLED_CHAIN = CavityChain(
    kappa_b_i=0.0,
    kappa_b_e=2.31e6,
    kappa_c_i=0.0,
    kappa_c_e=285.7e9,
)

#: Provenance of the default internal losses; echoed into every run manifest.
CALIBRATION_RECORD = {
    "method": "least squares on (kappa_b_i, kappa_c_i), kappa_b_t and "
    "gamma_20^e held fixed, evaluated at 55 pW",
    "targets": {"p_tot": 0.36, "p_coh": 0.32, "r_dark_hz": 41.0},
    "fitted": {"kappa_b_i": 1.121e6, "kappa_b_e": 1.189e6,
               "kappa_c_i": 52.06e9, "kappa_c_e": 165.17e9},
    "baseline": "overcoupled chain (kappa_b_i = kappa_c_i = 0)",
}


@dataclass(frozen=True)
class EmitterParams:
    """Three-level NV0 emitter: transition frequencies and intrinsic rates."""

    omega_10: float = 10e9
    omega_20: float = 500e12
    delta_omega_10: float = 0.0
    delta_omega_20: float = 0.0
    gamma_10: float = 33e3
    gamma_20: float = 3.5e6
    gamma_21: float = 3.5e6
    gamma_phi_1: float = 0.0
    gamma_phi_2: float = 0.0

    def __post_init__(self):
        _require_nonneg(
            self,
            ["omega_10", "omega_20", "gamma_10", "gamma_20", "gamma_21",
             "gamma_phi_1", "gamma_phi_2"],
        )
        for name in ("delta_omega_10", "delta_omega_20"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    @property
    def omega_21(self) -> float:
        return self.omega_20 - self.omega_10


@dataclass(frozen=True)
class EffectiveRates:
    """Reduced-model decay rates split into internal (i) and external (e) parts."""

    gamma_10_i: float
    gamma_10_e: float
    gamma_20_i: float
    gamma_20_e: float
    gamma_21_i: float
    gamma_21_e: float

    @property
    def gamma_10_t(self) -> float:
        return self.gamma_10_i + self.gamma_10_e

    @property
    def gamma_20_t(self) -> float:
        return self.gamma_20_i + self.gamma_20_e

    @property
    def gamma_21_t(self) -> float:
        return self.gamma_21_i + self.gamma_21_e

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out.update(gamma_10_t=self.gamma_10_t, gamma_20_t=self.gamma_20_t,
                   gamma_21_t=self.gamma_21_t)
        return out


@dataclass(frozen=True)
class DriveConfig:
    """Coherent signal (microwave) and pump (optical) tones.

    ``e_s`` and ``e_d`` are complex amplitudes in sqrt(photons/s); the tone
    frequencies are in Hz.
    """

    e_s: complex
    mu_s: float
    e_d: complex
    mu_d: float

    @property
    def signal_flux(self) -> float:
        return abs(self.e_s) ** 2

    @property
    def pump_flux(self) -> float:
        return abs(self.e_d) ** 2


@dataclass(frozen=True)
class NVZeroFieldParams:
    lambda_so: float
    epsilon_perp: float


@dataclass(frozen=True)
class SystemConfig:
    """Everything needed to evaluate one operating point.

    The tones are specified physically: pump power in watts, signal flux in
    photons/s, and offsets of the tone frequencies from the nominal (unshifted)
    transitions, so that ``mu_s = omega_10 + signal_detuning`` and
    ``mu_d = omega_21 + pump_detuning``.  Static spectral-diffusion shifts
    (``delta_omega_*``) move the emitter, not the tones.
    """

    cavity: CavityChain = field(default_factory=CavityChain)
    emitter: EmitterParams = field(default_factory=EmitterParams)
    pump_power: float = 55e-12
    signal_flux: float = 0.0
    signal_detuning: float = 0.0
    pump_detuning: float = 0.0
    n_h: int = 3
    r_rep: float = 1e6

    def __post_init__(self):
        if not (self.pump_power >= 0) or not (self.signal_flux >= 0):
            raise InvalidParameterError("pump_power and signal_flux must be >= 0")
        if self.n_h < 1:
            raise InvalidParameterError(f"n_h must be >= 1, got {self.n_h}")
        if not (self.r_rep > 0):
            raise InvalidParameterError("r_rep must be > 0")

    @property
    def mu_s(self) -> float:
        return self.emitter.omega_10 + self.signal_detuning

    @property
    def mu_d(self) -> float:
        return self.emitter.omega_21 + self.pump_detuning

    def rates(self) -> EffectiveRates:
        return effective_rates(self.cavity, self.emitter)

    def drive(self, signal_flux: float | None = None) -> DriveConfig:
        flux = self.signal_flux if signal_flux is None else signal_flux
        return DriveConfig(
            e_s=math.sqrt(flux),
            mu_s=self.mu_s,
            e_d=math.sqrt(power_to_flux(self.pump_power, self.mu_d)),
            mu_d=self.mu_d,
        )

    def with_emitter(self, **changes) -> "SystemConfig":
        return replace(self, emitter=replace(self.emitter, **changes))

    def with_cavity(self, **changes) -> "SystemConfig":
        return replace(self, cavity=replace(self.cavity, **changes))


def effective_rates(chain: CavityChain, emitter: EmitterParams) -> EffectiveRates:
    """Cavity-dressed decay rates of the reduced three-level model.

    Adiabatic elimination of the a-b chain (on the 0-1 transition) and of the
    broad optical mode c (on 0-2 and 1-2) gives, per cavity, an internal part
    ``4 g^2 kappa^i / (kappa^t)^2`` added to the intrinsic rate and an
    external part ``4 g^2 kappa^e / (kappa^t)^2`` into the waveguide; for the
    two-stage microwave chain the prefactor is ``16 g_x^2 g_y^2 / (kappa_a^t
    kappa_b^t)^2``.
    """
    ka, kb, kc = (chain.total_kappa(m) for m in "abc")
    chain_ab = 16 * chain.g_x**2 * chain.g_y**2 / (ka**2 * kb**2)
    gamma_10_i = (
        emitter.gamma_10
        + 4 * chain.g_y**2 * chain.kappa_b_i / kb**2
        + chain_ab * chain.kappa_a_i
    )
    gamma_20_i = emitter.gamma_20 + 4 * chain.g_02**2 * chain.kappa_c_i / kc**2
    gamma_21_i = emitter.gamma_21 + 4 * chain.g_12**2 * chain.kappa_c_i / kc**2
    return EffectiveRates(
        gamma_10_i=gamma_10_i,
        gamma_10_e=chain_ab * chain.kappa_a_e,
        gamma_20_i=gamma_20_i,
        gamma_20_e=4 * chain.g_02**2 * chain.kappa_c_e / kc**2,
        gamma_21_i=gamma_21_i,
        gamma_21_e=4 * chain.g_12**2 * chain.kappa_c_e / kc**2,
    )


def ground_state_splitting(p: NVZeroFieldParams) -> float:
    """Orbital ground-state splitting 2*sqrt(lambda_so^2 + eps_perp^2), in Hz."""
    return 2.0 * math.hypot(p.lambda_so, p.epsilon_perp)


def power_to_flux(power: float, frequency: float) -> float:
    """Photon flux (photons/s) carried by ``power`` watts at ``frequency`` Hz."""
    if not (frequency > 0):
        raise InvalidParameterError(f"frequency must be > 0, got {frequency!r}")
    if not (power >= 0):
        raise InvalidParameterError(f"power must be >= 0, got {power!r}")
    return power / (PLANCK * frequency)


def flux_to_power(flux: float, frequency: float) -> float:
    if not (frequency > 0):
        raise InvalidParameterError(f"frequency must be > 0, got {frequency!r}")
    return flux * PLANCK * frequency


def ple_pass_probability(linewidth_gamma: float, threshold: float) -> float:
    """Probability that a Gaussian-distributed static detuning stays within
    ``threshold``, given the FWHM ``linewidth_gamma`` of the averaged PLE line.
    """
    if linewidth_gamma < 0 or threshold < 0:
        raise InvalidParameterError("linewidth and threshold must be >= 0")
    if linewidth_gamma == 0:
        return 1.0
    sigma = linewidth_gamma / GAUSSIAN_FWHM_PER_SIGMA
    return float(erf(threshold / (sigma * math.sqrt(2.0))))
