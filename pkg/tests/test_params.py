import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nvtransducer.errors import InvalidParameterError
from nvtransducer.params import (
    OVERCOUPLED_CHAIN, CavityChain, EmitterParams, NVZeroFieldParams, SystemConfig,
    effective_rates, flux_to_power, ground_state_splitting, ple_pass_probability,
    power_to_flux,
)

EMITTER = EmitterParams()


def test_overcoupled_optical_rates_match_both_printed_values():
    r = effective_rates(OVERCOUPLED_CHAIN, EMITTER)
    assert r.gamma_20_e == pytest.approx(14e6, rel=1e-3)
    assert r.gamma_21_e == pytest.approx(0.56e6, rel=1e-3)


def test_overcoupled_microwave_rate():
    r = effective_rates(OVERCOUPLED_CHAIN, EMITTER)
    assert r.gamma_10_e == pytest.approx(1.3e6, rel=0.01)


def test_zero_internal_loss_leaves_intrinsic_rates():
    r = effective_rates(OVERCOUPLED_CHAIN, EMITTER)
    assert r.gamma_10_i == EMITTER.gamma_10
    assert r.gamma_20_i == EMITTER.gamma_20
    assert r.gamma_21_i == EMITTER.gamma_21


def test_calibrated_defaults_keep_external_rates():
    r = effective_rates(CavityChain(), EMITTER)
    ref = effective_rates(OVERCOUPLED_CHAIN, EMITTER)
    assert r.gamma_10_e == pytest.approx(ref.gamma_10_e, rel=1e-3)
    assert r.gamma_20_e == pytest.approx(ref.gamma_20_e, rel=1e-3)
    assert r.gamma_21_e == pytest.approx(ref.gamma_21_e, rel=1e-3)
    assert r.gamma_20_i > EMITTER.gamma_20


def test_default_optical_linewidth_exceeds_microwave_frequency():
    assert CavityChain().total_kappa("c") > EMITTER.omega_10


def test_decoupled_microwave_cavity():
    chain = replace(CavityChain(), g_x=0.0)
    r = effective_rates(chain, EMITTER)
    kb = chain.total_kappa("b")
    assert r.gamma_10_e == 0.0
    assert r.gamma_10_i == pytest.approx(EMITTER.gamma_10 + 4 * chain.g_y**2 * chain.kappa_b_i / kb**2)


def test_totals_are_sums():
    r = effective_rates(CavityChain(), EMITTER)
    assert r.gamma_20_t == r.gamma_20_i + r.gamma_20_e
    assert r.as_dict()["gamma_21_t"] == r.gamma_21_i + r.gamma_21_e


def test_zero_total_linewidth_rejected():
    with pytest.raises(InvalidParameterError, match="kappa_c"):
        replace(OVERCOUPLED_CHAIN, kappa_c_e=0.0)


def test_negative_rate_rejected():
    with pytest.raises(InvalidParameterError):
        EmitterParams(gamma_10=-1.0)


def test_omega_21_is_derived():
    em = EmitterParams(omega_10=9e9, omega_20=400e12)
    assert em.omega_21 == 400e12 - 9e9


@pytest.mark.parametrize(
    "lam, eps, expected",
    [(5e9, 0.0, 10e9), (0.0, 0.0, 0.0), (3e9, 4e9, 10e9)],
)
def test_ground_state_splitting(lam, eps, expected):
    assert ground_state_splitting(NVZeroFieldParams(lam, eps)) == pytest.approx(expected)


def test_pump_flux_at_default_power():
    assert power_to_flux(55e-12, 500e12) == pytest.approx(1.660e8, rel=1e-3)
    assert power_to_flux(0.0, 500e12) == 0.0


def test_power_to_flux_rejects_nonpositive_frequency():
    with pytest.raises(InvalidParameterError):
        power_to_flux(1e-12, 0.0)


@given(st.floats(0, 1e-3), st.floats(1e3, 1e16))
def test_flux_power_round_trip(power, freq):
    assert flux_to_power(power_to_flux(power, freq), freq) == pytest.approx(power, rel=1e-15, abs=1e-300)


def test_ple_ninety_five_percent():
    g = 3.5e6 + 3.5e6
    assert ple_pass_probability(1.81 * g, 1.5 * g) == pytest.approx(0.95, abs=0.005)


def test_ple_zero_linewidth():
    assert ple_pass_probability(0.0, 1e6) == 1.0


def test_ple_half_linewidth_against_quadrature():
    gamma = 10e6
    sigma = gamma / 2.36
    density = lambda x: math.exp(-x * x / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    area, _ = quad(density, -gamma / 2, gamma / 2)
    assert ple_pass_probability(gamma, gamma / 2) == pytest.approx(area, rel=1e-10)
    assert ple_pass_probability(gamma, gamma / 2) == pytest.approx(0.7613, abs=1e-3)


rate = st.floats(1e3, 1e12)
coupling = st.floats(1e3, 1e10)


@settings(max_examples=50)
@given(coupling, rate)
def test_doubling_external_rate_halves_overcoupled_gamma(g, kappa):
    chain = CavityChain(g_02=g, kappa_c_i=0.0, kappa_c_e=kappa)
    doubled = replace(chain, kappa_c_e=2 * kappa)
    a = effective_rates(chain, EMITTER).gamma_20_e
    b = effective_rates(doubled, EMITTER).gamma_20_e
    assert b == pytest.approx(a / 2, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(0.1, 10), rate, rate, rate, rate)
def test_rates_are_homogeneous(s, kbi, kbe, kci, kce):
    # every term is g^2 / kappa or g^4 / kappa^3, so scaling all couplings and
    # linewidths by s scales the cavity-mediated rates by s
    chain = CavityChain(kappa_b_i=kbi, kappa_b_e=kbe, kappa_c_i=kci, kappa_c_e=kce)
    scaled = CavityChain(
        g_x=s * chain.g_x, g_y=s * chain.g_y, g_02=s * chain.g_02, g_12=s * chain.g_12,
        kappa_a_i=s * chain.kappa_a_i, kappa_a_e=s * chain.kappa_a_e,
        kappa_b_i=s * kbi, kappa_b_e=s * kbe, kappa_c_i=s * kci, kappa_c_e=s * kce,
    )
    bare = EmitterParams(gamma_10=0.0, gamma_20=0.0, gamma_21=0.0)
    a = effective_rates(chain, bare).as_dict()
    b = effective_rates(scaled, bare).as_dict()
    for name, value in a.items():
        assert b[name] == pytest.approx(s * value, rel=1e-9), name


@settings(max_examples=50)
@given(coupling, coupling, rate, st.floats(0, 1e12))
def test_optical_branching_ratio(g02, g12, kce, kci):
    chain = CavityChain(g_02=g02, g_12=g12, kappa_c_e=kce, kappa_c_i=kci)
    r = effective_rates(chain, EMITTER)
    assert r.gamma_20_e / r.gamma_21_e == pytest.approx((g02 / g12) ** 2, rel=1e-12)


def test_drive_uses_pump_frequency():
    cfg = SystemConfig()
    d = cfg.drive()
    assert d.mu_d == EMITTER.omega_21
    assert d.pump_flux == pytest.approx(power_to_flux(55e-12, EMITTER.omega_21))
    assert d.signal_flux == 0.0
