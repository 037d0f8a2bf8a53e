import pytest

from nvtransducer.cli import grid_values, load_presets
from nvtransducer.entanglement import sweep_entanglement_dephasing, sweep_entanglement_detuning
from nvtransducer.params import SystemConfig
from nvtransducer.response import small_signal, sweep_dephasing, sweep_detuning

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def baseline(cfg):
    return small_signal(cfg)


@pytest.fixture(scope="session")
def presets():
    raw = load_presets()
    return {exp: {axis: grid_values(entry, axis) for axis, entry in axes.items()}
            for exp, axes in raw.items()}


@pytest.fixture(scope="session")
def dephasing_rows(cfg, presets):
    g = presets["sweep-dephasing"]
    return sweep_dephasing(cfg, g["gamma_phi_1"], g["gamma_phi_2"])


@pytest.fixture(scope="session")
def detuning_rows(cfg, presets):
    g = presets["sweep-detuning"]
    return sweep_detuning(cfg, g["delta_omega_10"], g["delta_omega_20"])


@pytest.fixture(scope="session")
def ent_dephasing_rows(cfg, presets):
    g = presets["sweep-ent-dephasing"]
    return sweep_entanglement_dephasing(cfg, g["gamma_phi_1"], g["gamma_phi_2"])


@pytest.fixture(scope="session")
def ent_detuning_rows(cfg, presets):
    g = presets["sweep-ent-detuning"]
    return sweep_entanglement_detuning(cfg, g["delta_omega_10"], g["delta_omega_20"])
