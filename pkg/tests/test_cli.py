import csv
import json
import re

import pytest

from nvtransducer import cli, response
from nvtransducer.errors import SolverError
from nvtransducer.params import SystemConfig


def run_cli(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read_json(path):
    return json.loads(path.read_text())


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- experiments ----------------------------------------------------------------

def test_convert_summary(tmp_path):
    code, out = run_cli(tmp_path, "convert")
    assert code == cli.EXIT_OK
    s = read_json(out / "summary.json")
    assert s["p_tot"] == pytest.approx(0.36, abs=0.05)
    assert s["p_coh"] == pytest.approx(0.32, abs=0.05)
    assert s["r_dark"] == pytest.approx(41.0, rel=0.2)
    assert s["bandwidth_fwhm"] == pytest.approx(5.0e6, abs=0.5e6)
    assert (out / "convert.csv").exists()


def test_validate_passes_on_defaults(tmp_path):
    code, out = run_cli(tmp_path, "validate")
    assert code == cli.EXIT_OK
    assert read_json(out / "summary.json")["all_passed"] is True


def test_rates_experiment(tmp_path):
    code, out = run_cli(tmp_path, "rates")
    assert code == cli.EXIT_OK
    assert read_json(out / "summary.json")["gamma_20_e"] == pytest.approx(14e6, rel=1e-3)


def test_entangle_experiment(tmp_path):
    code, out = run_cli(tmp_path, "entangle")
    assert code == cli.EXIT_OK
    s = read_json(out / "summary.json")
    assert s["f_1c"] == pytest.approx(0.93, abs=0.02)
    assert s["r_herald"] == pytest.approx(3.1e3, abs=0.5e3)


def test_sweep_has_no_summary(tmp_path):
    code, out = run_cli(tmp_path, "sweep-pump")
    assert code == cli.EXIT_OK
    assert not (out / "summary.json").exists()
    assert len(read_rows(out / "sweep-pump.csv")) == 21


@pytest.mark.parametrize("experiment", ["sweep-pump", "sweep-dephasing"])
def test_sweep_output_is_byte_identical(tmp_path, experiment):
    grids = ["--set", "grids.sweep-dephasing.gamma_phi_1=[0, 1e5, 1e6]",
             "--set", "grids.sweep-dephasing.gamma_phi_2=[0, 1e6, 1e7]"]
    _, a = run_cli(tmp_path, experiment, *grids, name="a")
    _, b = run_cli(tmp_path, experiment, *grids, name="b")
    _, c = run_cli(tmp_path, experiment, *grids, "--threads", "4", name="c")
    csv_name = f"{experiment}.csv"
    assert (a / csv_name).read_bytes() == (b / csv_name).read_bytes() == (c / csv_name).read_bytes()


def test_doubling_pump_doubles_dark_rate(tmp_path):
    _, base = run_cli(tmp_path, "convert", name="base")
    _, high = run_cli(tmp_path, "convert", "--set", "pump_power_pw=110", name="high")
    ratio = read_json(high / "summary.json")["r_dark"] / read_json(base / "summary.json")["r_dark"]
    assert ratio == pytest.approx(2.0, rel=0.1)


# -- configuration ---------------------------------------------------------------

def test_empty_config_gives_defaults():
    assert cli.resolve_config(None).cfg == SystemConfig()


def test_precedence_file_then_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"drive": {"pump_power_pw": 20.0}, "emitter": {"gamma_phi_1": 1e5}}))
    r = cli.resolve_config(str(path), ["pump_power_pw=30"])
    assert r.cfg.pump_power == pytest.approx(30e-12)
    assert r.cfg.emitter.gamma_phi_1 == 1e5


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "drive": {"pump_power_pw": 55,}\n}\n')
    code, _ = run_cli(tmp_path, "convert", "--config", str(path))
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert re.search(r"line 2.*column \d+", err)


@pytest.mark.parametrize("override, needle", [
    ("no_such_key=1", "no_such_key"),
    ("emitter.gamma_10=\"fast\"", "gamma_10"),
    ("gamma_10=-5", "gamma_10"),
    ("n_h=2.5", "n_h"),
])
def test_bad_overrides_name_the_key(tmp_path, capsys, override, needle):
    code, _ = run_cli(tmp_path, "convert", "--set", override)
    assert code == cli.EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_unknown_key_in_file(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"cavity": {"kappa_z": 1.0}}))
    code, _ = run_cli(tmp_path, "convert", "--config", str(path))
    assert code == cli.EXIT_CONFIG
    assert "kappa_z" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["no-such-experiment"])
    assert exc.value.code == cli.EXIT_USAGE
    assert cli.main(["convert", "--threads", "0", "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_grid_entry_forms():
    assert cli.grid_values([1, 2], "x") == [1.0, 2.0]
    assert cli.grid_values({"linspace": [0, 1, 3]}, "x") == [0.0, 0.5, 1.0]
    assert cli.grid_values({"geomspace": [1, 100, 3], "prepend": [0]}, "x") == pytest.approx(
        [0.0, 1.0, 10.0, 100.0])


# -- output ---------------------------------------------------------------------

def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    out = tmp_path / "from-env"
    monkeypatch.setenv(cli.OUT_ENV, str(out))
    assert cli.main(["rates"]) == cli.EXIT_OK
    assert (out / "manifest.json").exists()


def test_manifest_contents(tmp_path):
    _, out = run_cli(tmp_path, "convert", "--nh", "4")
    m = read_json(out / "manifest.json")
    for key in ("config_hash", "resolved_params", "version", "solver", "wall_time_s",
                "criteria", "calibration", "exit_status"):
        assert key in m
    assert m["solver"]["n_h"] == 4
    assert m["calibration"]["fitted"]["kappa_c_i"] > 0
    assert all(c["passed"] for c in m["criteria"])
    assert len(m["config_hash"]) == 64


def test_manifest_reproduces_run(tmp_path):
    _, first = run_cli(tmp_path, "sweep-pump", "--set", "pump_power_pw=20", name="first")
    m = read_json(first / "manifest.json")
    path = tmp_path / "resolved.json"
    path.write_text(json.dumps({**m["resolved_params"], "grids": {"sweep-pump": m["grids"]}}))
    _, second = run_cli(tmp_path, "sweep-pump", "--config", str(path), name="second")
    assert (first / "sweep-pump.csv").read_bytes() == (second / "sweep-pump.csv").read_bytes()
    assert read_json(second / "manifest.json")["config_hash"] == m["config_hash"]


def test_csv_number_format(tmp_path):
    _, out = run_cli(tmp_path, "sweep-pump")
    lines = (out / "sweep-pump.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "power"
    number = re.compile(r"^-?\d\.\d{8}e[+-]\d{2,3}$")
    for line in lines[1:]:
        assert all(number.match(v) for v in line.split(","))


def test_failed_points_flush_error_column(tmp_path, monkeypatch):
    real = response.small_signal

    def flaky(cfg):
        if cfg.emitter.gamma_phi_1 == 1e5:
            raise SolverError("injected failure")
        return real(cfg)

    monkeypatch.setattr(response, "small_signal", flaky)
    code, out = run_cli(tmp_path, "sweep-dephasing",
                        "--set", "grids.sweep-dephasing.gamma_phi_1=[0, 1e5]",
                        "--set", "grids.sweep-dephasing.gamma_phi_2=[0, 1e6]")
    assert code == cli.EXIT_SOLVER
    rows = read_rows(out / "sweep-dephasing.csv")
    assert len(rows) == 4
    assert [bool(r["error"]) for r in rows] == [False, False, True, True]
    assert "injected failure" in rows[2]["error"]
    assert read_json(out / "manifest.json")["failed_points"] == 2
