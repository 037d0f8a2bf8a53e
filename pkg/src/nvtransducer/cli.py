"""Command-line runner: config resolution, experiments and reproducible output.

Usage::

    nvtransducer <experiment> [--config PATH] [--out DIR] [--set key=value ...]
                              [--threads N] [--nh N]

Each run writes ``<experiment>.csv``, ``manifest.json`` and, for scalar
experiments, ``summary.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, response
from .dynamics import PHYSICALITY_TOL
from .entanglement import (
    entangle, node_channel, reference_nodes, sweep_entanglement_dephasing,
    sweep_entanglement_detuning,
)
from .errors import ConfigError, InvalidParameterError, TransducerError
from .params import CALIBRATION_RECORD, CavityChain, EmitterParams, SystemConfig
from .validation import all_passed, run_invariant_suite

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3, 4
OUT_ENV = "NVTRANSDUCER_OUT"
DEFAULT_OUT = "nvt-out"

_DRIVE_KEYS = {"pump_power_pw": float, "signal_flux": float,
               "signal_detuning": float, "pump_detuning": float}
SECTIONS: dict[str, dict[str, type]] = {
    "cavity": {f.name: float for f in fields(CavityChain)},
    "emitter": {f.name: float for f in fields(EmitterParams)},
    "drive": _DRIVE_KEYS,
    "solver": {"n_h": int},
    "entanglement": {"r_rep": float},
}
# flat override name -> section; the field names are unique across sections
KEY_SECTION = {key: sec for sec, keys in SECTIONS.items() for key in keys}


def default_params() -> dict:
    d = SystemConfig()
    return {
        "cavity": asdict(d.cavity),
        "emitter": asdict(d.emitter),
        "drive": {"pump_power_pw": d.pump_power * 1e12, "signal_flux": d.signal_flux,
                  "signal_detuning": d.signal_detuning, "pump_detuning": d.pump_detuning},
        "solver": {"n_h": d.n_h},
        "entanglement": {"r_rep": d.r_rep},
    }


def load_presets() -> dict:
    text = resources.files("nvtransducer").joinpath("presets/grids.json").read_text()
    return json.loads(text)


def grid_values(entry, where: str) -> list[float]:
    """Expand a grid entry: a plain list, or a dict with ``values``,
    ``linspace`` or ``geomspace`` plus an optional ``prepend`` list."""
    try:
        if isinstance(entry, list):
            return [float(v) for v in entry]
        if not isinstance(entry, dict):
            raise TypeError("expected a list or an object")
        extra = set(entry) - {"values", "linspace", "geomspace", "prepend"}
        if extra:
            raise KeyError(f"unknown grid keys {sorted(extra)}")
        head = [float(v) for v in entry.get("prepend", [])]
        if "values" in entry:
            body = [float(v) for v in entry["values"]]
        elif "linspace" in entry:
            a, b, n = entry["linspace"]
            body = np.linspace(float(a), float(b), int(n)).tolist()
        elif "geomspace" in entry:
            a, b, n = entry["geomspace"]
            body = np.geomspace(float(a), float(b), int(n)).tolist()
        else:
            raise KeyError("need one of values, linspace, geomspace")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"grid {where}: {exc}") from None
    return head + body


def _parse_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}") from None


def _set_param(params: dict, section: str, key: str, value, source: str) -> None:
    kind = SECTIONS[section].get(key)
    if kind is None:
        raise ConfigError(f"{source}: unknown key {section}.{key}")
    ok = (isinstance(value, int) if kind is int
          else isinstance(value, (int, float)))
    if isinstance(value, bool) or not ok:
        raise ConfigError(f"{source}: {section}.{key} must be {kind.__name__}, "
                          f"got {type(value).__name__} {value!r}")
    params[section][key] = kind(value)


def _merge_file(params: dict, grids: dict, data, source: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    for section, body in data.items():
        if section == "grids":
            if not isinstance(body, dict):
                raise ConfigError(f"{source}: grids must be an object")
            for exp, axes in body.items():
                if exp not in grids:
                    raise ConfigError(f"{source}: no grids for experiment {exp!r}")
                for axis, entry in axes.items():
                    if axis not in grids[exp]:
                        raise ConfigError(f"{source}: unknown grid axis grids.{exp}.{axis}")
                    grids[exp][axis] = entry
            continue
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section {section!r} "
                              f"(expected one of {sorted([*SECTIONS, 'grids'])})")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: section {section!r} must be an object")
        for key, value in body.items():
            _set_param(params, section, key, value, source)


def _apply_override(params: dict, grids: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    value = _parse_json(raw, f"override {key}")
    parts = key.split(".")
    if parts[0] == "grids":
        if len(parts) != 3 or parts[1] not in grids or parts[2] not in grids[parts[1]]:
            raise ConfigError(f"override {key}: unknown grid axis")
        grids[parts[1]][parts[2]] = value
        return
    if len(parts) == 2:
        section, name = parts
        if section not in SECTIONS:
            raise ConfigError(f"override {key}: unknown section {section!r}")
    elif len(parts) == 1 and key in KEY_SECTION:
        section, name = KEY_SECTION[key], key
    else:
        raise ConfigError(f"override {key}: unknown key")
    _set_param(params, section, name, value, "override")


def build_config(params: dict) -> SystemConfig:
    try:
        drive = params["drive"]
        return SystemConfig(
            cavity=CavityChain(**params["cavity"]),
            emitter=EmitterParams(**params["emitter"]),
            pump_power=drive["pump_power_pw"] * 1e-12,
            signal_flux=drive["signal_flux"],
            signal_detuning=drive["signal_detuning"],
            pump_detuning=drive["pump_detuning"],
            n_h=params["solver"]["n_h"],
            r_rep=params["entanglement"]["r_rep"],
        )
    except InvalidParameterError as exc:
        raise ConfigError(f"out-of-range value: {exc}") from None


@dataclass
class Resolved:
    cfg: SystemConfig
    params: dict
    grids: dict


def resolve_config(path: str | None, overrides: list[str] = (), n_h: int | None = None) -> Resolved:
    """Defaults, then the JSON file at ``path``, then ``key=value`` overrides."""
    params = default_params()
    grids = load_presets()
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        _merge_file(params, grids, _parse_json(text, path), path)
    for item in overrides:
        _apply_override(params, grids, item)
    if n_h is not None:
        _set_param(params, "solver", "n_h", n_h, "--nh")
    return Resolved(cfg=build_config(params), params=params, grids=grids)


@dataclass
class Outcome:
    rows: list[dict]
    summary: dict | None = None
    criteria: list[dict] = field(default_factory=list)
    failed: int = 0


def within(name: str, value: float, target: float, tol: float) -> dict:
    return {"name": name, "value": value, "target": target, "tolerance": tol,
            "passed": bool(abs(value - target) <= tol)}


def holds(name: str, ok: bool) -> dict:
    return {"name": name, "passed": bool(ok)}


def _error_row(axes: list[str]) -> Callable:
    def make(point, exc):
        vals = point if isinstance(point, tuple) else (point,)
        return {**dict(zip(axes, vals)), "error": f"{type(exc).__name__}: {exc}"}
    return make


def _sweep_outcome(rows: list[dict], coh_key: str | None = "p_coh") -> Outcome:
    failed = sum("error" in r for r in rows)
    crit = [holds("every grid point solved", failed == 0)]
    if coh_key:
        crit.append(holds("p_coh <= p_tot at every point",
                          all(r["p_coh"] <= r["p_tot"] for r in rows if "error" not in r)))
    return Outcome(rows=rows, criteria=crit, failed=failed)


def run_rates(cfg, grids, threads):
    rates = cfg.rates().as_dict()
    crit = [within("gamma_10_e (Hz)", rates["gamma_10_e"], 1.3e6, 0.05e6),
            within("gamma_20_e (Hz)", rates["gamma_20_e"], 14e6, 0.5e6),
            within("gamma_21_e (Hz)", rates["gamma_21_e"], 0.56e6, 0.02e6)]
    return Outcome(rows=[rates], summary=rates, criteria=crit)


def run_convert(cfg, grids, threads):
    m = response.conversion_metrics(cfg, validate=True)
    summary = asdict(m)
    crit = [
        within("p_tot", m.p_tot, 0.36, 0.05),
        within("p_coh", m.p_coh, 0.32, 0.05),
        holds("p_coh <= p_tot", m.p_coh <= m.p_tot),
        within("r_dark (Hz)", m.r_dark, 41.0, 0.2 * 41.0),
        within("bandwidth_fwhm (Hz)", m.bandwidth_fwhm, 5.0e6, 0.5e6),
        within("tau_conv (s)", m.tau_conv, 130e-9, 15e-9),
    ]
    return Outcome(rows=[summary], summary=summary, criteria=crit)


def run_bandwidth(cfg, grids, threads):
    bw = response.conversion_bandwidth(cfg)
    rows = [{"delta_mu_s": d, "p_coh": p} for d, p in bw.curve]
    summary = {"bandwidth_fwhm": bw.bandwidth_fwhm, "tau_conv": bw.tau_conv,
               "center": bw.center}
    crit = [within("bandwidth_fwhm (Hz)", bw.bandwidth_fwhm, 5.0e6, 0.5e6),
            within("tau_conv (s)", bw.tau_conv, 130e-9, 15e-9)]
    return Outcome(rows=rows, summary=summary, criteria=crit)


def run_sweep_pump(cfg, grids, threads):
    powers = [p * 1e-12 for p in grid_values(grids["pump_power_pw"], "pump_power_pw")]
    rows = response.sweep_pump(cfg, powers, threads, _error_row(["power"]))
    return _sweep_outcome(rows)


def _two_axis(func, names, coh_key="p_coh"):
    def run(cfg, grids, threads):
        a = grid_values(grids[names[0]], names[0])
        b = grid_values(grids[names[1]], names[1])
        return _sweep_outcome(func(cfg, a, b, threads, _error_row(list(names))), coh_key)
    return run


def run_entangle(cfg, grids, threads):
    node_b, tau, theta_ref = reference_nodes(cfg)
    node_a = node_channel(cfg, tau, theta_ref)
    res = entangle(node_a, node_b, cfg.r_rep)
    summary = {"p_e": res.p_e, "n_click": res.n_click, "f_1c": res.f_1c,
               "r_herald": res.r_herald, "regime_ok": res.regime_ok,
               "node_a": asdict(node_a), "node_b": asdict(node_b)}
    row = {k: v for k, v in summary.items() if not isinstance(v, dict)}
    crit = [within("f_1c", res.f_1c, 0.93, 0.02),
            within("r_herald (Hz)", res.r_herald, 3.1e3, 0.5e3)]
    return Outcome(rows=[row], summary=summary, criteria=crit)


def run_validate(cfg, grids, threads):
    checks = run_invariant_suite(cfg)
    rows = [{"check": c.name, "value": c.value, "limit": c.limit, "passed": int(c.passed)}
            for c in checks]
    crit = [{"name": c.name, "value": c.value, "limit": c.limit, "passed": c.passed}
            for c in checks]
    for c in checks:
        print(c.line(), file=sys.stderr)
    return Outcome(rows=rows, summary={"all_passed": all_passed(checks)}, criteria=crit)


EXPERIMENTS: dict[str, Callable] = {
    "rates": run_rates,
    "convert": run_convert,
    "bandwidth": run_bandwidth,
    "sweep-pump": run_sweep_pump,
    "sweep-dephasing": _two_axis(response.sweep_dephasing, ("gamma_phi_1", "gamma_phi_2")),
    "sweep-detuning": _two_axis(response.sweep_detuning, ("delta_omega_10", "delta_omega_20")),
    "entangle": run_entangle,
    "sweep-ent-dephasing": _two_axis(sweep_entanglement_dephasing,
                                     ("gamma_phi_1", "gamma_phi_2"), None),
    "sweep-ent-detuning": _two_axis(sweep_entanglement_detuning,
                                    ("delta_omega_10", "delta_omega_20"), None),
    "validate": run_validate,
}
SCALAR = {"rates", "convert", "bandwidth", "entangle", "validate"}


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, complex):
        return f"{v.real:.8e}{v.imag:+.8e}j"
    if v is None:
        return "nan"
    return "%.8e" % float(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    columns: list[str] = []
    for r in rows:
        for k in r:
            if k not in columns and k != "error":
                columns.append(k)
    if any("error" in r for r in rows):
        columns.append("error")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c, "" if c == "error" else math.nan))
                        for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def config_hash(experiment: str, resolved: Resolved) -> str:
    grids = resolved.grids.get(experiment, {})
    blob = json.dumps({"experiment": experiment, "params": resolved.params, "grids": grids},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def run(experiment: str, resolved: Resolved, out_dir: Path, threads: int = 1) -> int:
    """Execute one experiment, write its files and return the exit status."""
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        outcome = EXPERIMENTS[experiment](resolved.cfg, resolved.grids.get(experiment, {}),
                                          threads)
    except ConfigError:
        raise
    except TransducerError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        outcome = Outcome(rows=[{"error": f"{type(exc).__name__}: {exc}"}], failed=1)
    if outcome.failed:
        status = EXIT_SOLVER
    elif experiment == "validate" and not outcome.summary["all_passed"]:
        status = EXIT_VALIDATION

    write_csv(out_dir / f"{experiment}.csv", outcome.rows)
    if experiment in SCALAR and outcome.summary is not None:
        write_json(out_dir / "summary.json", outcome.summary)
    write_json(out_dir / "manifest.json", {
        "tool": "nvtransducer",
        "version": __version__,
        "experiment": experiment,
        "config_hash": config_hash(experiment, resolved),
        "resolved_params": resolved.params,
        "grids": resolved.grids.get(experiment, {}),
        "solver": {
            "n_h": resolved.cfg.n_h,
            "physicality_tol": PHYSICALITY_TOL,
            "truncation_tol": 1e-8,
            "regression_fluxes": list(response.REGRESSION_FLUXES),
            "max_curvature": 0.01,
            "threads": threads,
        },
        "wall_time_s": time.perf_counter() - t0,
        "criteria": outcome.criteria,
        "failed_points": outcome.failed,
        "exit_status": status,
        "calibration": CALIBRATION_RECORD,
    })
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nvtransducer",
                description="Microwave-to-optical NV0 transducer simulations.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="JSON config file (every field optional)")
    p.add_argument("--out", default=os.environ.get(OUT_ENV, DEFAULT_OUT),
                   help=f"output directory (default ${OUT_ENV} or {DEFAULT_OUT})")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a parameter; repeatable")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--nh", type=int, default=None, help="harmonic truncation order")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("nvtransducer: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        resolved = resolve_config(args.config, args.overrides, args.nh)
        return run(args.experiment, resolved, Path(args.out), args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
