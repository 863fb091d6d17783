"""Command-line entry point.

Settings come from built-in defaults, then an optional flat ``key = value``
config file (``--config``), then the QFICOE_OUTPUT_DIR environment variable
for the output directory, then command-line flags. Exit codes: 0 success,
1 invalid input, 2 computation failure.

Initial states for ``evolve`` and ``sweep`` are taken in the frame where the
Hamiltonian has its canonical form g sum_k eta_k s_k s_k, and amplitude
damping acts through sigma_- in that frame.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import ClosedProbe, NoiseSpec, OpenProbe, closed_trajectory, open_trajectory
from .experiments import (FIGURES, ScanConfig, default_workers, emit_figure, find_coincidences,
                          inequality_scan, transcendental_roots)
from .hamiltonian import canonicalize, parse_hamiltonian
from .metrology import DerivativeConfig, sweep, write_samples_csv
from .states import FAMILIES, PureState, named_state

ENV_OUTPUT_DIR = "QFICOE_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _flag_float(text):
    return float(text)


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise ValueError("must be a positive integer")
    return v


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _str(text):
    return str(text)


COMMON = {"output_dir": (_str, ".")}
STATE_KEYS = {
    "hamiltonian": (_str, "flipflop(1)"),
    "g": (_flag_float, 1.0),
    "kappa": (_flag_float, 0.0),
    "state": (_choice(*FAMILIES), "psi_opt"),
    "alpha": (_flag_float, None),
    "amplitudes": (_str, None),
    "t_min": (_flag_float, 0.0),
    "t_max": (_flag_float, 2 * math.pi),
    "points": (_positive_int, 801),
    "tol": (_flag_float, 1e-9),
    "method": (_choice("expm", "rk45"), "expm"),
}
SCHEMA = {
    "canonicalize": {"hamiltonian": (_str, "permutation(1, 1, 1)"), "g": (_flag_float, 1.0)},
    "evolve": {**STATE_KEYS, "out": (_str, "trajectory.csv")},
    "sweep": {**STATE_KEYS, "step": (_flag_float, None),
              "scheme": (_choice("central-3pt", "central-5pt", "richardson"), "central-5pt"),
              "kink_tolerance": (_flag_float, 1e-6), "out": (_str, "sweep.csv")},
    "scan": {"seed": (int, 0), "n": (_positive_int, None), "n_hamiltonians": (_positive_int, 1000),
             "n_states": (_positive_int, 10), "gt_min": (_flag_float, 0.1),
             "gt_max": (_flag_float, 10.0), "gt_points": (_positive_int, 10),
             "tolerance": (_flag_float, 1e-6), "workers": (_positive_int, 1),
             "out": (_str, "scan.jsonl")},
    "roots": {"kind": (_choice("closed", "open"), "closed"), "g": (_flag_float, 1.0),
              "eta": (_flag_float, 1.0), "kappa": (_flag_float, 0.5),
              "count": (_positive_int, 20), "out": (_str, "roots.csv")},
    "figures": {"which": (_str, "all"), "source": (_choice("numeric", "analytic"), "numeric"),
                "points": (_positive_int, 801)},
}


def read_config(path: str, allowed) -> dict:
    """Flat key = value lines; '#' starts a comment. Unknown keys are rejected."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"config: cannot read {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise UsageError(f"unknown config key {key!r} (allowed: {', '.join(sorted(allowed))})")
        out[key] = value
    return out


def resolve(command: str, flags: dict, config_path: str | None) -> dict:
    schema = {**COMMON, **SCHEMA[command]}
    raw = {k: None for k in schema}
    if config_path:
        raw.update(read_config(config_path, schema))
    if os.environ.get(ENV_OUTPUT_DIR):
        raw["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    raw.update({k: v for k, v in flags.items() if v is not None})
    resolved = {}
    for key, (parse, default) in schema.items():
        value = raw.get(key)
        if value is None:
            resolved[key] = default
            continue
        try:
            resolved[key] = parse(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid value for {key!r}: {value!r} ({exc})") from None
    return resolved


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qficoe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMA.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key = value file")
        for key in {**COMMON, **schema}:
            if name == "figures" and key == "which":
                p.add_argument("which", nargs="?", default=None,
                               help="fig1..fig4, a comma list, or all")
                continue
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return parser


def _header(command: str, cfg: dict) -> dict:
    return {"command": command, "version": __version__, **{f"cfg.{k}": v for k, v in cfg.items()}}


def _initial_state(cfg: dict) -> PureState:
    if cfg["amplitudes"]:
        parts = [p for p in cfg["amplitudes"].replace(",", " ").split() if p]
        if len(parts) == 8:
            vals = np.array([float(p) for p in parts])
            amps = vals[0::2] + 1j * vals[1::2]
        elif len(parts) == 4:
            amps = np.array([complex(p.replace("i", "j")) for p in parts])
        else:
            raise UsageError("amplitudes: give 4 complex numbers or 8 interleaved reals")
        return PureState.normalized(amps)
    family = cfg["state"]
    if family != "psi_opt" and cfg["alpha"] is None:
        raise UsageError(f"alpha: required for state {family!r}")
    return named_state(family, cfg["alpha"])


def _hamiltonian(cfg: dict):
    try:
        return canonicalize(parse_hamiltonian(cfg["hamiltonian"], cfg["g"]))
    except ValueError as exc:
        raise UsageError(f"hamiltonian: {exc}") from None


def _probe_inputs(cfg: dict):
    ch = _hamiltonian(cfg)
    try:
        s0 = _initial_state(cfg)
    except ValueError as exc:
        key = "amplitudes" if cfg["amplitudes"] else "alpha"
        raise UsageError(f"{key}: {exc}") from None
    if cfg["kappa"] < 0 or not cfg["tol"] > 0:
        raise UsageError("kappa must be >= 0 and tol > 0")
    if not cfg["t_max"] > cfg["t_min"] >= 0 or cfg["points"] < 2:
        raise UsageError("time grid: need 0 <= t_min < t_max")
    times = np.linspace(cfg["t_min"], cfg["t_max"], cfg["points"])
    return ch, s0, times


def _out_path(cfg: dict, name: str) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_canonicalize(cfg: dict) -> int:
    ch = _hamiltonian(cfg)
    for key, val in _header("canonicalize", cfg).items():
        print(f"# {key} = {val}")
    print(f"eta = {ch.eta_x!r} {ch.eta_y!r} {ch.eta_z!r}")
    for name, u in (("u1", ch.u1), ("u2", ch.u2)):
        print(f"{name} =")
        for row in u:
            print("  " + "  ".join(f"{z.real:+.12f}{z.imag:+.12f}j" for z in row))
    return 0


def cmd_evolve(cfg: dict) -> int:
    ch, s0, times = _probe_inputs(cfg)
    if cfg["kappa"] == 0:
        traj = closed_trajectory(s0, ch, cfg["g"], times)
    else:
        traj = open_trajectory(s0.density(), ch, NoiseSpec(cfg["kappa"]), cfg["g"], times,
                               cfg["tol"], cfg["method"])
    path = _out_path(cfg, cfg["out"])
    traj.to_csv(path, _header("evolve", cfg))
    print(path)
    return 0


def cmd_sweep(cfg: dict) -> int:
    ch, s0, times = _probe_inputs(cfg)
    dcfg = DerivativeConfig(cfg["step"], cfg["scheme"], cfg["kink_tolerance"])
    if cfg["kappa"] == 0:
        probe = ClosedProbe(ch, s0)
    else:
        probe = OpenProbe(ch, s0, NoiseSpec(cfg["kappa"]), cfg["method"], cfg["tol"])
    samples = sweep(probe, cfg["g"], times, dcfg)
    path = _out_path(cfg, cfg["out"])
    write_samples_csv(samples, path, _header("sweep", cfg))
    events = find_coincidences(samples, probe, dcfg)
    print(path)
    for ev in events:
        print(f"coincidence gt = {ev.gt:.9f} flags = {''.join('1' if f else '0' for f in ev.flags)}")
    return 0


def cmd_scan(cfg: dict) -> int:
    n_states, n_points = cfg["n_states"], cfg["gt_points"]
    n_ham = cfg["n_hamiltonians"]
    if cfg["n"] is not None:
        n_ham = max(1, math.ceil(cfg["n"] / (n_states * n_points)))
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise UsageError("seed: must be a 64-bit unsigned integer")
    try:
        scfg = ScanConfig(cfg["seed"], n_ham, n_states, (cfg["gt_min"], cfg["gt_max"], n_points),
                          cfg["tolerance"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = inequality_scan(scfg, workers=min(cfg["workers"], max(1, default_workers()) * 4))
    path = _out_path(cfg, cfg["out"])
    path.write_text(report.to_json_lines())
    print(path)
    print(f"instances = {report.instances} violations = {len(report.violations)} "
          f"undefined = {report.undefined} worst_margin = {report.worst_margin!r}")
    return 0


def cmd_roots(cfg: dict) -> int:
    params = {"g": cfg["g"], "eta": cfg["eta"], "kappa": cfg["kappa"]}
    try:
        roots = transcendental_roots(cfg["kind"], params, cfg["count"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = _out_path(cfg, cfg["out"])
    with open(path, "w") as fh:
        for key, val in _header("roots", cfg).items():
            fh.write(f"# {key} = {val}\n")
        fh.write("n,x,t,residual\n")
        for r in roots:
            fh.write(f"{r.n},{r.x!r},{r.t!r},{r.residual!r}\n")
    print(path)
    return 0


def cmd_figures(cfg: dict) -> int:
    which = sorted(FIGURES) if cfg["which"] == "all" else [w.strip() for w in cfg["which"].split(",")]
    for w in which:
        if w not in FIGURES:
            raise UsageError(f"which: unknown figure {w!r} (choose from {', '.join(sorted(FIGURES))})")
    for w in which:
        params = {"points": cfg["points"], "source": cfg["source"]}
        csv_path, script, _ = emit_figure(w, params, cfg["output_dir"], header=_header("figures", cfg))
        print(csv_path)
        print(script)
    return 0


COMMANDS = {"canonicalize": cmd_canonicalize, "evolve": cmd_evolve, "sweep": cmd_sweep,
            "scan": cmd_scan, "roots": cmd_roots, "figures": cmd_figures}


def run(argv=None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command")
        config_path = args.pop("config")
        cfg = resolve(command, args, config_path)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any numerical failure as exit 2
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
