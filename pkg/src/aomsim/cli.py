"""Command-line front end.

Configuration is resolved as defaults < TOML file < ``SIM_<KEY>`` environment
variables < command-line flags.  Every output file embeds the resolved
configuration; ``--replay FILE`` re-runs from it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .chaostest import ChaosConfig, analyse
from .correlations import correlation_functions
from .dynamics import evolve
from .io import CONFIG_PREFIX, write_json
from .operators import ParameterError, SystemParams
from .sweep import run_sweep, save_diagram
from .trajectories import parse_label, qt_ensemble

log = logging.getLogger("aomsim")

SUBCOMMANDS = ("evolve", "trajectories", "correlations", "chaos-test", "phase-diagram", "validate")
ENV_PREFIX = "SIM_"


class ConfigError(ValueError):
    """Bad configuration input; the message names the key and expected form."""


@dataclass(frozen=True)
class RunConfig:
    # physical parameters and integration controls (see SystemParams)
    omega_m: float = 1.0
    delta_c: float = -1.0
    delta_a: float = -2.0
    eta: float = 5.0
    g_mc: float = 2.0
    g_ac: float = 0.5
    gamma_m: float = 2.0
    gamma_c: float = 0.5
    gamma_a: float = 1.0
    v0: float = 20.0
    v1: float = 40.0
    omega_r: float = 1.0
    n_m: int = 10
    n_c: int = 20
    dt: float = 5e-3
    t_final: float = 200.0
    record_stride: int = 20
    x0: float = -1.0
    p0: float = 0.0
    seed: int = 0
    # run options
    output_dir: str = "."
    workers: int = 1
    diagnostics: bool = False
    # trajectories
    n_traj: int = 1000
    initial: str = ""
    label_order: str = "m,c,a"
    qt_substeps: int = 5
    qt_scheme: str = "rk4"
    # correlations
    t_ref: float = 100.0
    tau_max: float = 50.0
    tau_points: int = 400
    shared_atom: bool = False
    # chaos test
    transient_fraction: float = 0.5
    phi_stride: float = 1.0
    n_nu: int = 16
    nu: float | None = None
    variant: str = "cumulative"
    k_threshold: float = 0.5
    window_fraction: float = 0.25
    epsilon: float | None = None
    observable: str = "n_c"
    # phase diagram
    g_ac_min: float = 0.0
    g_ac_max: float = 4.0
    g_ac_points: int = 41
    g_mc_min: float = 0.0
    g_mc_max: float = 4.0
    g_mc_points: int = 41
    sweep_n_m: int = 6
    sweep_n_c: int = 12

    def __post_init__(self):
        self.system_params()
        if self.workers < 1:
            raise ConfigError("workers: expected an integer >= 1")
        if self.n_traj < 1:
            raise ConfigError("n_traj: expected an integer >= 1")
        if self.qt_substeps < 1:
            raise ConfigError("qt_substeps: expected an integer >= 1")
        if self.qt_scheme not in ("rk4", "euler"):
            raise ConfigError("qt_scheme: expected 'rk4' or 'euler'")
        if self.variant not in ("cumulative", "classic"):
            raise ConfigError("variant: expected 'cumulative' or 'classic'")
        if self.observable not in ("n_m", "n_c", "n_a"):
            raise ConfigError("observable: expected one of n_m, n_c, n_a")
        if self.tau_points < 1 or not self.tau_max > 0:
            raise ConfigError("tau_points/tau_max: expected tau_points >= 1 and tau_max > 0")
        for axis in ("g_ac", "g_mc"):
            if getattr(self, f"{axis}_points") < 1:
                raise ConfigError(f"{axis}_points: expected an integer >= 1")
        if self.initial:
            try:
                parse_label(self.initial, self.label_order)
            except ValueError as exc:
                raise ConfigError(f"initial: {exc}") from None

    def system_params(self, **changes) -> SystemParams:
        names = {f.name for f in fields(SystemParams)}
        values = {k: v for k, v in dataclasses.asdict(self).items() if k in names}
        values.update(changes)
        try:
            return SystemParams(**values)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None

    def chaos_config(self) -> ChaosConfig:
        return ChaosConfig(
            transient_fraction=self.transient_fraction, phi_stride=self.phi_stride, n_nu=self.n_nu,
            nu=self.nu, variant=self.variant, k_threshold=self.k_threshold,
            window_fraction=self.window_fraction, epsilon=self.epsilon,
            observable=self.observable, seed=self.seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_HINTS = typing.get_type_hints(RunConfig)


def _expected(name: str) -> str:
    tp = _HINTS[name]
    base = {float: "a number", int: "an integer", bool: "true/false", str: "a string"}
    if typing.get_origin(tp) is not None:
        return "a number or 'auto'"
    return base[tp]


def _coerce(name: str, value):
    """Convert a TOML value or string to the declared field type."""
    if name not in _HINTS:
        raise ConfigError(f"unknown key {name!r}")
    tp = _HINTS[name]
    optional = typing.get_origin(tp) is not None
    if optional:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("auto", "none", "")):
            return None
        tp = float
    try:
        if tp is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.strip().lower() in ("true", "1", "yes", "false", "0", "no"):
                return value.strip().lower() in ("true", "1", "yes")
            raise ValueError
        if tp is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value) if not isinstance(value, str) else int(value.strip())
        if tp is float:
            if isinstance(value, bool):
                raise ValueError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if not isinstance(value, str):
            raise ValueError
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {_expected(name)}, got {value!r}") from None


def load_toml(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: tables are not supported (key {nested[0]!r}); use flat key = value pairs")
    return data


def load_embedded(path) -> dict:
    """Configuration embedded in an output file (CSV comment line or JSON)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"replay file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        cfg = data.get("run_config") or data.get("config")
    else:
        with path.open() as fh:
            first = fh.readline()
        cfg = json.loads(first[len(CONFIG_PREFIX):]) if first.startswith(CONFIG_PREFIX) else None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: no embedded run configuration")
    return cfg


def parse_config(path=None, overrides: dict | None = None, env=None, base: dict | None = None) -> RunConfig:
    """Resolve a RunConfig from defaults, a TOML file, SIM_* env vars and flag overrides."""
    values: dict = {}
    layers = [base or {}, load_toml(path) if path else {}]
    env = os.environ if env is None else env
    layers.append({k[len(ENV_PREFIX):].lower(): v for k, v in env.items() if k.startswith(ENV_PREFIX)})
    layers.append(overrides or {})
    for layer in layers:
        for key, value in layer.items():
            values[key] = _coerce(key, value)
    try:
        return RunConfig(**values)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None


def _grid(cfg: RunConfig, axis: str) -> np.ndarray:
    return np.linspace(getattr(cfg, f"{axis}_min"), getattr(cfg, f"{axis}_max"), getattr(cfg, f"{axis}_points"))


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_evolve(cfg: RunConfig) -> dict:
    series = evolve(cfg.system_params(), diagnostics=cfg.diagnostics)
    path = series.to_csv(_outdir(cfg) / "observables.csv", cfg.to_dict())
    return {"observables": str(path), "samples": len(series)}


def cmd_trajectories(cfg: RunConfig) -> dict:
    params = cfg.system_params()
    fock = parse_label(cfg.initial, cfg.label_order) if cfg.initial else (0, 0, 0)
    series = qt_ensemble(params, cfg.n_traj, fock, qt_dt=params.dt / cfg.qt_substeps, scheme=cfg.qt_scheme)
    path = series.to_csv(_outdir(cfg) / "trajectories.csv", cfg.to_dict())
    return {"trajectories": str(path), "n_traj": cfg.n_traj}


def cmd_correlations(cfg: RunConfig) -> dict:
    tau = np.arange(cfg.tau_points) * (cfg.tau_max / cfg.tau_points)
    cs = correlation_functions(cfg.system_params(), cfg.t_ref, tau, shared_atom=cfg.shared_atom)
    path = cs.to_csv(_outdir(cfg) / "correlations.csv", cfg.to_dict())
    return {"correlations": str(path), "t_ref": cfg.t_ref, "n_c_ref": cs.n_c_ref}


def cmd_chaos_test(cfg: RunConfig) -> dict:
    out = _outdir(cfg)
    series = evolve(cfg.system_params(), diagnostics=cfg.diagnostics)
    series.to_csv(out / "observables.csv", cfg.to_dict())
    metrics = analyse(series, cfg.chaos_config())
    metrics.to_csv(out / "chaos_k.csv", cfg.to_dict())
    metrics.write_summary(out / "chaos_summary.csv", cfg.to_dict())
    return metrics.summary()


def cmd_phase_diagram(cfg: RunConfig) -> dict:
    base = cfg.system_params(n_m=cfg.sweep_n_m, n_c=cfg.sweep_n_c)
    diagram = run_sweep(base, _grid(cfg, "g_ac"), _grid(cfg, "g_mc"), workers=cfg.workers, cfg=cfg.chaos_config())
    diagram.provenance["run_config"] = cfg.to_dict()
    path = save_diagram(diagram, _outdir(cfg) / "phase_diagram.csv", cfg.to_dict())
    labels, counts = np.unique(diagram.phase_map.astype(str), return_counts=True)
    return {"phase_diagram": str(path), "counts": dict(zip(labels.tolist(), counts.tolist()))}


def cmd_validate(cfg: RunConfig) -> dict:
    from .oracles import run_all

    results = run_all()
    for r in results:
        print(r.line(), file=sys.stderr)
    payload = {"run_config": cfg.to_dict(), "results": [dataclasses.asdict(r) for r in results]}
    write_json(_outdir(cfg) / "validation.json", payload)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise ValidationFailed(f"oracle(s) failed: {', '.join(failed)}")
    return {"passed": len(results)}


class ValidationFailed(RuntimeError):
    pass


COMMANDS = {
    "evolve": cmd_evolve,
    "trajectories": cmd_trajectories,
    "correlations": cmd_correlations,
    "chaos-test": cmd_chaos_test,
    "phase-diagram": cmd_phase_diagram,
    "validate": cmd_validate,
}


def dispatch(subcommand: str, cfg: RunConfig) -> dict:
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
    return COMMANDS[subcommand](cfg)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors reported in the structured format too."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_emit_error("UsageError", message, None, 2))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file of key = value pairs")
    common.add_argument("--replay", help="re-use the configuration embedded in an output file")
    common.add_argument("-v", "--verbose", action="store_true")
    opts = common.add_argument_group("parameters (override file and environment)")
    for f in fields(RunConfig):
        opts.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar=f.name.upper())

    parser = _Parser(prog="aomsim", description="Hybrid atom-optomechanics simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _emit_error(kind: str, message: str, command: str | None, code: int) -> int:
    print(json.dumps({"status": "error", "error": kind, "message": message, "command": command}))
    print(f"aomsim: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name) is not None}
    try:
        base = load_embedded(args.replay) if args.replay else None
        cfg = parse_config(args.config, flags, base=base)
    except ConfigError as exc:
        return _emit_error("ConfigError", str(exc), args.command, 2)
    start = time.time()
    try:
        result = dispatch(args.command, cfg)
    except (ConfigError, ParameterError) as exc:
        return _emit_error(type(exc).__name__, str(exc), args.command, 2)
    except Exception as exc:
        return _emit_error(type(exc).__name__, str(exc), args.command, 1)
    print(json.dumps({"status": "ok", "command": args.command, "wall_time_s": round(time.time() - start, 3),
                      **result}, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
