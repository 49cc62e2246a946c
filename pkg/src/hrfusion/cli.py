"""Command-line entry point: ``hrfusion --scenario 1 --users 2 --snr -10:2:10 --out results``.

A JSON config file (``--config``) may hold any of the long option names
(dashes or underscores); flags given on the command line override it.
Exit codes: 0 on success, 2 on configuration errors, 1 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError
from .harness import (
    ALGORITHMS,
    ExperimentSpec,
    dump_iteration_trace,
    dump_spectra,
    parse_snr_grid,
    run_experiment,
)

log = logging.getLogger("hrfusion")

DEFAULTS = {
    "scenario": 1,
    "users": 2,
    "antennas": 5,
    "targets": "0",
    "snr": "10",
    "trials": 200,
    "algos": ",".join(ALGORITHMS),
    "crb": False,
    "seed": 0,
    "out": "results",
    "dump_spectra": False,
    "dump_trace": False,
    "dump_snr": None,
    "grid_step": 0.5,
    "eps": 1e-6,
    "max_iters": 30,
    "naive_include_dl": True,
    "workers": 1,
    "plots": False,
}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


class _ConfigErrorParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _ConfigErrorParser(prog="hrfusion", description="Monte Carlo AoA fusion experiments.")
    # Defaults are None so config-file values survive unless a flag is given.
    p.add_argument("--config", help="JSON file with any of the options below")
    p.add_argument("--scenario", type=int, choices=(1, 2))
    p.add_argument("--users", type=int, help="number of uplink users K")
    p.add_argument("--antennas", type=int, help="ULA size N")
    p.add_argument("--targets", help='target angles in degrees, e.g. "0,30,60"')
    p.add_argument("--snr", help='SNR grid in dB: "start:step:stop" or a comma list')
    p.add_argument("--trials", type=int, help="Monte Carlo trials per SNR (default 200)")
    p.add_argument("--algos", help=f"comma list from {','.join(ALGORITHMS)}")
    p.add_argument("--crb", action="store_const", const=True, help="average the CRB over trials")
    p.add_argument("--seed", type=int, help="64-bit master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-spectra", action="store_const", const=True)
    p.add_argument("--dump-trace", action="store_const", const=True)
    p.add_argument("--dump-snr", type=float, help="SNR for spectra/trace dumps (default: last grid point)")
    p.add_argument("--grid-step", type=float, help="coarse search step in degrees")
    p.add_argument("--eps", type=float, help="convergence threshold in radians")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--naive-include-dl", type=_bool, metavar="{true,false}")
    p.add_argument("--workers", type=int, help="worker processes for trials")
    p.add_argument("--plots", action="store_const", const=True, help="also render PNG figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in raw.items()}
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return cfg


def resolve(argv=None) -> tuple[dict, bool]:
    """Merge defaults, config file and flags into one option dict."""
    args = build_parser().parse_args(argv)
    options = dict(DEFAULTS)
    if args.config:
        options.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return options, args.verbose


def _list(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [v.strip() for v in str(value).split(",") if v.strip()]


def spec_from_options(options: dict) -> ExperimentSpec:
    try:
        targets = [float(t) for t in _list(options["targets"])]
        snr = options["snr"]
        snr_grid = tuple(float(s) for s in snr) if isinstance(snr, (list, tuple)) else parse_snr_grid(snr)
        return ExperimentSpec(
            scenario=int(options["scenario"]),
            num_users=int(options["users"]),
            num_antennas=int(options["antennas"]),
            num_targets=len(targets),
            target_angles_deg=tuple(targets),
            snr_grid_db=snr_grid,
            trials=int(options["trials"]),
            algorithms=tuple(_list(options["algos"])),
            include_crb=_bool(options["crb"]),
            master_seed=int(options["seed"]),
            output_dir=options["out"],
            grid_step_deg=float(options["grid_step"]),
            eps=float(options["eps"]),
            max_iters=int(options["max_iters"]),
            naive_include_dl=_bool(options["naive_include_dl"]),
            workers=int(options["workers"]),
        )
    except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def run(options: dict) -> ExperimentSpec:
    spec = spec_from_options(options)
    table = run_experiment(spec)
    dump_snr = options["dump_snr"]
    dump_snr = spec.snr_grid_db[-1] if dump_snr is None else float(dump_snr)
    spectra = trace = None
    if _bool(options["dump_spectra"]):
        spectra = dump_spectra(spec, dump_snr)
    if _bool(options["dump_trace"]):
        trace = dump_iteration_trace(spec, dump_snr)
    if _bool(options["plots"]):
        from .plots import render_all

        render_all(spec, table, spectra, trace)
    for row in table.rows:
        print(f"{row.algorithm:10s} {row.snr_db:7.2f} dB  mse={row.mse_rad2:.4e} rad^2  "
              f"crb={row.crb_rad2:.4e}  used={row.trials_used} failures={row.failures}")
    print(f"wrote {os.path.join(spec.output_dir, 'results.csv')}")
    return spec


def main(argv=None) -> int:
    try:
        options, verbose = resolve(argv)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        run(options)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level guard maps failures to exit code 1
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
