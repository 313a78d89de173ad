"""Command line entry point: ``epqa simulate | flops | gen-channel``.

Configuration files are JSON objects whose keys are :class:`SimConfig`
field names; command line flags override file values.  Exit codes: 0 on
success, 2 for configuration errors, 3 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

import numpy as np

from .channel_model import exponential_pdp, generate_channel, write_realization, write_realization_csv
from .harness import FLOP_ALGORITHMS, SimConfig, flop_estimate, monte_carlo, records_to_csv
from .txchain import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with SimConfig fields")
    for f in fields(SimConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("ebn0_db", "variants"):
            p.add_argument(flag, nargs="+", default=None)
        elif f.type in ("bool", bool):
            p.add_argument(flag, default=None, type=lambda s: s.lower() in ("1", "true", "yes"))
        elif f.type in ("float", float):
            p.add_argument(flag, type=float, default=None)
        elif f.type in ("str", str):
            p.add_argument(flag, default=None)
        else:
            p.add_argument(flag, type=int, default=None)


def load_config(args) -> SimConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
    for f in fields(SimConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = [float(x) for x in v] if f.name == "ebn0_db" else v
    try:
        return SimConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(args) -> int:
    cfg = load_config(args)

    def progress(done, total):
        if args.verbose:
            print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    records = monte_carlo(cfg, workers=args.workers, progress=progress)
    if args.verbose:
        print(file=sys.stderr)
    text = records_to_csv(records, args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_flops(args) -> int:
    cfg = load_config(args)
    algs = args.algorithm or list(FLOP_ALGORITHMS)
    base = flop_estimate(cfg, "EP-QA-L")["total"]
    print("algorithm,detection,estimation,total,relative_to_EP-QA-L")
    for a in algs:
        if a not in FLOP_ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}")
        f = flop_estimate(cfg, a)
        print(f"{a},{f['detection']:.0f},{f['estimation']:.0f},{f['total']:.0f},{f['total'] / base:.6g}")
    return EXIT_OK


def cmd_gen_channel(args) -> int:
    cfg = load_config(args)
    rng = np.random.default_rng(cfg.seed)
    ch = generate_channel(rng, cfg.geometry(), exponential_pdp(cfg.L, cfg.pdp_decay), cfg.K, cfg.N,
                          per_tap_angles=cfg.per_tap_angles, zero_based=cfg.zero_based)
    if args.out.endswith(".csv"):
        write_realization_csv(args.out, ch)
    else:
        write_realization(args.out, ch)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epqa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo BER/NMSE simulation")
    _add_config_flags(sim)
    sim.add_argument("--out", help="CSV output path (stdout if omitted)")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--verbose", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    fl = sub.add_parser("flops", help="FLOPs per turbo iteration")
    _add_config_flags(fl)
    fl.add_argument("--algorithm", nargs="+")
    fl.set_defaults(func=cmd_flops)

    gc = sub.add_parser("gen-channel", help="draw one channel realization")
    _add_config_flags(gc)
    gc.add_argument("--out", required=True, help="output path (.csv for text, binary otherwise)")
    gc.set_defaults(func=cmd_gen_channel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced as a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
