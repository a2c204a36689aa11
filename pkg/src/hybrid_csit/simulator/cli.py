"""Command-line entry point: ``hybrid-csit --scenario ... --out curve.csv``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import (
    ALGORITHMS,
    DETECTORS,
    FLAG_FIELDS,
    QUANTIZERS,
    SCENARIOS,
    ConfigError,
    CsirSetting,
    ExperimentConfig,
    parse_snr_grid,
    read_config_file,
)
from .io import curve_to_csv, emit_csv
from .runner import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hybrid-csit",
        description="Monte Carlo MSE of CSIT for training-only and hybrid training/feedback acquisition.",
    )
    p.add_argument("--config", help="key=value file mirroring these flags; flags take precedence")
    p.add_argument("--scenario", choices=SCENARIOS, default="hybrid-continuous")
    p.add_argument("--snr-db", type=parse_snr_grid, default="0:3:30",
                   help="comma list or inclusive start:step:stop (default 0:3:30)")
    p.add_argument("--antennas", type=int, default=4)
    p.add_argument("--tfb", type=int, default=20, help="channel uses for CSIT acquisition")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--detector", choices=DETECTORS, default="ls")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="iterative")
    p.add_argument("--quantizer", choices=QUANTIZERS, default="auto")
    p.add_argument("--constellation", choices=("qpsk", "qam16"), default="qpsk")
    p.add_argument("--code", choices=("r12", "r23", "r34"), default="r12")
    p.add_argument("--csir", type=CsirSetting.parse, default="perfect",
                   help="perfect, tracking or fixed:<dB>")
    p.add_argument("--tq", type=int, default=None, help="pin the feedback length instead of optimizing")
    p.add_argument("--bits-rounding", choices=("floor", "ceil"), default="floor",
                   help="B from b*T_q for coded feedback")
    p.add_argument("--max-iter", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        try:
            raw = read_config_file(pre.config)
        except ConfigError as exc:
            parser.error(str(exc))
        defaults = {}
        for key, text in raw.items():
            dest, conv = FLAG_FIELDS[key]
            try:
                defaults[key.replace("-", "_")] = conv(text)
            except (ValueError, ConfigError) as exc:
                parser.error(f"config key {key}: {exc}")
        parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    fields = {}
    for key, (dest, _) in FLAG_FIELDS.items():
        if dest == "out":
            continue
        fields[dest] = getattr(ns, key.replace("-", "_"))
    if isinstance(fields["snr_db"], str):
        fields["snr_db"] = parse_snr_grid(fields["snr_db"])
    return ExperimentConfig(**fields)


def main(argv=None) -> int:
    ns = parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        print(f"hybrid-csit: error: {exc}", file=sys.stderr)
        return 2
    curve = run_experiment(cfg)
    for snr, reason in curve.skipped:
        print(f"hybrid-csit: skipped {snr:g} dB: {reason}", file=sys.stderr)
    if ns.out:
        try:
            emit_csv(curve, ns.out)
        except OSError as exc:
            print(f"hybrid-csit: error: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(curve_to_csv(curve.points))
    return 0


if __name__ == "__main__":
    sys.exit(main())
