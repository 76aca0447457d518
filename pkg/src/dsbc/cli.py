"""Command-line entry point: ``dsbc [global flags] <experiment> [--set section.key=value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .engine import NumericalError
from .ions import ChainInstabilityError, ResonanceError
from .output import emit_results, run_hash

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

_HELP = {
    "dynamics": "error versus time at resonance for several (g, kappa) pairs",
    "sweep": "finite-time fidelity over detuning x coupling",
    "scaling": "grid-optimized single-excitation error versus N, plus ladder ratios",
    "ground-state": "grid-optimized ground-state error for every filling",
    "heating": "trapped-ion fidelity versus heating ratio",
    "anisotropy": "trapped-ion fidelity versus XY anisotropy",
    "ion-report": "derived trapped-ion crystal parameters as JSON",
    "steady-state": "asymptotic fidelity from the Liouvillian null space",
}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="experiment config file")
    parser.add_argument("--out", default=d, help="output directory (default: results)")
    parser.add_argument("--workers", type=int, default=d, help="worker processes")
    parser.add_argument(
        "--seedless", action="store_true", default=argparse.SUPPRESS if suppress else False,
        help="accepted for scripting; every experiment is deterministic and uses no RNG",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsbc", description="Damped spin-boson chain experiments.")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=_HELP[name])
        _global_flags(p, suppress=True)
        p.add_argument(
            "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
            help="override one config entry (repeatable)",
        )
    return parser


def _merge_overrides(text: str, sets: list[str]) -> str:
    """Append ``--set`` overrides as extra config sections (later entries win)."""
    lines = [text] if text else []
    for item in sets:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or not section or not name:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lines.append(f"[{section}]\n{name} = {value}")
    if not lines:
        return ""
    # configparser rejects repeated sections, so fold them together.
    merged: dict[str, dict[str, str]] = {}
    for chunk in lines:
        cp = configparser.ConfigParser(
            interpolation=None, default_section="__none__", inline_comment_prefixes=(";", "#")
        )
        cp.optionxform = str
        try:
            cp.read_string(chunk)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        for s in cp.sections():
            merged.setdefault(s, {}).update(cp.items(s))
    return "\n".join(
        f"[{s}]\n" + "\n".join(f"{k} = {v}" for k, v in items.items()) for s, items in merged.items()
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = ""
        if args.config:
            try:
                text = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        text = _merge_overrides(text, args.set)
        cfg = load_config(text, args.experiment, out=args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiments import run_experiment

    try:
        result = run_experiment(cfg)
    except (NumericalError, ChainInstabilityError, ResonanceError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.out)
    if result.extra.get("report") is not None:
        out.mkdir(parents=True, exist_ok=True)
        report = {"run_hash": run_hash(cfg.echo()), "config": cfg.echo(), **result.extra["report"]}
        path = out / f"{result.name}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report, indent=2) + "\n")
        print(path)
        return EXIT_OK
    paths = emit_results(result.rows, out, result.name, cfg.echo(), result.tables)
    for p in paths.values():
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
