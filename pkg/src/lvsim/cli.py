"""Command-line experiment runner.

Runs a named scenario (or a fully config-driven one), writing one CSV of
plot-ready rows plus a JSON manifest echoing the effective configuration.
Configuration is layered: built-in defaults, an INI-style config file with
sections [geometry] [channel] [priors] [threat] [rule] [sim], then
dotted-key overrides (--set channel.sigma_dB=5).  All randomness flows
from a single seed.
"""

import argparse
import configparser
import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .scenarios import (
    ConfigError,
    ScenarioSettings,
    compose_sections,
    list_scenarios,
    parse_override,
    run_scenario,
)

__all__ = ["main", "load_config_file", "write_csv"]

_KNOWN_SECTIONS = ("geometry", "channel", "priors", "threat", "rule", "sim")


def load_config_file(path) -> dict:
    """Read one INI-style config file into {section: {key: value}}."""
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}")
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    sections = {}
    for section in parser.sections():
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(
                f"unknown config section [{section}]; known sections: "
                + ", ".join(_KNOWN_SECTIONS)
            )
        sections[section] = dict(parser.items(section))
    return sections


def _overrides_to_sections(pairs) -> dict:
    out: dict[str, dict[str, str]] = {}
    for text in pairs:
        section, key, value = parse_override(text)
        if section not in _KNOWN_SECTIONS:
            raise ConfigError(
                f"unknown section in override {text!r}; known sections: "
                + ", ".join(_KNOWN_SECTIONS)
            )
        out.setdefault(section, {})[key] = value
    return out


def _version_string() -> str:
    try:
        proc = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if proc.returncode == 0 and proc.stdout.strip():
            return f"lvsim-{__version__}+{proc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"lvsim-{__version__}"


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return value


def write_csv(path, header, rows) -> None:
    """CSV with a mandatory header, '.' decimals, 9 significant digits,
    newline-terminated rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvsim",
        description="Location-verification experiment runner: synthesizes RSS "
        "measurements, applies likelihood-ratio rules, and writes rate/NMI "
        "tables as CSV.",
    )
    parser.add_argument("--scenario", help="scenario name (see --list-scenarios)")
    parser.add_argument(
        "--list-scenarios", action="store_true", help="print available scenarios and exit"
    )
    parser.add_argument("--config", help="INI config file layered under the overrides")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 42)")
    parser.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per hypothesis")
    parser.add_argument("--out-dir", default=".", help="output directory (default: current)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for statistics")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument(
        "--rho-factor",
        type=float,
        default=None,
        help="ring-radius factor for the circle/annulus scenarios",
    )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.list_scenarios:
        print(list_scenarios())
        return 0
    if not args.scenario:
        print("error: --scenario (or --list-scenarios) is required", file=sys.stderr)
        return 2
    try:
        file_sections = load_config_file(args.config) if args.config else None
        overrides = _overrides_to_sections(args.set)
        sections = compose_sections(args.scenario, file_sections, overrides)
        settings = ScenarioSettings(
            seed=args.seed,
            trials=args.trials,
            threads=args.threads,
            rho_factor=args.rho_factor,
        )
        start = time.monotonic()
        result = run_scenario(args.scenario, sections, settings)
        wall_time = time.monotonic() - start

        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{result.name}.csv"
        write_csv(csv_path, result.header, result.rows)

        seed = args.seed if args.seed is not None else int(sections["sim"].get("seed", 42))
        manifest = {
            "scenario": result.name,
            "seed": seed,
            "version": _version_string(),
            "wall_time_s": round(wall_time, 3),
            "outputs": [csv_path.name],
            "config": sections,
            "notes": result.notes,
        }
        # The manifest is written only once every output file exists.
        manifest_path = out_dir / f"{result.name}.manifest.json"
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {csv_path} and {manifest_path} ({wall_time:.1f}s)")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
