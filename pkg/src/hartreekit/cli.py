"""Command-line entry point.

Verbs select the run mode; --config points at a config file or a shipped
preset name.  Exit codes: 0 success, 1 solver/run failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config, preset_names, resolve_config_arg
from .runner import emit_plot_data, run

VERB_TO_MODE = {
    "groundstate": "groundstate",
    "classify": "classify",
    "evolve": "evolve",
    "pipeline": "full_pipeline",
    "validate": "validate",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hartreekit",
        description="Ground states, dichotomy classification, and split-step evolution "
        "for the focusing Hartree equation with an external potential.",
    )
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, mode in VERB_TO_MODE.items():
        p = sub.add_parser(verb, help=f"run in {mode} mode")
        p.add_argument("--config", required=True, help="config file path or preset name (one of: %s)" % ", ".join(preset_names()))
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--threads", type=int, help="FFT worker count (overrides [run] threads)")
        p.add_argument("--seed", type=int, help="seed for randomized suites (overrides [run] seed)")
    pd = sub.add_parser("plot-data", help="emit tidy two-column series from a finished run")
    pd.add_argument("run_dir", help="directory of a finished evolve/pipeline run")
    pd.add_argument("--out", help="directory for the series files (default: <run_dir>/plots)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "plot-data":
        try:
            written = emit_plot_data(args.run_dir, out_dir=args.out)
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for path in written:
            print(path)
        return 0

    overrides = {("run", "mode"): VERB_TO_MODE[args.verb]}
    if args.out is not None:
        overrides[("run", "out")] = args.out
    if args.threads is not None:
        overrides[("run", "threads")] = str(args.threads)
    if args.seed is not None:
        overrides[("run", "seed")] = str(args.seed)
    try:
        path = resolve_config_arg(args.config)
        cfg = parse_config(path, overrides=overrides)
    except ConfigError as exc:
        print("configuration rejected:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
