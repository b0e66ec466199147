"""Command line: ``lowsnr <stage> CONFIG`` or ``lowsnr run CONFIG``.

Exit codes: 0 success, 2 configuration error, 3 data error (missing or
corrupt inputs), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FitError
from .config import OUTPUT_ENV, ConfigError, RunConfig, list_presets
from .network import NetworkError
from .noise import NoiseInjectionError
from .pipeline import STAGES, Context, DataError, plan, run_stage, write_resolved_config
from .unwrap import UnwrapError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("lowsnr")


def _add_common(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="YAML run configuration")
    src.add_argument("--preset", help=f"built-in configuration ({', '.join(list_presets())})")
    p.add_argument("--out", help=f"output directory (default: config output_dir, else ${OUTPUT_ENV}/<name>)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and stage plan, then exit")
    p.add_argument("--force", action="store_true", help="re-run even if outputs are up to date")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowsnr", description="Low-SNR InSAR noise-injection pipeline")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        _add_common(sub.add_parser(stage, help=f"run the {stage} stage"))
    _add_common(sub.add_parser("run", help="run every stage in order"))
    sub.add_parser("presets", help="list built-in configurations")
    return ap


def _load_config(args) -> RunConfig:
    if args.preset:
        return RunConfig.preset(args.preset)
    return RunConfig.load(args.config)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "presets":
        print("\n".join(list_presets()))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _load_config(args)
        ctx = Context(cfg, cfg.resolve_output(args.out), jobs=args.jobs, force=args.force)
        stages = STAGES if args.command == "run" else (args.command,)
        if args.dry_run:
            print(f"# resolved configuration (output: {ctx.out})")
            print(cfg.to_yaml(), end="")
            print("# stage plan")
            for stage, action in plan(ctx, stages):
                print(f"{stage}: {action}")
            return EXIT_OK
        write_resolved_config(ctx)
        for stage in stages:
            status = run_stage(ctx, stage)
            print(f"{stage}: {status}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NoiseInjectionError, UnwrapError, NetworkError, FitError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
