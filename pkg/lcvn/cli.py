"""
Command-line entry point.

    python -m lcvn generate --config run.yaml
    python -m lcvn train-wm --config run.yaml wm.steps=200
    python -m lcvn eval --split val_unseen
    python -m lcvn ablate --axis language

Trailing ``section.key=value`` arguments override config keys one-to-one.
Exit code 0 on success, 1 on a pipeline error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from lcvn.config import load_run_config
from lcvn.errors import LCVNError
from lcvn.monitoring.logging import configure_logging, log_exceptions
from lcvn.pipeline import (
    AblationSpec,
    RunContext,
    cmd_ablate,
    cmd_eval,
    cmd_generate,
    cmd_report,
    cmd_train,
    seed_everything,
)

logger = logging.getLogger("lcvn.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _generate(ctx: RunContext, args: argparse.Namespace) -> None:
    manifest = cmd_generate(ctx, progress=args.progress)
    print(f"dataset written to {ctx.data_dir} ({sum(s.count for s in manifest.splits.values())} trajectories)")


def _train(phase: str) -> Callable[[RunContext, argparse.Namespace], None]:
    def run(ctx: RunContext, args: argparse.Namespace) -> None:
        losses = cmd_train(ctx, phase, progress=args.progress)
        print(" ".join(f"{k}={v:.4f}" for k, v in sorted(losses.items())))

    return run


def _eval(ctx: RunContext, args: argparse.Namespace) -> None:
    families = args.families.split(",") if args.families else None
    report = cmd_eval(ctx, split=args.split, families=families, progress=args.progress)
    print(report.table())


def _ablate(ctx: RunContext, args: argparse.Namespace) -> None:
    ablation = cmd_ablate(ctx, AblationSpec.for_axis(args.axis), progress=args.progress)
    print(ablation.table())


def _report(ctx: RunContext, args: argparse.Namespace) -> None:
    print(cmd_report(ctx, split=args.split))


COMMANDS: Dict[str, Callable[[RunContext, argparse.Namespace], None]] = {
    "generate": _generate,
    "train-wm": _train("wm"),
    "train-ac": _train("ac"),
    "train-uni": _train("uni"),
    "eval": _eval,
    "ablate": _ablate,
    "report": _report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcvn", description="Language-conditioned visual navigation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML run config")
        p.add_argument("--data-dir", default=None, help="dataset directory (default: <run>/data)")
        p.add_argument("--log-level", default=os.getenv("LCVN_LOG_LEVEL", "INFO"))
        p.add_argument("--log-json", action="store_true", help="emit JSON log records")
        p.add_argument("--progress", action="store_true", help="show progress bars")
        p.add_argument("overrides", nargs="*", help="section.key=value config overrides")
        if name in ("eval", "report"):
            p.add_argument("--split", default=None)
        if name == "eval":
            p.add_argument("--families", default=None, help="comma-separated families (wm_ac,uni,random)")
        if name == "ablate":
            p.add_argument("--axis", required=True)
    return parser


@log_exceptions(logger)
def run_command(args: argparse.Namespace) -> None:
    configure_logging(level=args.log_level, json_format=args.log_json)
    cfg = load_run_config(args.config, args.overrides)
    seed_everything(cfg.seed)
    ctx = RunContext.open(cfg, data_dir=Path(args.data_dir) if args.data_dir else None)
    configure_logging(
        level=args.log_level,
        log_file=str(ctx.store.path("logs/run.log")),
        json_format=args.log_json,
    )
    ctx.log.info("command started", extra={"command": args.command})
    COMMANDS[args.command](ctx, args)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    bad = [o for o in args.overrides if "=" not in o]
    if bad:
        parser.print_usage(sys.stderr)
        print(f"lcvn: overrides must look like section.key=value: {bad}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run_command(args)
    except LCVNError as exc:
        print(f"lcvn: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
