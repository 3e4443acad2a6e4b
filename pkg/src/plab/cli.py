"""Command-line front end: one subcommand per experiment kind."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plab",
        description="Run capacity-loss experiments from JSON configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="|".join(runner.KINDS))
    for kind in runner.KINDS:
        p = sub.add_parser(kind, help=f"execute a {kind} config")
        p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--seeds", default=None,
                       help="comma-separated seed override, e.g. 0,1,2")
        p.add_argument("--jobs", type=int, default=1,
                       help="max concurrent runs (default 1)")
        p.add_argument("--dry-run", action="store_true",
                       help="print the planned runs without executing")
        p.add_argument("--force", action="store_true",
                       help="recompute runs even if their outputs exist")
        p.add_argument("--out", default=None,
                       help="output directory (default: config output_dir, "
                            "then $PLAB_OUT, then ./plab_out)")
    return parser


def _parse_seeds(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise runner.ConfigError(f"--seeds: expected comma-separated integers, got {text!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = runner.parse_config(Path(args.config).read_text(encoding="utf-8"))
        if cfg.kind != args.command:
            raise runner.ConfigError(
                f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        if args.seeds is not None:
            seeds = _parse_seeds(args.seeds)
            if not seeds:
                raise runner.ConfigError("--seeds: expected at least one integer")
            cfg.seeds = seeds
        if args.jobs < 1:
            raise runner.ConfigError("--jobs: must be >= 1")
    except (OSError, runner.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = runner.resolve_output_dir(cfg, args.out)
    records = runner.run_experiment(cfg, jobs=args.jobs, dry_run=args.dry_run,
                                    force=args.force, out_dir=out)
    if args.dry_run:
        for rec in records:
            extras = " ".join(f"{k}={v}" for k, v in sorted(rec.overrides.items()))
            print(f"plan run_{rec.run_id} seed={rec.seed}" + (f" {extras}" if extras else ""))
        print(f"{len(records)} run(s) planned")
        return 0

    failed = 0
    for rec in records:
        line = f"run_{rec.run_id} seed={rec.seed} {rec.status}"
        if rec.error:
            line += f" ({rec.error})"
            failed += 1
        print(line)
    paths = runner.write_outputs(records, "csv", out)
    paths += runner.write_outputs(records, "svg", out)
    for path in paths:
        print(f"wrote {path}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
