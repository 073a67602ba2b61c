"""Command-line entry point.

Subcommands map one-to-one onto runner modes plus a standalone ``plot``:

    tsforget ode-run        --config cfg.json [--out DIR] [--workers N]
    tsforget sim-run        --config cfg.json ...
    tsforget sweep-v        --config cfg.json ...
    tsforget sweep-2d       --config cfg.json ...
    tsforget integrals-check [--config cfg.json] ...
    tsforget plot --csv results.csv --kind lines|heatmap --out fig.svg [--logy]

The config file is a single JSON document (schema in the README); the
subcommand overrides its ``mode``.  Exit code is 0 only if every run in the
manifest succeeded (for integrals-check: every comparison passed).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .plotting import PlotError, emit_plot
from .runner import ConfigError, ExperimentConfig, run


def _add_run_parser(sub, name: str, needs_config: bool) -> None:
    p = sub.add_parser(name, help=f"run a {name} experiment")
    p.add_argument("--config", required=needs_config, help="JSON experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seed-offset", type=int, default=0, help="shift every config seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsforget",
        description="Teacher-student continual-learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ode-run", "sim-run", "sweep-v", "sweep-2d"):
        _add_run_parser(sub, name, needs_config=True)
    _add_run_parser(sub, "integrals-check", needs_config=False)

    p = sub.add_parser("plot", help="render a result CSV to SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--kind", required=True, choices=("lines", "heatmap"))
    p.add_argument("--out", required=True)
    p.add_argument("--logy", action="store_true")
    return parser


def _print_integrals_table(out_dir: str) -> None:
    path = f"{out_dir}/integrals_check.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for r in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "plot":
        try:
            emit_plot(args.csv, args.kind, args.out, logy=args.logy)
        except (PlotError, OSError) as exc:
            print(f"plot failed: {exc}", file=sys.stderr)
            return 2
        return 0

    try:
        if args.config:
            with open(args.config) as fh:
                doc = json.load(fh)
            doc["mode"] = args.command
            cfg = ExperimentConfig.from_json_dict(doc)
        else:
            cfg = ExperimentConfig(mode=args.command)
        cfg = cfg.with_seed_offset(args.seed_offset)
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2

    manifest = run(cfg, out_dir=args.out, workers=args.workers)
    out_dir = args.out if args.out is not None else cfg.output_dir
    if cfg.mode == "integrals-check":
        _print_integrals_table(out_dir)
    failures = [r for r in manifest.runs if r["status"] != "ok"]
    print(
        f"{cfg.mode}: {len(manifest.runs) - len(failures)}/{len(manifest.runs)} runs ok, "
        f"{len(manifest.artifacts)} artifacts in {out_dir}"
    )
    for r in failures:
        print(f"  failed {r['key']}: {r['status']}", file=sys.stderr)
    return 0 if manifest.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
