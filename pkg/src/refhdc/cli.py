"""Command-line entry point: ``refhdc run | compare | validate-costs``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .config import load_config
from .errors import ConfigError, InvalidArgumentError, ParseError, ProtocolError
from .plotting import plot_trajectories

log = logging.getLogger("refhdc")


def cmd_run(args) -> int:
    overrides = {"master_seed": args.seed, "output_dir": args.out}
    cfg = load_config(args.config, overrides)
    if not cfg.output_dir:
        raise ConfigError({"output_dir": "set output_dir in the config or pass --out"})
    run, seconds = runner.execute(cfg, threads=args.threads)
    summary = runner.write_run(
        cfg.output_dir, cfg, run, seconds, threads=args.threads,
        wall_clock=args.wall_clock, plot=not args.no_plot,
    )
    print(json.dumps(summary, indent=2))
    return 0


def cmd_compare(args) -> int:
    rows = runner.compare_runs(args.run_dirs, args.reference)
    text = runner.rows_to_csv(rows)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(text)
        (out / "compare.json").write_text(json.dumps(rows, indent=2) + "\n")
        series = {}
        for p, row in zip(args.run_dirs, rows):
            recs = runner.read_records(Path(p) / "records.csv")
            series[row["run"]] = ([r.round for r in recs], [r.accuracy for r in recs])
        plot_trajectories(series, out / "trajectories.png", target=rows[0]["target_accuracy"])
    return 0


def cmd_validate_costs(args) -> int:
    configs = [load_config(p) for p in args.config]
    rows = runner.cost_rows(configs, args.rounds)
    if args.format == "json":
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        sys.stdout.write(runner.rows_to_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refhdc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log every round")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration and write its reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--threads", type=int, default=1, help="clients trained concurrently")
    p.add_argument("--wall-clock", action="store_true",
                   help="fill the seconds column of records.csv (breaks byte-reproducibility)")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="rounds-to-target and traffic table over run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--reference", help="run whose max accuracy is the target (default: first)")
    p.add_argument("--out", help="also write compare.csv, compare.json, trajectories.png here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate-costs", help="closed-form FLOPs and traffic without training")
    p.add_argument("--config", action="append", required=True,
                   help="repeatable; deltas are relative to the first")
    p.add_argument("--rounds", type=int, action="append",
                   help="repeatable; rounds counted for the matching --config (default G)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_validate_costs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        for key, msg in exc.problems.items():
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return 2
    except (ParseError, InvalidArgumentError, ProtocolError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
