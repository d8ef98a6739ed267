"""Command-line entry point: ``bansap run|sweep|validate|replay``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness


def _report(tables, out_dir) -> int:
    failures = [f for t in tables for f in t.failures]
    if any(t.runs for t in tables):
        nonempty = [t for t in tables if t.runs]
        for path in harness.emit_outputs(nonempty, out_dir):
            print(f"wrote {path}")
        for t in nonempty:
            prefix = f"[{t.axis}={t.axis_value}] " if t.axis else ""
            for alg, stats in t.summary().items():
                cost, fit = stats["avg_cost"], stats["fit"]
                print(f"{prefix}{alg:28s} cost {cost[0]:10.3f} +/- {cost[1]:8.3f}   fit {fit[0]:10.3f} +/- {fit[1]:8.3f}")
    for alg, seed, msg in failures:
        print(f"FAILED algorithm={alg} seed={seed}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bansap", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run every configured algorithm on every seed")
    p.add_argument("config")
    p.add_argument("--out", help=f"output directory (overrides ${harness.OUTPUT_ENV} and the config)")
    p.add_argument("--runs", type=int, help="override the Monte-Carlo run count")
    p.add_argument("-T", type=int, help="override the horizon")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("sweep", help="repeat the experiment along one axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=harness.AXES)
    p.add_argument("--values", required=True, nargs="+")
    p.add_argument("--out")
    p.add_argument("--runs", type=int)
    p.add_argument("-T", type=int)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")

    p = sub.add_parser("replay", help="run the configured algorithms on a saved fog instance")
    p.add_argument("snapshot")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0, help="algorithm stream seed")
    p.add_argument("--out")

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        cfg = harness.load_config(args.config)
        for key in ("runs", "T", "workers"):
            if getattr(args, key, None) is not None:
                setattr(cfg, key, getattr(args, key))
        cfg.__post_init__()
        if args.cmd == "validate":
            cfg.validate()
            print(f"{args.config}: ok ({len(cfg.algorithms)} algorithms, {cfg.runs} runs, T={cfg.T})")
            return 0
        out = harness.resolve_output_dir(cfg, args.out)
        if args.cmd == "run":
            tables = [harness.run_experiment(cfg)]
        elif args.cmd == "sweep":
            tables = harness.sweep(cfg, args.axis, args.values)
        else:
            tables = [harness.replay(args.snapshot, cfg, args.seed)]
        return _report(tables, out)
    except (harness.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
