#!/usr/bin/env python3
"""Run the fog study and its sweeps, then draw the figures.

Produces, under ``--out``:

* ``main/``    all algorithms of the config (cost and fit over time)
* ``M/``       sweep over the number of actions per slot
* ``scheme/``  sweep over the direction sampler
* ``N/``       sweep over network size

Each directory holds raw.csv, summary.csv and plot.py; the plots are rendered
unless ``--no-plots`` is given.
"""

import argparse
import copy
import subprocess
import sys
from pathlib import Path

from bansap import harness

ROOT = Path(__file__).resolve().parents[1]
# the M and scheme sweeps rewrite every bandit entry, so they use one entry plus baselines
SWEEP_ENTRY = "bansap_m2_uniform"


def single_bandit(cfg):
    new = copy.deepcopy(cfg)
    new.algorithms = [a for a in new.algorithms if a.type != "bansap" or a.label == SWEEP_ENTRY]
    return new


def emit(tables, out, plots):
    harness.emit_outputs(tables, out)
    if plots:
        subprocess.run([sys.executable, "plot.py"], cwd=out, check=True)
    print(harness.summary_csv(tables if isinstance(tables, list) else [tables]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "fog_default.yaml"))
    ap.add_argument("--out", default=str(ROOT / "results" / "figures"))
    ap.add_argument("--runs", type=int, default=None)
    ap.add_argument("-T", type=int, default=None)
    # M=1 needs its own (much smaller) stepsizes, so it is left out of the M sweep
    ap.add_argument("--M-values", type=int, nargs="+", default=[2, 3, 5, 10])
    ap.add_argument("--N-values", type=int, nargs="+", default=[5, 10, 20])
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args(argv)

    cfg = harness.load_config(args.config)
    if args.runs is not None:
        cfg.runs = args.runs
    if args.T is not None:
        cfg.T = args.T
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.__post_init__()
    out = Path(args.out)
    plots = not args.no_plots

    emit(harness.run_experiment(cfg), out / "main", plots)
    reduced = single_bandit(cfg)
    emit(harness.sweep(reduced, "M", args.M_values), out / "M", plots)
    emit(harness.sweep(reduced, "scheme", ["uniform", "coordinate"]), out / "scheme", plots)
    emit(harness.sweep(cfg, "N", args.N_values), out / "N", plots)
    return 0


if __name__ == "__main__":
    sys.exit(main())
