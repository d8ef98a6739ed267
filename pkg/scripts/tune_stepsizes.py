#!/usr/bin/env python3
"""Coarse grid scan of BanSaP stepsizes on the fog problem.

Each grid point runs a handful of seeds. The script prints every point and
marks the cheapest one whose fit per node-slot stays under ``--max-fit``.

    python scripts/tune_stepsizes.py --M 2 --scheme uniform \
        --alpha 0.003 0.01 0.03 0.1 --mu 0.003 0.01 0.03 --delta 0.05 0.2
"""

import argparse
import csv
import itertools
import sys
from pathlib import Path

import yaml

from bansap import harness

ROOT = Path(__file__).resolve().parents[1]


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "fog_default.yaml"))
    ap.add_argument("--M", type=int, default=2)
    ap.add_argument("--scheme", default="uniform", choices=["uniform", "coordinate", "gaussian"])
    ap.add_argument("--alpha", type=float, nargs="+", default=[1e-3, 3e-3, 1e-2, 3e-2, 0.1])
    ap.add_argument("--mu", type=float, nargs="+", default=[3e-3, 1e-2, 3e-2, 0.1])
    ap.add_argument("--delta", type=float, nargs="+", default=[0.05, 0.2, 1.0])
    ap.add_argument("--gamma", type=float, default=None, help="override gamma (default delta / r)")
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("-T", type=int, default=2000)
    ap.add_argument("--max-fit", type=float, default=0.01, help="admissible fit per node-slot")
    ap.add_argument("--csv", default=None, help="write the scan to this file")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    base = yaml.safe_load(Path(args.config).read_text())
    base["experiment"].update(runs=args.runs, T=args.T)
    rows = []
    for alpha, mu, delta in itertools.product(args.alpha, args.mu, args.delta):
        params = {"alpha": alpha, "mu": mu, "delta": delta}
        if args.gamma is not None:
            params["gamma"] = args.gamma
        data = dict(base, algorithms=[{"type": "bansap", "M": args.M, "scheme": args.scheme, "params": params}])
        try:
            table = harness.run_experiment(harness.config_from_dict(data))
        except (harness.ConfigError, ValueError) as exc:
            print(f"skip alpha={alpha:g} mu={mu:g} delta={delta:g}: {exc}", file=sys.stderr)
            continue
        if table.failures:
            continue
        s = next(iter(table.summary().values()))
        rows.append({"alpha": alpha, "mu": mu, "delta": delta, "cost": s["avg_cost"][0],
                     "fit_per_node_slot": s["fit_per_node_slot"][0], "max_dual": s["max_dual_norm"][0]})
        r = rows[-1]
        print(f"alpha={alpha:<8g} mu={mu:<8g} delta={delta:<6g} cost={r['cost']:9.2f} "
              f"fit/slot={r['fit_per_node_slot']:8.4f} max|lambda|={r['max_dual']:8.2f}", flush=True)

    ok = [r for r in rows if r["fit_per_node_slot"] <= args.max_fit]
    if ok:
        best = min(ok, key=lambda r: r["cost"])
        print(f"\nbest admissible: alpha={best['alpha']:g} mu={best['mu']:g} delta={best['delta']:g} "
              f"cost={best['cost']:.2f}")
    else:
        print("\nno grid point meets the fit threshold")
    if args.csv and rows:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
