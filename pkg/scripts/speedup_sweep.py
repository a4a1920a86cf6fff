"""Iterations and simulated time to reach a target loss as the worker count grows.

Total mini-batch work per iteration is held fixed (batch per worker = total / N).

    python scripts/speedup_sweep.py --workers 2 4 8 --seeds 3 --out sweep.csv
"""
import argparse
import csv
import sys

import numpy as np

from cbdybw.config import config_from_dict
from cbdybw.engine import run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--examples", type=int, default=1200)
    ap.add_argument("--total-batch", type=int, default=64)
    ap.add_argument("--eta", type=float, default=0.005)
    ap.add_argument("--target", type=float, default=0.3)
    ap.add_argument("--strategy", default="dtur", choices=["full", "static_p", "dtur"])
    ap.add_argument("--K", type=int, default=3000)
    ap.add_argument("--out", help="CSV file (default: stdout)")
    args = ap.parse_args()

    rows = []
    for n in args.workers:
        for seed in range(args.seeds):
            cfg = config_from_dict(
                {
                    "graph": {"kind": "random", "n": n, "p": 0.4},
                    "dataset": {"kind": "synth", "n_examples": args.examples, "dim": 10, "n_classes": 3, "seed": 100},
                    "strategy": args.strategy,
                    "lr_mode": "constant",
                    "eta0": args.eta,
                    "batch": max(1, args.total_batch // n),
                    "K": args.K,
                    "eps_target": args.target,
                    "early_stop": True,
                    "seed": seed,
                }
            )
            res = run(cfg)
            rows.append({"n": n, "seed": seed, "k_eps": res.k_eps, "time_to_eps": res.time_to_eps})
        ks = [r["k_eps"] for r in rows if r["n"] == n and r["k_eps"] is not None]
        print(f"N={n}: mean k_eps {np.mean(ks) if ks else float('nan'):.1f}", file=sys.stderr)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.DictWriter(fh, fieldnames=["n", "seed", "k_eps", "time_to_eps"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
