"""Performance ratio of every heuristic against the exact optimum on desk-scale
workloads, for low and high utilization ranges.

    python3 scripts/ratio_sweep.py --seeds 20 --out results/ratio_sweep.csv
"""
import argparse
import csv
import os
from collections import defaultdict

import numpy as np

from mecoffload.cli import ExperimentSpec, run_experiment

RANGES = {"low": (0.6, 0.9), "high": (1.2, 1.5)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--sizes", default="20,30,40")
    ap.add_argument("--servers", type=int, default=5)
    ap.add_argument("--units", type=int, default=8, help="B = C per server")
    ap.add_argument("--timeout", type=float, default=60.0)
    ap.add_argument("--out", default="results/ratio_sweep.csv")
    args = ap.parse_args()
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)

    summary = defaultdict(list)
    for label, rng in RANGES.items():
        path = args.out.replace(".csv", f"_{label}.csv")
        spec = ExperimentSpec.from_dict({
            "workload": {"n_servers": args.servers, "bu_per_server": [args.units],
                         "cu_per_server": args.units, "ru_b_range": list(rng),
                         "ru_c_range": list(rng), "seed": 0},
            "jobset_sizes": [int(n) for n in args.sizes.split(",")],
            "repetitions": args.seeds, "bnb": {"timeout": args.timeout},
            "output_path": path})
        bad = run_experiment(spec)
        if bad:
            raise SystemExit("invariant violations:\n" + "\n".join(bad))
        with open(path) as fh:
            for row in csv.DictReader(fh):
                if row["ratio"]:
                    summary[(label, int(row["jobset_size"]), row["algorithm"])].append(
                        float(row["ratio"]))

    print(f"{'range':6} {'N':>4} {'algorithm':10} {'mean':>6} {'min':>6}")
    for (label, n, alg), r in sorted(summary.items()):
        print(f"{label:6} {n:4d} {alg:10} {np.mean(r):6.3f} {np.min(r):6.3f}")


if __name__ == "__main__":
    main()
