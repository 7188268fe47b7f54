"""Wall time of IDAssign and the baselines as the jobset grows at a fixed topology.

    python3 scripts/runtime_scaling.py --sizes 100,200,400 --seeds 10
"""
import argparse
import time

import numpy as np

from mecoffload import enumerate_instances, game, greedy, idassign, iterative
from mecoffload.workload import WorkloadConfig, synthesize_problem

ALGS = {"idassign": idassign, "greedy": greedy, "iterative": iterative, "game": game}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="100,200,400")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--servers", type=int, default=5)
    ap.add_argument("--bu", type=int, default=8)
    ap.add_argument("--cu", type=int, default=8)
    args = ap.parse_args()
    sizes = [int(n) for n in args.sizes.split(",")]

    rows = []
    for n in sizes:
        ms = {a: [] for a in ALGS}
        enum_ms, pool_sizes = [], []
        for seed in range(args.seeds):
            cfg = WorkloadConfig(n_servers=args.servers, bu_per_server=(args.bu,),
                                 cu_per_server=args.cu, jobset_size=n, seed=seed)
            problem, _ = synthesize_problem(cfg)
            t0 = time.perf_counter()
            pool = enumerate_instances(problem)
            enum_ms.append((time.perf_counter() - t0) * 1e3)
            pool_sizes.append(len(pool))
            for name, alg in ALGS.items():
                t0 = time.perf_counter()
                alg(pool, problem)
                ms[name].append((time.perf_counter() - t0) * 1e3)
        rows.append((n, np.mean(pool_sizes), np.mean(enum_ms), {a: np.mean(v) for a, v in ms.items()}))

    print(f"{'N':>5} {'|pool|':>8} {'enum ms':>9} " + " ".join(f"{a:>10}" for a in ALGS))
    for n, ps, em, ms in rows:
        print(f"{n:5d} {ps:8.0f} {em:9.1f} " + " ".join(f"{ms[a]:10.2f}" for a in ALGS))
    base = rows[0][3]["idassign"]
    for n, _, _, ms in rows[1:]:
        print(f"idassign N={n}: {ms['idassign'] / base:.2f}x the N={sizes[0]} time")


if __name__ == "__main__":
    main()
