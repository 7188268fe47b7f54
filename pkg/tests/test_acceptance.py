"""Acceptance criteria. Each test appends one PASS/FAIL line to RESULTS,
which conftest prints in the terminal summary."""
import time

import numpy as np
import pytest

from mecoffload.baselines import game, greedy, iterative
from mecoffload.cli import ExperimentSpec, run_experiment
from mecoffload.enumeration import enumerate_instances
from mecoffload.exact import OPTIMAL, exact_opt, exhaustive_opt
from mecoffload.localratio import ZERO_TOL, decompose, idassign
from mecoffload.model import validate_solution
from mecoffload.workload import WorkloadConfig, randfixedsum, random_problem, synthesize_problem
from helpers import small_cases

RESULTS = []


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_approximation_bound():
    cases = small_cases(1000, 1000, max_pool=25)
    worst, bad = 1.0, 0
    for problem, pool in cases:
        alg = idassign(pool, problem).total_utility
        opt = exhaustive_opt(pool, problem).total_utility
        if 6 * alg < opt - 1e-9:
            bad += 1
        worst = min(worst, alg / opt)
    report("approximation bound", bad == 0,
           f"{len(cases)} problems, {bad} below OPT/6, worst ratio {worst:.3f}")


def test_oracle_equivalence():
    cases = small_cases(2000, 500, max_pool=20)
    bad = 0
    for problem, pool in cases:
        sol, status = exact_opt(pool, problem)
        if status != OPTIMAL or sol.total_utility != exhaustive_opt(pool, problem).total_utility:
            bad += 1
    report("oracle equivalence", bad == 0, f"{len(cases)} pools, {bad} mismatches")


def test_feasibility_suite():
    rng = np.random.default_rng(3000)
    algs = {
        "idassign": idassign, "greedy": greedy, "iterative": iterative, "game": game,
        "exact": lambda pool, problem: exact_opt(pool, problem)[0],
    }
    n, bad = 0, []
    while n < 1000:
        problem = random_problem(rng)
        pool = enumerate_instances(problem)
        n += 1
        for name, alg in algs.items():
            errs = validate_solution(alg(pool, problem), pool, problem)
            bad += [f"{name}: {e}" for e in errs]
    report("feasibility suite", not bad, f"{n} problems x {len(algs)} algorithms, "
           f"{len(bad)} violations" + (f" (first: {bad[0]})" if bad else ""))


def test_decomposition_identity():
    cases = small_cases(4000, 100, max_pool=300)
    layers, worst_rel, worst_res, bad = 0, 0.0, 0.0, 0
    for problem, pool in cases:
        trace = []
        idassign(pool, problem, trace)
        for cur, nxt in zip(trace, trace[1:]):
            layers += 1
            w = cur.weights
            w1, w2 = decompose(w, cur.pivot, set(w), pool)
            for i, wi in w.items():
                rel = abs(w1[i] + w2[i] - wi) / max(abs(wi), 1e-300)
                worst_rel = max(worst_rel, rel)
            worst_res = max(worst_res, abs(w2[cur.pivot]))
            # the next layer must be exactly the positive part of w2
            want = {i: v for i, v in w2.items() if v > ZERO_TOL}
            if set(nxt.weights) != set(want) or any(
                    abs(nxt.weights[i] - v) > 1e-9 * max(1.0, abs(v)) for i, v in want.items()):
                bad += 1
    ok = worst_rel <= 1e-9 and worst_res <= 1e-12 and bad == 0
    report("decomposition identity", ok,
           f"{len(cases)} runs, {layers} layers, max rel err {worst_rel:.1e}, "
           f"max pivot residual {worst_res:.1e}, {bad} layer mismatches")


DESK = dict(n_servers=5, bu_per_server=(8,), cu_per_server=8,
            ru_b_range=(0.6, 0.9), ru_c_range=(0.6, 0.9))


@pytest.mark.slow
def test_desk_scale_ratio():
    parts, ok = [], True
    for n in (20, 30, 40):
        ratios, timeouts = [], 0
        for seed in range(50):
            problem, _ = synthesize_problem(WorkloadConfig(**DESK, jobset_size=n, seed=seed))
            pool = enumerate_instances(problem)
            opt, status = exact_opt(pool, problem)
            timeouts += status != OPTIMAL
            ratios.append(idassign(pool, problem).total_utility / opt.total_utility)
        r = np.array(ratios)
        ok &= timeouts == 0 and r.mean() >= 0.50 and (r > 1 / 6).all()
        parts.append(f"N={n} mean {r.mean():.3f} min {r.min():.3f}"
                     + (f" ({timeouts} timeouts)" if timeouts else ""))
    report("desk-scale ratio", ok, "; ".join(parts))


@pytest.mark.slow
def test_runtime_scaling():
    sizes = (100, 200, 400)
    mean_ms = []
    for n in sizes:
        times = []
        for seed in range(10):
            # the topology is drawn first from the seed, so it is fixed across N
            problem, _ = synthesize_problem(WorkloadConfig(**DESK, jobset_size=n, seed=seed))
            pool = enumerate_instances(problem)
            best = np.inf
            for _ in range(3):
                t0 = time.perf_counter()
                idassign(pool, problem)
                best = min(best, time.perf_counter() - t0)
            times.append(best * 1e3)
        mean_ms.append(float(np.mean(times)))
    factors = [b / a for a, b in zip(mean_ms, mean_ms[1:])]
    report("runtime scaling", all(f <= 4 for f in factors),
           "mean ms " + ", ".join(f"N={n}: {t:.2f}" for n, t in zip(sizes, mean_ms))
           + "; doubling factors " + ", ".join(f"{f:.2f}" for f in factors))


def test_randfixedsum():
    rng = np.random.default_rng(5000)
    sum_ok = bound_ok = True
    mean_bad, checks = 0, 0
    for _ in range(5):
        n = int(rng.integers(2, 9))
        lo = float(rng.uniform(-1, 1))
        hi = lo + float(rng.uniform(0.1, 2))
        total = float(rng.uniform(n * lo, n * hi))
        x = np.array([randfixedsum(n, total, lo, hi, rng) for _ in range(2000)])
        sum_ok &= bool(np.all(np.abs(x.sum(1) - total) <= 1e-9 * max(1.0, abs(total))))
        bound_ok &= bool(np.all((x >= lo) & (x <= hi)))
        se = x.std(0, ddof=1) / np.sqrt(len(x))
        mean_bad += int(np.sum(np.abs(x.mean(0) - total / n) > 3 * se))
        checks += n
    report("randfixedsum", sum_ok and bound_ok and mean_bad == 0,
           f"10000 draws over 5 settings, sum ok {sum_ok}, bounds ok {bound_ok}, "
           f"{mean_bad}/{checks} component means beyond 3 SE")


def test_determinism(tmp_path):
    def once(name):
        spec = ExperimentSpec.from_dict({
            "workload": {**DESK, "jobset_size": 20, "seed": 11},
            "algorithms": ["idassign", "greedy", "iterative", "game", "exact"],
            "repetitions": 2, "output_path": str(tmp_path / name)})
        assert run_experiment(spec) == []
        lines = (tmp_path / name).read_bytes().splitlines()
        header = lines[0].split(b",")
        cols = [header.index(c) for c in (b"utility", b"opt_utility")]
        return [tuple(r.split(b",")[c] for c in cols) for r in lines[1:]]
    a, b = once("a.csv"), once("b.csv")
    report("determinism", a == b and len(a) == 10, f"{len(a)} rows, identical {a == b}")
