"""Experiment harness and command-line entry point.

    mecoffload run   --config exp.json [--out results.csv] [--algorithms a,b] [--seed n] [--parallel k]
    mecoffload gen   --config exp.json --out problem.json [--seed n]
    mecoffload solve --problem problem.json --algorithm idassign
    mecoffload lp    --problem problem.json --out model.lp

Log verbosity comes from ``MECOFFLOAD_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .baselines import game, greedy, iterative
from .enumeration import dominance_prune, enumerate_instances
from .exact import OPTIMAL, BnBConfig, exact_opt, write_lp
from .localratio import idassign
from .model import ProblemError, load_problem, save_problem, validate_solution
from .workload import WorkloadConfig, WorkloadError, synthesize_problem

log = logging.getLogger("mecoffload")

ALGORITHMS = ("idassign", "greedy", "iterative", "game", "exact")
COLUMNS = ("seed", "repetition", "jobset_size", "ru_b", "ru_c", "algorithm", "utility",
           "opt_utility", "opt_status", "ratio", "runtime_ms", "pool_size", "enum_ms")


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


def performance_ratio(alg_utility: float, opt_utility: float, rel_tol: float = 1e-9) -> float:
    """alg / opt, defined as 1 when both are 0. Raises if alg beats opt."""
    if alg_utility < 0:
        raise InvariantViolation(f"negative utility {alg_utility}")
    if alg_utility > opt_utility * (1 + rel_tol) + 1e-12:
        raise InvariantViolation(f"algorithm utility {alg_utility} exceeds optimum {opt_utility}")
    if opt_utility == 0:
        return 1.0
    return min(alg_utility / opt_utility, 1.0)


@dataclass
class ExperimentSpec:
    workload: Optional[WorkloadConfig] = field(default_factory=WorkloadConfig)
    problem_path: Optional[str] = None
    algorithms: tuple = ALGORITHMS
    repetitions: int = 3
    bnb: BnBConfig = field(default_factory=BnBConfig)
    output_path: str = "results.csv"
    jobset_sizes: Optional[tuple] = None
    iterative_max_iters: int = 20
    game_max_rounds: Optional[int] = None
    prune: bool = False
    parallel: int = 1

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")
        if self.workload is None and self.problem_path is None:
            raise ConfigError("need a workload or a problem file")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")

    @property
    def seed(self) -> int:
        return self.workload.seed if self.workload is not None else 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"problem"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        problem = d.pop("problem", None) or d.pop("problem_path", None)
        wl = d.pop("workload", None)
        bnb = d.pop("bnb", None) or {}
        try:
            workload = None if problem and wl is None else WorkloadConfig.from_dict(wl or {})
            return cls(workload=workload, problem_path=problem, bnb=BnBConfig(**bnb), **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentSpec.from_dict(doc)


def _run_algorithm(name, pool, problem, spec):
    if name == "idassign":
        return idassign(pool, problem), None
    if name == "greedy":
        return greedy(pool, problem), None
    if name == "iterative":
        return iterative(pool, problem, spec.iterative_max_iters), None
    if name == "game":
        return game(pool, problem, spec.game_max_rounds), None
    if name == "exact":
        return exact_opt(pool, problem, spec.bnb)
    raise ConfigError(f"unknown algorithm {name}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_task(spec: ExperimentSpec, jobset_size: Optional[int], rep: int):
    """One repetition: build the problem, solve with every algorithm.

    Returns (rows, violations).
    """
    if spec.problem_path:
        problem = load_problem(spec.problem_path)
        ru_b = ru_c = None
    else:
        cfg = spec.workload
        if jobset_size is not None:
            cfg = WorkloadConfig.from_dict({**cfg.to_dict(), "jobset_size": jobset_size})
        rng = np.random.default_rng([cfg.seed, cfg.jobset_size, rep])
        problem, jobset = synthesize_problem(cfg, rng)
        ru_b, ru_c = jobset.ru_b, jobset.ru_c

    t0 = time.perf_counter()
    pool = enumerate_instances(problem)
    if spec.prune:
        pool = dominance_prune(pool)
    enum_ms = (time.perf_counter() - t0) * 1e3

    results = {}
    order = sorted(spec.algorithms, key=lambda a: a != "exact")
    for name in order:
        t0 = time.perf_counter()
        sol, status = _run_algorithm(name, pool, problem, spec)
        results[name] = (sol, status, (time.perf_counter() - t0) * 1e3)

    violations = []
    opt_u = opt_status = None
    if "exact" in results:
        opt_u = results["exact"][0].total_utility
        opt_status = results["exact"][1]
    rows = []
    for name in spec.algorithms:
        sol, _, ms = results[name]
        errs = validate_solution(sol, pool, problem)
        violations += [f"rep {rep} {name}: {e}" for e in errs]
        ratio = None
        if opt_u is not None:
            if opt_status == OPTIMAL:
                try:
                    ratio = performance_ratio(sol.total_utility, opt_u)
                except InvariantViolation as exc:
                    violations.append(f"rep {rep} {name}: {exc}")
            elif opt_u > 0:
                # incumbent only; a heuristic may beat it
                ratio = sol.total_utility / opt_u
        rows.append({
            "seed": spec.seed, "repetition": rep, "jobset_size": len(problem.jobs),
            "ru_b": ru_b, "ru_c": ru_c, "algorithm": name, "utility": float(sol.total_utility),
            "opt_utility": opt_u, "opt_status": opt_status, "ratio": ratio,
            "runtime_ms": ms, "pool_size": len(pool), "enum_ms": enum_ms,
        })
    return rows, violations


def _task_entry(args):
    return run_task(*args)


def run_experiment(spec: ExperimentSpec) -> list[str]:
    """Run every (jobset size, repetition) and write the CSV report.

    Returns the list of invariant violations (empty on success).
    """
    sizes = list(spec.jobset_sizes) if spec.jobset_sizes else [None]
    tasks = [(spec, n, rep) for n in sizes for rep in range(spec.repetitions)]
    try:
        out = open(spec.output_path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot write {spec.output_path}: {exc}") from exc
    violations = []
    with out:
        writer = csv.DictWriter(out, fieldnames=COLUMNS)
        writer.writeheader()
        if spec.parallel > 1:
            with ProcessPoolExecutor(spec.parallel) as ex:
                results = ex.map(_task_entry, tasks)
                for rows, bad in results:
                    writer.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
                    violations += bad
        else:
            for task in tasks:
                rows, bad = run_task(*task)
                writer.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
                out.flush()
                violations += bad
                log.info("size=%s rep=%d done", task[1], task[2])
    return violations


def _solution_doc(sol, status, pool, runtime_ms):
    return {
        "total_utility": sol.total_utility,
        "status": status,
        "runtime_ms": runtime_ms,
        "pool_size": len(pool),
        "selected": [{
            "job_id": i.job_id, "server_id": i.server_id, "ring_index": i.ring_index,
            "bu_alloc": i.bu_alloc, "cu_alloc": i.cu_alloc, "completion_time": i.completion_time,
            "utility": i.utility} for i in (pool.instances[k] for k in sorted(sol.selected))],
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mecoffload", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a batch experiment and write a CSV report")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--algorithms", help="comma-separated subset of " + ",".join(ALGORITHMS))
    run.add_argument("--seed", type=int)
    run.add_argument("--parallel", type=int)

    gen = sub.add_parser("gen", help="synthesize one problem and save it as JSON")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)

    solve = sub.add_parser("solve", help="solve a problem file and print the solution as JSON")
    solve.add_argument("--problem", required=True)
    solve.add_argument("--algorithm", required=True, choices=ALGORITHMS)
    solve.add_argument("--timeout", type=float, default=600.0)
    solve.add_argument("--prune", action="store_true", help="drop dominated instances first")

    lp = sub.add_parser("lp", help="export a problem as a CPLEX-LP model")
    lp.add_argument("--problem", required=True)
    lp.add_argument("--out", required=True)
    return ap


def _with_seed(spec: ExperimentSpec, seed: Optional[int]) -> ExperimentSpec:
    if seed is None or spec.workload is None:
        return spec
    spec.workload = WorkloadConfig.from_dict({**spec.workload.to_dict(), "seed": seed})
    return spec


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MECOFFLOAD_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            spec = _with_seed(load_spec(args.config), args.seed)
            if args.out:
                spec.output_path = args.out
            if args.algorithms:
                spec = replace(spec, algorithms=tuple(args.algorithms.split(",")))
            if args.parallel:
                spec.parallel = args.parallel
            violations = run_experiment(spec)
            for v in violations:
                log.error("invariant violation: %s", v)
            return 1 if violations else 0
        if args.cmd == "gen":
            spec = _with_seed(load_spec(args.config), args.seed)
            if spec.workload is None:
                raise ConfigError("gen needs a workload section")
            problem, _ = synthesize_problem(spec.workload)
            save_problem(problem, args.out)
            return 0
        if args.cmd == "solve":
            problem = load_problem(args.problem)
            pool = enumerate_instances(problem)
            if args.prune:
                pool = dominance_prune(pool)
            spec = ExperimentSpec(workload=None, problem_path=args.problem,
                                  bnb=BnBConfig(timeout=args.timeout))
            t0 = time.perf_counter()
            sol, status = _run_algorithm(args.algorithm, pool, problem, spec)
            ms = (time.perf_counter() - t0) * 1e3
            json.dump(_solution_doc(sol, status, pool, ms), sys.stdout, indent=1)
            sys.stdout.write("\n")
            return 1 if validate_solution(sol, pool, problem) else 0
        if args.cmd == "lp":
            problem = load_problem(args.problem)
            with open(args.out, "w") as fh:
                write_lp(enumerate_instances(problem), problem, fh)
            return 0
    except (ConfigError, ProblemError, WorkloadError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
