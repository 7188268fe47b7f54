"""Exact solvers: depth-first branch-and-bound and a brute-force oracle.

The branch-and-bound fixes one job per tree level (jobs in descending order
of their best utility) and either picks one of its instances or skips it.
Nodes are pruned with admissible bounds on the remaining jobs, cheapest
first:

* the sum of each job's best utility,
* a per-server knapsack bound: dropping the one-instance-per-job coupling
  *across* servers leaves, per server, a 2-D multiple-choice knapsack over
  the remaining jobs. Its value for every (depth, free BU, free CU) is
  tabulated once by a backward DP, so the bound costs one lookup per server,
* a Lagrangian bound that prices the per-server BU/CU capacities with
  multipliers (lam, mu) >= 0:
  ``sum_k lam_k*B_k + mu_k*C_k + sum_j max(0, max_l u_l - lam*b_l - mu*c_l)``.
  Multipliers come from subgradient ascent at the root and are refined for a
  few steps at shallow nodes.

Instances dominated inside their (job, server) group are removed first;
this cannot change the optimum.
"""
from __future__ import annotations

import logging
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import greedy
from .enumeration import InstancePool, dominated_ids
from .model import Problem, Solution

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
TIMEOUT = "timeout_incumbent"

EXHAUSTIVE_CAP = 25
_EPS = 1e-9


@dataclass
class BnBConfig:
    timeout: float = 600.0
    node_limit: Optional[int] = None
    root_iters: int = 300
    node_iters: int = 4
    refine_depth: int = 12
    warm_start: bool = True  # start from the greedy solution as incumbent

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")


class _Budget(Exception):
    pass


class _Search:
    def __init__(self, pool: InstancePool, problem: Problem, cfg: BnBConfig):
        self.cfg = cfg
        a = pool.arrays
        drop = dominated_ids(pool)
        ids_by_job = [[int(i) for i in m if int(i) not in drop] for m in a.job_members]
        ids_by_job = [sorted(ids, key=lambda i: (-a.utility[i], i)) for ids in ids_by_job if ids]
        ids_by_job.sort(key=lambda ids: (-a.utility[ids[0]], a.job[ids[0]]))
        flat = np.array([i for ids in ids_by_job for i in ids], dtype=np.int64)
        self.ids = flat
        self.srv = a.server[flat]
        self.b = a.bu[flat]
        self.c = a.cu[flat]
        self.u = a.utility[flat]
        self.nj = len(ids_by_job)
        self.starts = np.cumsum([0] + [len(ids) for ids in ids_by_job])
        best_u = np.array([a.utility[ids[0]] for ids in ids_by_job])
        self.suffix_max = np.concatenate((np.cumsum(best_u[::-1])[::-1], [0.0]))
        servers = [problem.server(k) for k in a.server_ids]
        self.remB = np.array([s.bandwidth_units for s in servers], dtype=np.int64)
        self.remC = np.array([s.computing_units for s in servers], dtype=np.int64)
        self.table = self._knapsack_table(ids_by_job, a, servers)
        self.lam = np.zeros(len(servers))
        self.mu = np.zeros(len(servers))
        self._srv_idx = np.arange(len(servers))
        self.best = 0.0
        self.best_set: list[int] = []
        self.chosen: list[int] = []
        self.nodes = 0
        self.deadline = time.perf_counter() + cfg.timeout

    def _knapsack_table(self, ids_by_job, a, servers, max_cells=20_000_000):
        """V[k, d, b, c]: best utility of jobs d.. on server k alone within (b, c)."""
        nk = len(servers)
        Bm, Cm = int(self.remB.max()), int(self.remC.max())
        if nk * (self.nj + 1) * (Bm + 1) * (Cm + 1) > max_cells:
            return None
        V = np.zeros((nk, self.nj + 1, Bm + 1, Cm + 1))
        for d in range(self.nj - 1, -1, -1):
            V[:, d] = V[:, d + 1]
            for i in ids_by_job[d]:
                k, b, c = a.server[i], a.bu[i], a.cu[i]
                np.maximum(V[k, d, b:, c:], V[k, d + 1, :Bm + 1 - b, :Cm + 1 - c] + a.utility[i],
                           out=V[k, d, b:, c:])
        return V

    def knapsack_bound(self, d):
        if self.table is None:
            return np.inf
        return float(self.table[self._srv_idx, d, self.remB, self.remC].sum())

    def lagrange(self, d, lam, mu, iters):
        """Best Lagrangian bound for jobs d.. and the multipliers reaching it."""
        s0 = self.starts[d]
        srv, b, c, u = self.srv[s0:], self.b[s0:], self.c[s0:], self.u[s0:]
        fits = (b <= self.remB[srv]) & (c <= self.remC[srv])
        seg = self.starts[d:self.nj] - s0
        simple = float(np.maximum.reduceat(np.where(fits, u, 0.0), seg).sum())
        best_bound, best_lm = simple, (lam, mu)
        theta = 1.0
        for it in range(iters + 1):
            red = np.where(fits, u - lam[srv] * b - mu[srv] * c, 0.0)
            red = np.maximum(red, 0.0)
            per_job = np.maximum.reduceat(red, seg)
            bound = float(lam @ self.remB + mu @ self.remC + per_job.sum())
            if bound < best_bound:
                best_bound, best_lm = bound, (lam, mu)
            if it == iters:
                break
            # subgradient: capacity minus usage of the per-job maximisers
            top = np.maximum.reduceat(np.where(red > 0, red, -1.0), seg)
            pick = (red > 0) & (red == np.repeat(top, np.diff(np.append(seg, len(red)))))
            use_b = np.bincount(srv[pick], weights=b[pick], minlength=len(lam))
            use_c = np.bincount(srv[pick], weights=c[pick], minlength=len(lam))
            gb = self.remB - use_b
            gc = self.remC - use_c
            norm = float(gb @ gb + gc @ gc)
            if norm == 0:
                break
            gap = max(bound - (self.best - self._cur), 1e-6)
            step = theta * gap / norm
            lam = np.maximum(0.0, lam - step * gb)
            mu = np.maximum(0.0, mu - step * gc)
            if it % 20 == 19:
                theta *= 0.7
        return best_bound, best_lm

    def run(self):
        self._cur = 0.0
        if self.nj == 0:
            return
        _, (self.lam, self.mu) = self.lagrange(0, self.lam, self.mu, self.cfg.root_iters)
        limit = sys.getrecursionlimit()
        if limit < self.nj + 200:
            sys.setrecursionlimit(self.nj + 200)
        try:
            self._dfs(0, 0.0, self.lam, self.mu)
        finally:
            sys.setrecursionlimit(limit)

    def _dfs(self, d, cur, lam, mu):
        self.nodes += 1
        if self.nodes & 255 == 0:
            if time.perf_counter() > self.deadline:
                raise _Budget
        if self.cfg.node_limit is not None and self.nodes > self.cfg.node_limit:
            raise _Budget
        if cur > self.best + _EPS:
            self.best = cur
            self.best_set = list(self.chosen)
        if d == self.nj or cur + self.suffix_max[d] <= self.best + _EPS:
            return
        if cur + self.knapsack_bound(d) <= self.best + _EPS:
            return
        self._cur = cur
        iters = self.cfg.node_iters if d < self.cfg.refine_depth else 0
        bound, (lam, mu) = self.lagrange(d, lam, mu, iters)
        if cur + bound <= self.best + _EPS:
            return
        remB, remC = self.remB, self.remC
        for pos in range(self.starts[d], self.starts[d + 1]):
            k, b, c = self.srv[pos], self.b[pos], self.c[pos]
            if remB[k] >= b and remC[k] >= c:
                remB[k] -= b
                remC[k] -= c
                self.chosen.append(int(self.ids[pos]))
                try:
                    self._dfs(d + 1, cur + self.u[pos], lam, mu)
                finally:
                    self.chosen.pop()
                    remB[k] += b
                    remC[k] += c
        self._dfs(d + 1, cur, lam, mu)


def exact_opt(pool: InstancePool, problem: Problem, cfg: Optional[BnBConfig] = None):
    """Optimal solution of the selection ILP by branch-and-bound.

    Returns ``(solution, status)``; status is ``"optimal"`` when the search
    finished, ``"timeout_incumbent"`` when the time or node budget ran out.
    """
    cfg = cfg or BnBConfig()
    if len(pool) == 0:
        return Solution(), OPTIMAL
    search = _Search(pool, problem, cfg)
    if cfg.warm_start:
        warm = greedy(pool, problem)
        search.best, search.best_set = warm.total_utility, list(warm.selected)
    status = OPTIMAL
    try:
        search.run()
    except _Budget:
        status = TIMEOUT
    log.debug("bnb: %d nodes, best %.6g, %s", search.nodes, search.best, status)
    sol = Solution()
    for i in sorted(search.best_set):
        sol.add(pool.instances[i])
    return sol, status


def exhaustive_opt(pool: InstancePool, problem: Problem) -> Solution:
    """Best feasible subset found by enumerating every feasible subset.

    Infeasible partial selections are cut immediately since no superset of
    them is feasible. Refuses pools larger than ``EXHAUSTIVE_CAP``.
    """
    n = len(pool)
    if n > EXHAUSTIVE_CAP:
        raise ValueError(f"exhaustive_opt refuses pools larger than {EXHAUSTIVE_CAP} (got {n})")
    insts = pool.instances
    capB = {k: problem.server(k).bandwidth_units for k in pool.by_server}
    capC = {k: problem.server(k).computing_units for k in pool.by_server}
    useB = dict.fromkeys(capB, 0)
    useC = dict.fromkeys(capC, 0)
    jobs: set[int] = set()
    picked: list[int] = []
    best_u, best_set = 0.0, []

    def rec(i, cur):
        nonlocal best_u, best_set
        if i == n:
            if cur > best_u:
                best_u, best_set = cur, list(picked)
            return
        inst = insts[i]
        k = inst.server_id
        if (inst.job_id not in jobs and useB[k] + inst.bu_alloc <= capB[k]
                and useC[k] + inst.cu_alloc <= capC[k]):
            useB[k] += inst.bu_alloc
            useC[k] += inst.cu_alloc
            jobs.add(inst.job_id)
            picked.append(i)
            rec(i + 1, cur + inst.utility)
            picked.pop()
            jobs.discard(inst.job_id)
            useB[k] -= inst.bu_alloc
            useC[k] -= inst.cu_alloc
        rec(i + 1, cur)

    rec(0, 0.0)
    out = Solution()
    for i in best_set:
        out.add(insts[i])
    return out


def write_lp(pool: InstancePool, problem: Problem, fh) -> None:
    """Write the selection ILP in CPLEX LP format.

    Grammar (one item per line)::

        Maximize
         obj: <u> x<id> + <u> x<id> ...
        Subject To
         bu_<server>: <b> x<id> + ... <= <B>
         cu_<server>: <c> x<id> + ... <= <C>
         job_<job>: x<id> + ... <= 1
        Binary
         x<id>
        End

    Variable ``x<id>`` is the selection flag of instance ``id``.
    """
    def terms(pairs):
        return " + ".join(f"{coef!r} x{i}" if coef != 1 else f"x{i}" for coef, i in pairs)

    insts = pool.instances
    fh.write("\\ instance selection ILP\n")
    fh.write("Maximize\n")
    fh.write(" obj: " + (terms((i.utility, i.instance_id) for i in insts) or "0 x0") + "\n")
    fh.write("Subject To\n")
    for k in sorted(pool.by_server):
        srv = problem.server(k)
        ids = pool.by_server[k]
        fh.write(f" bu_{k}: {terms((insts[i].bu_alloc, i) for i in ids)} <= {srv.bandwidth_units}\n")
        fh.write(f" cu_{k}: {terms((insts[i].cu_alloc, i) for i in ids)} <= {srv.computing_units}\n")
    for j in sorted(pool.by_job):
        fh.write(f" job_{j}: {terms((1, i) for i in pool.by_job[j])} <= 1\n")
    fh.write("Binary\n")
    for inst in insts:
        fh.write(f" x{inst.instance_id}\n")
    fh.write("End\n")
