"""Heuristic baselines: Greedy, Iterative and Game.

Iterative and Game are reconstructions. Only their outline is public, so the
concrete move rules below were picked for determinism and low cost.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .enumeration import InstancePool
from .model import Problem, Solution, check_add_feasible


def efficiency(inst) -> float:
    return inst.utility / (inst.norm_bu * inst.norm_cu)


def greedy_order(pool: InstancePool) -> list[int]:
    return sorted(range(len(pool)), key=lambda i: (
        -efficiency(pool.instances[i]), -pool.instances[i].utility, i))


def greedy(pool: InstancePool, problem: Problem) -> Solution:
    """Add instances in descending u / (b~ * c~) whenever they fit."""
    sol = Solution()
    for i in greedy_order(pool):
        inst = pool.instances[i]
        if check_add_feasible(sol, inst, problem):
            sol.add(inst)
    return sol


class _State:
    """Mutable assignment: at most one instance per job, with usage totals."""

    def __init__(self, pool: InstancePool, problem: Problem):
        a = pool.arrays
        self.pool = pool
        self.a = a
        nk = len(a.server_ids)
        self.capB = np.array([problem.server(k).bandwidth_units for k in a.server_ids])
        self.capC = np.array([problem.server(k).computing_units for k in a.server_ids])
        self.useB = np.zeros(nk, dtype=np.int64)
        self.useC = np.zeros(nk, dtype=np.int64)
        self.cur = np.full(len(a.job_ids), -1, dtype=np.int64)

    def total(self) -> float:
        sel = self.cur[self.cur >= 0]
        return float(self.a.utility[sel].sum())

    def set(self, j: int, i: int) -> None:
        a = self.a
        old = self.cur[j]
        if old >= 0:
            self.useB[a.server[old]] -= a.bu[old]
            self.useC[a.server[old]] -= a.cu[old]
        if i >= 0:
            self.useB[a.server[i]] += a.bu[i]
            self.useC[a.server[i]] += a.cu[i]
        self.cur[j] = i

    def fits_replacing(self, ids: np.ndarray) -> np.ndarray:
        """Whether each instance fits once its own job's current instance is released."""
        a = self.a
        k = a.server[ids]
        old = self.cur[a.job[ids]]
        same = (old >= 0) & (a.server[np.maximum(old, 0)] == k)
        freeB = np.where(same, a.bu[np.maximum(old, 0)], 0)
        freeC = np.where(same, a.cu[np.maximum(old, 0)], 0)
        return ((self.useB[k] - freeB + a.bu[ids] <= self.capB[k])
                & (self.useC[k] - freeC + a.cu[ids] <= self.capC[k]))

    def solution(self) -> Solution:
        sol = Solution()
        for i in sorted(int(i) for i in self.cur if i >= 0):
            sol.add(self.pool.instances[i])
        return sol


def _minimal_instances(pool: InstancePool):
    """For each (job, server, ring): the instance with least b~ + c~
    (ties: higher utility, then smaller id)."""
    out: dict[tuple[int, int, int], int] = {}
    for inst in pool.instances:
        key = (inst.job_id, inst.server_id, inst.ring_index)
        prev = out.get(key)
        if prev is None:
            out[key] = inst.instance_id
            continue
        p = pool.instances[prev]
        if ((inst.norm_bu + inst.norm_cu, -inst.utility, inst.instance_id)
                < (p.norm_bu + p.norm_cu, -p.utility, p.instance_id)):
            out[key] = inst.instance_id
    return out


def iterative(pool: InstancePool, problem: Problem, max_iters: int = 20,
              history: Optional[list] = None) -> Solution:
    """Alternate an offloading phase and a resource-allocation phase.

    Offloading: jobs in descending best-utility order may move to another
    ring (or, if unassigned, enter) keeping their current (b, c); the
    best-utility fitting option is taken if it beats the job's current
    utility. Unassigned jobs use each ring's minimal instance instead.

    Allocation: per server, every assigned job is reset to its minimal
    instance on its ring, then the single upgrade with the largest utility
    gain is applied repeatedly while one fits. The new allocation replaces
    the old one only if the server's utility does not drop.

    Stops after a round that does not strictly improve the total, or after
    ``max_iters`` rounds. ``history`` receives the total after each round.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if len(pool) == 0:
        return Solution()
    a = pool.arrays
    st = _State(pool, problem)
    minimal = _minimal_instances(pool)
    # (job, server, ring, b, c) -> instance id
    by_alloc = {(i.job_id, i.server_id, i.ring_index, i.bu_alloc, i.cu_alloc): i.instance_id
                for i in pool.instances}
    rings_of: dict[int, list[tuple[int, int]]] = {}
    for (j, k, r) in minimal:
        rings_of.setdefault(j, []).append((k, r))
    job_order = sorted(range(len(a.job_ids)),
                       key=lambda j: (-a.utility[a.job_members[j]].max(), a.job_ids[j]))

    best_val, best_sol = 0.0, Solution()
    prev = 0.0
    for _ in range(max_iters):
        # offloading phase
        for j in job_order:
            jid = a.job_ids[j]
            cur = int(st.cur[j])
            cands = []
            for (k, r) in rings_of[jid]:
                if cur >= 0:
                    ci = pool.instances[cur]
                    if (k, r) == (ci.server_id, ci.ring_index):
                        continue
                    i = by_alloc.get((jid, k, r, ci.bu_alloc, ci.cu_alloc))
                else:
                    i = minimal[(jid, k, r)]
                if i is not None:
                    cands.append(i)
            if not cands:
                continue
            cands = np.array(sorted(cands), dtype=np.int64)
            ok = cands[st.fits_replacing(cands)]
            if ok.size == 0:
                continue
            i = int(ok[np.argmax(a.utility[ok])])
            if a.utility[i] > (a.utility[cur] if cur >= 0 else 0.0):
                st.set(j, i)

        # allocation phase
        for kk in range(len(a.server_ids)):
            jobs_here = [j for j in range(len(a.job_ids))
                         if st.cur[j] >= 0 and a.server[st.cur[j]] == kk]
            if not jobs_here:
                continue
            before = {j: int(st.cur[j]) for j in jobs_here}
            old_val = float(sum(a.utility[i] for i in before.values()))
            for j in jobs_here:
                ci = pool.instances[before[j]]
                st.set(j, minimal[(ci.job_id, ci.server_id, ci.ring_index)])
            # a minimal-sum reset can still overflow one dimension
            overflow = st.useB[kk] > st.capB[kk] or st.useC[kk] > st.capC[kk]
            while not overflow:
                best_gain, move = 0.0, None
                for j in jobs_here:
                    ci = pool.instances[int(st.cur[j])]
                    members = a.job_members[j]
                    same_ring = members[(a.server[members] == kk)]
                    same_ring = same_ring[[pool.instances[m].ring_index == ci.ring_index
                                           for m in same_ring]]
                    gain = a.utility[same_ring] - ci.utility
                    cand = same_ring[gain > 0]
                    if cand.size == 0:
                        continue
                    cand = cand[st.fits_replacing(cand)]
                    if cand.size == 0:
                        continue
                    g = a.utility[cand] - ci.utility
                    extra = a.norm_bu[cand] + a.norm_cu[cand]
                    pick = np.lexsort((cand, extra, -g))[0]
                    if g[pick] > best_gain or (g[pick] == best_gain and move is not None
                                               and cand[pick] < move[1]):
                        best_gain, move = float(g[pick]), (j, int(cand[pick]))
                if move is None:
                    break
                st.set(*move)
            new_val = float(sum(a.utility[int(st.cur[j])] for j in jobs_here))
            if overflow or new_val < old_val:
                for j in jobs_here:
                    st.set(j, -1)
                for j in jobs_here:
                    st.set(j, before[j])

        total = st.total()
        if history is not None:
            history.append(total)
        if total > best_val:
            best_val, best_sol = total, st.solution()
        if total <= prev:
            break
        prev = total
    return best_sol


def game(pool: InstancePool, problem: Problem, max_rounds: Optional[int] = None,
         history: Optional[list] = None) -> Solution:
    """Best-response dynamics with one move per round.

    Each round evaluates, for every job, switching to (or taking) any
    instance that fits once the job's current instance is released, and
    applies the single move with the largest positive utility gain (ties:
    smaller instance id). Default ``max_rounds`` is 10 * number of jobs.
    """
    if max_rounds is None:
        max_rounds = 10 * max(1, len(problem.jobs))
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if len(pool) == 0:
        return Solution()
    a = pool.arrays
    st = _State(pool, problem)
    every = np.arange(len(pool), dtype=np.int64)
    for _ in range(max_rounds):
        cur = st.cur[a.job]
        cur_u = np.where(cur >= 0, a.utility[np.maximum(cur, 0)], 0.0)
        gain = a.utility - cur_u
        gain[~st.fits_replacing(every)] = -np.inf
        gain[cur == every] = -np.inf
        i = int(np.argmax(gain))
        if not gain[i] > 0:
            break
        st.set(int(a.job[i]), i)
        if history is not None:
            history.append(st.total())
    return st.solution()
