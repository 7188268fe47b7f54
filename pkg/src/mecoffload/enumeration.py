"""Enumeration of feasible assignment instances and the indexed instance pool."""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from types import SimpleNamespace

import numpy as np

from .model import (AssignmentInstance, Problem, compute_offload_rate,
                    compute_offload_time, compute_utility)


@dataclass(frozen=True)
class InstancePool:
    instances: tuple[AssignmentInstance, ...]
    by_job: dict[int, list[int]]
    by_server: dict[int, list[int]]
    light_set: frozenset[int]
    heavy_set: frozenset[int]

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, instance_id: int) -> AssignmentInstance:
        return self.instances[instance_id]

    def same_job(self, instance_id: int) -> list[int]:
        return self.by_job[self.instances[instance_id].job_id]

    def same_server(self, instance_id: int) -> list[int]:
        return self.by_server[self.instances[instance_id].server_id]

    @cached_property
    def arrays(self) -> SimpleNamespace:
        """Columnar numpy views used by the vectorised solvers.

        ``job``/``server`` are dense indices into ``job_ids``/``server_ids``;
        ``job_members[j]`` and ``server_members[k]`` list instance ids.
        """
        insts = self.instances
        job_ids = sorted(self.by_job)
        server_ids = sorted(self.by_server)
        jpos = {j: i for i, j in enumerate(job_ids)}
        kpos = {k: i for i, k in enumerate(server_ids)}
        return SimpleNamespace(
            job=np.array([jpos[i.job_id] for i in insts], dtype=np.int64),
            server=np.array([kpos[i.server_id] for i in insts], dtype=np.int64),
            bu=np.array([i.bu_alloc for i in insts], dtype=np.int64),
            cu=np.array([i.cu_alloc for i in insts], dtype=np.int64),
            norm_bu=np.array([i.norm_bu for i in insts], dtype=float),
            norm_cu=np.array([i.norm_cu for i in insts], dtype=float),
            utility=np.array([i.utility for i in insts], dtype=float),
            light=np.array([i.instance_id in self.light_set for i in insts], dtype=bool),
            job_ids=job_ids,
            server_ids=server_ids,
            job_members=[np.array(self.by_job[j], dtype=np.int64) for j in job_ids],
            server_members=[np.array(self.by_server[k], dtype=np.int64) for k in server_ids],
        )


def is_light(bu: int, cu: int, bu_cap: int, cu_cap: int) -> bool:
    # exact integer form of b/B <= 1/2 and c/C <= 1/2
    return 2 * bu <= bu_cap and 2 * cu <= cu_cap


def build_pool(instances, problem: Problem) -> InstancePool:
    """Index a list of instances; ids are reassigned to list positions."""
    insts = tuple(replace(inst, instance_id=i) for i, inst in enumerate(instances))
    by_job: dict[int, list[int]] = {}
    by_server: dict[int, list[int]] = {}
    light, heavy = set(), set()
    for inst in insts:
        by_job.setdefault(inst.job_id, []).append(inst.instance_id)
        by_server.setdefault(inst.server_id, []).append(inst.instance_id)
        srv = problem.server(inst.server_id)
        if is_light(inst.bu_alloc, inst.cu_alloc, srv.bandwidth_units, srv.computing_units):
            light.add(inst.instance_id)
        else:
            heavy.add(inst.instance_id)
    return InstancePool(insts, by_job, by_server, frozenset(light), frozenset(heavy))


def enumerate_instances(problem: Problem) -> InstancePool:
    """All feasible instances, ordered by (job, server, ring, b, c)."""
    env = problem.channel_env
    found = []
    for job in sorted(problem.jobs, key=lambda j: j.job_id):
        limit = job.tolerance_factor * job.deadline
        for acc in sorted(job.accessible_rings, key=lambda a: (a.server_id, a.ring_index)):
            srv = problem.server(acc.server_id)
            ring = srv.ring(acc.ring_index)
            horizon = min(limit, acc.dwell_time)
            t_proc = [job.processing_time(srv.server_id, c)
                      for c in range(1, srv.computing_units + 1)]
            for b in range(1, srv.bandwidth_units + 1):
                t_off = compute_offload_time(job, compute_offload_rate(job, srv, ring, b, env))
                if t_off + t_proc[-1] > horizon:
                    continue
                for c in range(1, srv.computing_units + 1):
                    t = t_off + t_proc[c - 1]
                    if t > horizon:
                        continue
                    u = compute_utility(job, t)
                    if u <= 0:
                        continue
                    found.append(AssignmentInstance(
                        instance_id=len(found), job_id=job.job_id, server_id=srv.server_id,
                        ring_index=ring.ring_index, bu_alloc=b, cu_alloc=c,
                        offload_time=t_off, processing_time=t_proc[c - 1], completion_time=t,
                        utility=u, norm_bu=b / srv.bandwidth_units,
                        norm_cu=c / srv.computing_units))
    return build_pool(found, problem)


def dominated_ids(pool: InstancePool) -> set[int]:
    """Instances beaten by a same-job, same-server instance using no more of
    either resource and giving at least the same utility."""
    groups: dict[tuple[int, int], list[AssignmentInstance]] = {}
    for inst in pool.instances:
        groups.setdefault((inst.job_id, inst.server_id), []).append(inst)
    out = set()
    for members in groups.values():
        if len(members) < 2:
            continue
        bmax = max(i.bu_alloc for i in members)
        cmax = max(i.cu_alloc for i in members)
        best = np.full((bmax + 1, cmax + 1), -np.inf)
        cell: dict[tuple[int, int], AssignmentInstance] = {}
        for inst in members:
            key = (inst.bu_alloc, inst.cu_alloc)
            prev = cell.get(key)
            # same (b, c) on one server only happens with duplicate rings; keep the better
            if prev is None or inst.utility > prev.utility:
                if prev is not None:
                    out.add(prev.instance_id)
                cell[key] = inst
            else:
                out.add(inst.instance_id)
            best[key] = max(best[key], inst.utility)
        # prefix[b, c] = best utility using at most (b, c)
        prefix = np.maximum.accumulate(np.maximum.accumulate(best, axis=0), axis=1)
        for (b, c), inst in cell.items():
            if max(prefix[b - 1, c], prefix[b, c - 1]) >= inst.utility:
                out.add(inst.instance_id)
    return out


def dominance_prune(pool: InstancePool) -> InstancePool:
    """Remove dominated instances. Surviving instances are renumbered."""
    drop = dominated_ids(pool)
    if not drop:
        return pool
    return subset_pool(pool, [i.instance_id for i in pool.instances if i.instance_id not in drop])


def subset_pool(pool: InstancePool, keep) -> InstancePool:
    """Pool restricted to ``keep`` (in that order), ids renumbered from 0."""
    insts, by_job, by_server, light, heavy = [], {}, {}, set(), set()
    for new_id, old_id in enumerate(keep):
        inst = replace(pool.instances[old_id], instance_id=new_id)
        insts.append(inst)
        by_job.setdefault(inst.job_id, []).append(new_id)
        by_server.setdefault(inst.server_id, []).append(new_id)
        (light if old_id in pool.light_set else heavy).add(new_id)
    return InstancePool(tuple(insts), by_job, by_server, frozenset(light), frozenset(heavy))
