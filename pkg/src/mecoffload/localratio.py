"""Local-ratio instance-dividing assignment (IDAssign).

The recursion is unrolled into a forward pass, which repeatedly picks a pivot
and subtracts its weight share from every instance that conflicts with it,
and a backward pass that walks the pivots innermost-first and keeps each one
that still fits.

The forward pass only touches the pivot's job and server members each layer,
so a layer costs O(|same job| + |same server|) rather than O(|pool|).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .enumeration import InstancePool
from .model import Problem, Solution, check_add_feasible

# Residual weights at or below this count as non-positive.
ZERO_TOL = 1e-12


@dataclass
class WeightLayer:
    layer_index: int
    weights: dict[int, float]
    pivot: Optional[int] = None
    pivot_weight: float = 0.0
    pivot_light: bool = False
    live_light: int = field(default=0, repr=False)


def pivot_key(inst_id: int, weights, pool: InstancePool):
    inst = pool.instances[inst_id]
    hi = max(inst.norm_bu, inst.norm_cu)
    lo = min(inst.norm_bu, inst.norm_cu)
    return (inst_id not in pool.light_set, hi, lo, -weights[inst_id], inst_id)


def select_pivot(live, weights, pool: InstancePool) -> int:
    """Light instances first, then smallest max(b~, c~).

    Ties go to the smaller min(b~, c~), then the larger weight, then the
    smaller instance id.
    """
    if not live:
        raise ValueError("select_pivot needs a non-empty live set")
    return min(live, key=lambda i: pivot_key(i, weights, pool))


def decompose(weights, pivot: int, live, pool: InstancePool):
    """Split ``weights`` into the pivot-induced part ``w1`` and residual ``w2``."""
    wp = weights[pivot]
    p = pool.instances[pivot]
    w1, w2 = {}, {}
    for i in live:
        inst = pool.instances[i]
        if inst.job_id == p.job_id:
            w1[i] = wp
        elif inst.server_id == p.server_id:
            w1[i] = wp * (inst.norm_bu + inst.norm_cu)
        else:
            w1[i] = 0.0
        w2[i] = weights[i] - w1[i]
    return w1, w2


def _backward(pool: InstancePool, problem: Problem, pivots) -> Solution:
    sol = Solution()
    for p in reversed(pivots):
        inst = pool.instances[p]
        if check_add_feasible(sol, inst, problem):
            sol.add(inst)
    return sol


def idassign(pool: InstancePool, problem: Problem, trace: Optional[list] = None) -> Solution:
    """Run IDAssign on ``pool``.

    If ``trace`` is a list, one ``WeightLayer`` per recursion layer is
    appended (full live weight snapshot, so only use it on small pools).
    """
    n = len(pool)
    if n == 0:
        if trace is not None:
            trace.append(WeightLayer(1, {}))
        return Solution()
    a = pool.arrays
    w = a.utility.copy()
    alive = w > ZERO_TOL
    n_alive = int(alive.sum())
    share = a.norm_bu + a.norm_cu

    # static part of the pivot key; ids break remaining ties
    hi = np.maximum(a.norm_bu, a.norm_cu)
    lo = np.minimum(a.norm_bu, a.norm_cu)
    heavy = ~a.light
    order = np.lexsort((np.arange(n), lo, hi, heavy))
    keys = np.stack([heavy[order], hi[order], lo[order]], axis=1)
    breaks = np.flatnonzero(np.any(keys[1:] != keys[:-1], axis=1)) + 1
    starts = np.concatenate(([0], breaks, [n]))
    g = 0
    n_light_alive = int((alive & a.light).sum())

    pivots = []
    layer = 0
    while n_alive > 0:
        layer += 1
        if layer > n:
            raise AssertionError("IDAssign exceeded |pool| layers")
        while True:
            members = order[starts[g]:starts[g + 1]]
            live_m = members[alive[members]]
            if live_m.size:
                break
            g += 1
        # members are id-sorted inside a group, so argmax picks the smallest id on ties
        p = int(live_m[np.argmax(w[live_m])])
        wp = float(w[p])
        if trace is not None:
            if not a.light[p] and n_light_alive:
                raise AssertionError("heavy pivot chosen while light instances are live")
            live_ids = np.flatnonzero(alive)
            trace.append(WeightLayer(layer, dict(zip(live_ids.tolist(), w[live_ids].tolist())),
                                     pivot=p, pivot_weight=wp, pivot_light=bool(a.light[p]),
                                     live_light=n_light_alive))
        pivots.append(p)

        jm = a.job_members[a.job[p]]
        jm = jm[alive[jm]]
        km = a.server_members[a.server[p]]
        km = km[alive[km] & (a.job[km] != a.job[p])]
        w[jm] -= wp
        w[km] -= wp * share[km]
        for idx in (jm, km):
            dead = idx[w[idx] <= ZERO_TOL]
            if dead.size:
                alive[dead] = False
                n_alive -= dead.size
                n_light_alive -= int(a.light[dead].sum())

    if trace is not None:
        trace.append(WeightLayer(layer + 1, {}))
    return _backward(pool, problem, pivots)


def idassign_reference(pool: InstancePool, problem: Problem) -> Solution:
    """Direct O(|pool|^2) transcription built on ``select_pivot``/``decompose``.

    Slow; kept as an independent cross-check of ``idassign``.
    """
    weights = {inst.instance_id: inst.utility for inst in pool.instances}
    live = set(weights)
    pivots = []
    while True:
        live = {i for i in live if weights[i] > ZERO_TOL}
        if not live:
            break
        p = select_pivot(live, weights, pool)
        _, w2 = decompose(weights, p, live, pool)
        weights = w2
        pivots.append(p)
    return _backward(pool, problem, pivots)
