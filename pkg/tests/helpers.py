"""Small hand-built problems and pools shared by the tests."""
import numpy as np

from mecoffload.enumeration import build_pool, enumerate_instances
from mecoffload.model import AssignmentInstance, EdgeServer, Job, NetworkRing, Problem, RingAccess
from mecoffload.workload import random_problem


def server(k=0, B=2, C=2, rate=1.0):
    return EdgeServer(k, B, 2.0, C, [NetworkRing(1, per_bu_rate=rate)])


def roomy_job(j, servers, **kw):
    """A job that reaches every server with generous timing."""
    args = dict(input_size_mb=0.1, deadline=100.0, tolerance_factor=1.0, full_utility=1.0)
    args.update(kw)
    pt = {(s.server_id, c): 0.01 for s in servers for c in range(1, s.computing_units + 1)}
    acc = [RingAccess(s.server_id, 1, 1e6) for s in servers]
    return Job(j, accessible_rings=acc, processing_times=pt, **args)


def make_pool(servers, specs):
    """Pool from explicit (job, server, b, c, utility) tuples, bypassing enumeration."""
    jobs = sorted({s[0] for s in specs})
    problem = Problem(list(servers), [roomy_job(j, servers) for j in jobs])
    insts = []
    for i, (j, k, b, c, u) in enumerate(specs):
        srv = problem.server(k)
        insts.append(AssignmentInstance(i, j, k, 1, b, c, 0.0, 0.0, 0.0, float(u),
                                        b / srv.bandwidth_units, c / srv.computing_units))
    return problem, build_pool(insts, problem)


def small_cases(seed, count, max_pool=25, min_pool=1):
    """(problem, pool) pairs from random_problem with min_pool <= |pool| <= max_pool."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = random_problem(rng)
        pool = enumerate_instances(p)
        if min_pool <= len(pool) <= max_pool:
            out.append((p, pool))
    return out
