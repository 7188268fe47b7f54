import math

import pytest
from hypothesis import given, strategies as st

from mecoffload.model import (ChannelEnv, EdgeServer, Job, NetworkRing, PenaltyShape, Problem,
                              ProblemError, RingAccess, Solution, check_add_feasible,
                              compute_offload_rate, compute_offload_time, compute_utility,
                              load_problem, save_problem, validate_solution)
from mecoffload.model import MBIT_PER_MB
from helpers import make_pool, roomy_job, server, small_cases


def _job(theta=0.33, deadline=1.0, gamma=2.0, U=40.0, penalty=PenaltyShape(), power=None):
    return Job(0, theta, deadline, gamma, U, [RingAccess(0, 1, 10.0)], {(0, 1): 0.1},
               penalty, offload_power=power)


# offload rate

def test_direct_rate():
    srv = EdgeServer(0, 20, 2.0, 25, [NetworkRing(1, per_bu_rate=1.65)])
    assert compute_offload_rate(_job(), srv, srv.rings[0], 2) == pytest.approx(3.30)


def test_shannon_rate():
    # p*h/sigma^2 = 1, beta = 2 MHz, bu = 1 -> 2 Mbit/s
    srv = EdgeServer(0, 4, 2.0, 4, [NetworkRing(1, channel_gain=1e-9)])
    env = ChannelEnv(noise_spectral_density=1e-9)
    r = compute_offload_rate(_job(power=1.0), srv, srv.rings[0], 1, env)
    assert r * MBIT_PER_MB == pytest.approx(2.0)
    assert r == pytest.approx(0.25)


def test_shannon_needs_channel_params():
    srv = EdgeServer(0, 4, 2.0, 4, [NetworkRing(1, channel_gain=1e-9)])
    with pytest.raises(ProblemError):
        compute_offload_rate(_job(power=1.0), srv, srv.rings[0], 1, None)
    with pytest.raises(ProblemError):
        compute_offload_rate(_job(), srv, srv.rings[0], 1, ChannelEnv())


@given(st.integers(1, 50), st.floats(0.01, 10), st.floats(1e-12, 1e-6))
def test_rate_linear_in_bu(bu, rate, gain):
    direct = EdgeServer(0, 100, 2.0, 4, [NetworkRing(1, per_bu_rate=rate)])
    shannon = EdgeServer(0, 100, 2.0, 4, [NetworkRing(1, channel_gain=gain)])
    env = ChannelEnv(1e-9, default_offload_power=0.5)
    for srv in (direct, shannon):
        one = compute_offload_rate(_job(), srv, srv.rings[0], bu, env)
        two = compute_offload_rate(_job(), srv, srv.rings[0], 2 * bu, env)
        assert two == pytest.approx(2 * one, rel=1e-12)


# offload time

def test_offload_time():
    assert compute_offload_time(_job(theta=0.33), 3.30) == pytest.approx(0.1)
    assert compute_offload_time(_job(theta=0.63), 1.15) == pytest.approx(0.5478, abs=1e-4)
    with pytest.raises(ValueError):
        compute_offload_time(_job(), 0.0)


# utility

def test_utility_cases():
    j = _job(U=40.0, deadline=1.0, gamma=2.0)
    assert compute_utility(j, 0.8) == 40
    assert compute_utility(j, 1.5) == pytest.approx(20)
    assert compute_utility(j, 2.5) == 0


@given(st.floats(0.1, 5), st.floats(1.0, 3.0), st.floats(0, 20), st.floats(0, 20),
       st.sampled_from(["linear", "step"]))
def test_utility_nonincreasing(deadline, gamma, t1, t2, kind):
    pen = PenaltyShape() if kind == "linear" else PenaltyShape("step", ((0.3, 0.8), (1.0, 0.1)))
    j = _job(deadline=deadline, gamma=gamma, penalty=pen)
    lo, hi = sorted((t1, t2))
    assert compute_utility(j, hi) <= compute_utility(j, lo)
    assert 0 <= compute_utility(j, hi) <= j.full_utility


@given(st.floats(0.1, 5), st.floats(0, 20))
def test_hard_deadline_two_valued(deadline, t):
    j = _job(deadline=deadline, gamma=1.0)
    assert compute_utility(j, t) in (0.0, j.full_utility)


def test_step_penalty():
    j = _job(U=10, deadline=1.0, gamma=2.0, penalty=PenaltyShape("step", ((0.5, 0.6), (1.0, 0.2))))
    assert compute_utility(j, 1.25) == pytest.approx(6.0)
    assert compute_utility(j, 1.9) == pytest.approx(2.0)


def test_model_validation():
    with pytest.raises(ProblemError):
        NetworkRing(1)
    with pytest.raises(ProblemError):
        EdgeServer(0, 0, 2.0, 1, [NetworkRing(1, per_bu_rate=1.0)])
    with pytest.raises(ProblemError):
        _job(gamma=0.5)
    with pytest.raises(ProblemError):
        # processing time must not grow with more units
        Job(0, 0.1, 1.0, 1.0, 1.0, [RingAccess(0, 1, 1.0)], {(0, 1): 0.1, (0, 2): 0.2})
    with pytest.raises(ProblemError):
        Problem([server(0), server(0)], [])


# feasibility check

def test_check_add_feasible():
    srv = EdgeServer(0, 20, 2.0, 25, [NetworkRing(1, per_bu_rate=1.0)])
    problem, pool = make_pool([srv], [(0, 0, 19, 1, 1.0), (1, 0, 2, 1, 1.0), (1, 0, 1, 1, 1.0)])
    empty = Solution()
    assert check_add_feasible(empty, pool[1], problem)
    sol = Solution()
    sol.add(pool[0])
    assert not check_add_feasible(sol, pool[1], problem)  # 19 + 2 > 20
    sol2 = Solution()
    sol2.add(pool[2])
    assert not check_add_feasible(sol2, pool[1], problem)  # job 1 already in


def test_check_add_unknown_ids():
    problem, pool = make_pool([server()], [(0, 0, 1, 1, 1.0)])
    other = Problem([server(5)], [roomy_job(0, [server(5)])])
    with pytest.raises(ProblemError):
        check_add_feasible(Solution(), pool[0], other)


def test_validate_flags_violations():
    problem, pool = make_pool([server(B=2, C=2)], [(0, 0, 2, 1, 3.0), (1, 0, 1, 1, 2.0)])
    bad = Solution()
    bad.add(pool[0])
    bad.add(pool[1])
    assert any("BUs" in e for e in validate_solution(bad, pool, problem))
    bad.total_utility += 1
    assert any("total_utility" in e for e in validate_solution(bad, pool, problem))


# serialization

@pytest.mark.parametrize("case", range(5))
def test_problem_json_roundtrip(tmp_path, case):
    problem, _ = small_cases(case, 1, max_pool=10_000)[0]
    path = tmp_path / "p.json"
    save_problem(problem, path)
    back = load_problem(path)
    assert back.to_dict() == problem.to_dict()
    assert back.servers == problem.servers and back.jobs == problem.jobs


def test_roundtrip_shannon(tmp_path):
    srv = EdgeServer(0, 4, 2.0, 4, [NetworkRing(1, channel_gain=1e-9)])
    p = Problem([srv], [_job(power=1.0, penalty=PenaltyShape("step", ((1.0, 0.5),)))],
                ChannelEnv(1e-9, 0.2))
    save_problem(p, tmp_path / "p.json")
    q = load_problem(tmp_path / "p.json")
    assert q.channel_env == p.channel_env and q.jobs == p.jobs
    assert math.isclose(q.jobs[0].processing_time(0, 1), 0.1)
