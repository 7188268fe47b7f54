import numpy as np
import pytest
from hypothesis import given, strategies as st

from mecoffload.workload import (AppProfile, WorkloadConfig, WorkloadError, load_processing_profile,
                                 load_trace, randfixedsum, ring_dwell_time, round_half_up,
                                 synth_processing_table, synthesize_problem)


def test_randfixedsum_examples():
    rng = np.random.default_rng(0)
    assert randfixedsum(1, 0.5, 0, 1, rng).tolist() == [0.5]
    x = randfixedsum(3, 1.5, 0.4, 0.6, rng)
    assert x.sum() == pytest.approx(1.5) and ((x >= 0.4) & (x <= 0.6)).all()
    assert randfixedsum(2, 1.4, 0.1, 0.7, rng) == pytest.approx([0.7, 0.7])
    with pytest.raises(ValueError):
        randfixedsum(3, 2.0, 0, 0.5, rng)


@given(st.integers(1, 12), st.floats(-5, 5), st.floats(0, 5), st.floats(0, 1),
       st.integers(0, 2**32 - 1))
def test_randfixedsum_constraints(n, lo, span, frac, seed):
    hi = lo + span
    total = n * lo + frac * n * span
    x = randfixedsum(n, total, lo, hi, np.random.default_rng(seed))
    assert x.shape == (n,)
    assert ((x >= lo) & (x <= hi)).all()
    assert x.sum() == pytest.approx(total, rel=1e-9, abs=1e-9)


def _ks(a, b):
    a, b = np.sort(a), np.sort(b)
    grid = np.concatenate((a, b))
    return np.abs(np.searchsorted(a, grid, "right") / len(a)
                  - np.searchsorted(b, grid, "right") / len(b)).max()


def test_randfixedsum_matches_rejection_sampler():
    # uniform on {x in [0,1]^3 : sum = 1.2}: draw (x1, x2) uniformly, keep if x3 fits
    rng = np.random.default_rng(1)
    m = 4000
    xy = rng.random((4 * m, 2))
    z = 1.2 - xy.sum(1)
    ref = xy[(z >= 0) & (z <= 1)][:m, 0]
    got = np.array([randfixedsum(3, 1.2, 0, 1, rng)[0] for _ in range(m)])
    # two-sample KS critical value at alpha = 0.001
    assert _ks(ref, got) < 1.95 * np.sqrt(2 / m)


def test_processing_table():
    tab = synth_processing_table(AppProfile("x", 1.0, 1.0), 1.0, 4)
    assert tab[4] == pytest.approx(0.25)
    tab = synth_processing_table(AppProfile("x", 0.6, 0.9), 1.25, 5)
    assert tab[1] == 0.6 * 1.25
    assert all(tab[c + 1] <= tab[c] for c in range(1, 5))


def test_dwell_time():
    assert ring_dwell_time((0, 0), (10, 0), (0, 0), 0, 100, 60) == pytest.approx(10)
    assert ring_dwell_time((0, 0), (0, 0), (0, 0), 0, 100, 60) == 60
    # inside the outer ring heading inward: leaves through the inner circle
    assert ring_dwell_time((150, 0), (-10, 0), (0, 0), 100, 200, 60) == pytest.approx(5)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]


def test_trace_parse(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("vehicle_id,timestamp_s,x_m,y_m\nv1,0,0,0\nv1,10,100,0\nv2,5,3,4\n")
    tr = load_trace(p)
    assert tr.vehicles_at(5) == ["v1", "v2"] and tr.vehicles_at(7) == ["v1"]
    pos, vel = tr.state("v1", 5)
    assert pos == pytest.approx([50, 0]) and vel == pytest.approx([10, 0])
    assert tr.time_range == (0, 10)
    p.write_text("vehicle_id,timestamp_s,x_m,y_m\nv1,0,0,0\nv1,abc,1,1\n")
    with pytest.raises(WorkloadError, match=":3:"):
        load_trace(p)
    p.write_text("id,t,x,y\n")
    with pytest.raises(WorkloadError, match=":1:"):
        load_trace(p)


def test_profile_csv(tmp_path):
    p = tmp_path / "prof.csv"
    p.write_text("app_id,gpu_id,computing_units,seconds\nr50,g1,1,0.4\nr50,g1,2,0.22\n")
    assert load_processing_profile(p) == {("r50", "g1"): {1: 0.4, 2: 0.22}}
    p.write_text("app_id,gpu_id,computing_units,seconds\nr50,g1,0,0.4\n")
    with pytest.raises(WorkloadError, match=":2:"):
        load_processing_profile(p)


def _small(**kw):
    base = dict(n_servers=5, bu_per_server=(8,), cu_per_server=8, jobset_size=30, seed=2)
    base.update(kw)
    return WorkloadConfig(**base)


def test_synthesis_shape():
    cfg = WorkloadConfig(jobset_size=200, seed=1)
    problem, js = synthesize_problem(cfg)
    assert len(problem.jobs) == 200
    assert all(job.accessible_rings for job in problem.jobs)
    assert cfg.ru_b_range[0] <= js.ru_b <= cfg.ru_b_range[1]
    B = min(s.bandwidth_units for s in problem.servers)
    assert js.bu_shares.sum() == pytest.approx(js.ru_b * sum(s.bandwidth_units for s in problem.servers))
    assert js.bu_shares.max() <= B


def test_hard_deadlines_forced():
    problem, _ = synthesize_problem(_small(hard_deadline_fraction=1.0))
    assert all(j.tolerance_factor == 1.0 for j in problem.jobs)


def test_synthesis_deterministic():
    a, _ = synthesize_problem(_small())
    b, _ = synthesize_problem(_small())
    assert a.to_dict() == b.to_dict()


def test_config_rejects_unknown_keys():
    with pytest.raises(WorkloadError):
        WorkloadConfig.from_dict({"n_server": 3})
    with pytest.raises(WorkloadError):
        WorkloadConfig(gamma_range=(0.5, 1.0))


def test_trace_driven_synthesis(tmp_path):
    rows = ["vehicle_id,timestamp_s,x_m,y_m"]
    rng = np.random.default_rng(0)
    for v in range(40):
        x, y = rng.uniform(0, 1000, 2)
        rows += [f"v{v},0,{x},{y}", f"v{v},100,{x + 500},{y}"]
    p = tmp_path / "trace.csv"
    p.write_text("\n".join(rows) + "\n")
    problem, _ = synthesize_problem(_small(trace_path=str(p), n_servers=10, jobset_size=10))
    assert len(problem.jobs) == 10
