"""Domain types for the MEC topology, jobs, assignment instances and solutions.

Times are seconds, data sizes are megabytes, rates are MB/s. Resource
quantities (bandwidth units, computing units) are exact integers.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

# beta (MHz) * log2(1 + SNR) gives Mbit/s; divide by this to get MB/s.
MBIT_PER_MB = 8.0


class ProblemError(ValueError):
    """Malformed problem definition or structurally invalid request."""


@dataclass(frozen=True)
class NetworkRing:
    ring_index: int
    channel_gain: Optional[float] = None
    per_bu_rate: Optional[float] = None
    inner_radius: Optional[float] = None
    outer_radius: Optional[float] = None

    def __post_init__(self):
        if self.ring_index < 1:
            raise ProblemError(f"ring_index must be >= 1, got {self.ring_index}")
        if (self.channel_gain is None) == (self.per_bu_rate is None):
            raise ProblemError(
                f"ring {self.ring_index}: exactly one of channel_gain/per_bu_rate is required")
        if self.per_bu_rate is not None and not self.per_bu_rate > 0:
            raise ProblemError(f"ring {self.ring_index}: per_bu_rate must be > 0")
        if self.channel_gain is not None and not self.channel_gain > 0:
            raise ProblemError(f"ring {self.ring_index}: channel_gain must be > 0")
        if (self.inner_radius is not None and self.outer_radius is not None
                and not self.inner_radius < self.outer_radius):
            raise ProblemError(f"ring {self.ring_index}: inner_radius must be < outer_radius")

    @property
    def shannon_mode(self) -> bool:
        return self.channel_gain is not None


@dataclass(frozen=True)
class EdgeServer:
    server_id: int
    bandwidth_units: int
    bu_size_mhz: float
    computing_units: int
    rings: tuple[NetworkRing, ...]

    def __post_init__(self):
        object.__setattr__(self, "rings", tuple(self.rings))
        if self.bandwidth_units < 1 or self.computing_units < 1:
            raise ProblemError(f"server {self.server_id}: capacities must be >= 1")
        if not self.bu_size_mhz > 0:
            raise ProblemError(f"server {self.server_id}: bu_size_mhz must be > 0")
        if not self.rings:
            raise ProblemError(f"server {self.server_id}: needs at least one ring")
        idx = [r.ring_index for r in self.rings]
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ProblemError(f"server {self.server_id}: ring indices must be distinct and ascending")

    def ring(self, ring_index: int) -> NetworkRing:
        for r in self.rings:
            if r.ring_index == ring_index:
                return r
        raise ProblemError(f"server {self.server_id} has no ring {ring_index}")


@dataclass(frozen=True)
class ChannelEnv:
    noise_spectral_density: float = 1e-9
    default_offload_power: Optional[float] = None

    def __post_init__(self):
        if not self.noise_spectral_density > 0:
            raise ProblemError("noise_spectral_density must be > 0")


@dataclass(frozen=True)
class RingAccess:
    server_id: int
    ring_index: int
    dwell_time: float

    def __post_init__(self):
        if not self.dwell_time > 0:
            raise ProblemError(f"dwell_time must be > 0, got {self.dwell_time}")


@dataclass(frozen=True)
class PenaltyShape:
    """Utility fraction kept after the deadline is missed.

    For ``step``, each level ``(s, v)`` keeps fraction ``v`` while the
    overrun fraction ``(t - deadline) / (gamma*deadline - deadline)`` is at
    most ``s``. Levels are ordered by ``s``; ``v`` must not increase.
    """

    kind: str = "linear_decreasing"
    step_levels: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "step_levels", tuple(tuple(lv) for lv in self.step_levels))
        if self.kind not in ("linear_decreasing", "step"):
            raise ProblemError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "step":
            if not self.step_levels:
                raise ProblemError("step penalty needs step_levels")
            prev_s, prev_v = 0.0, 1.0
            for s, v in self.step_levels:
                if not (prev_s < s <= 1.0) or not (0.0 <= v <= prev_v):
                    raise ProblemError(f"bad step_levels {self.step_levels}")
                prev_s, prev_v = s, v

    def fraction(self, t: float, deadline: float, gamma: float) -> float:
        # only meaningful on (deadline, gamma*deadline]
        span = gamma * deadline - deadline
        if span <= 0:
            return 0.0
        if self.kind == "linear_decreasing":
            return max(0.0, min(1.0, (gamma * deadline - t) / span))
        over = (t - deadline) / span
        for s, v in self.step_levels:
            if over <= s:
                return v
        return 0.0


@dataclass(frozen=True)
class Job:
    job_id: int
    input_size_mb: float
    deadline: float
    tolerance_factor: float
    full_utility: float
    accessible_rings: tuple[RingAccess, ...]
    processing_times: dict  # (server_id, c) -> seconds
    penalty: PenaltyShape = PenaltyShape()
    offload_power: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "accessible_rings", tuple(self.accessible_rings))
        if not (self.input_size_mb > 0 and self.deadline > 0 and self.full_utility > 0):
            raise ProblemError(f"job {self.job_id}: input size, deadline and utility must be > 0")
        if not self.tolerance_factor >= 1:
            raise ProblemError(f"job {self.job_id}: tolerance_factor must be >= 1")
        servers = [a.server_id for a in self.accessible_rings]
        if len(servers) != len(set(servers)):
            raise ProblemError(f"job {self.job_id}: at most one accessible ring per server")
        per_server: dict[int, list[tuple[int, float]]] = {}
        for (k, c), t in self.processing_times.items():
            per_server.setdefault(k, []).append((c, t))
        for k, entries in per_server.items():
            entries.sort()
            if any(t2 > t1 for (_, t1), (_, t2) in zip(entries, entries[1:])):
                raise ProblemError(
                    f"job {self.job_id}: processing time increases with computing units on server {k}")

    def processing_time(self, server_id: int, c: int) -> float:
        try:
            return self.processing_times[(server_id, c)]
        except KeyError:
            raise ProblemError(
                f"job {self.job_id}: no processing time for server {server_id} with {c} units") from None


@dataclass(frozen=True, slots=True)
class AssignmentInstance:
    instance_id: int
    job_id: int
    server_id: int
    ring_index: int
    bu_alloc: int
    cu_alloc: int
    offload_time: float
    processing_time: float
    completion_time: float
    utility: float
    norm_bu: float
    norm_cu: float


@dataclass
class Problem:
    servers: list[EdgeServer]
    jobs: list[Job]
    channel_env: Optional[ChannelEnv] = None
    _servers_by_id: dict = field(init=False, repr=False, compare=False)
    _jobs_by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._servers_by_id = {s.server_id: s for s in self.servers}
        self._jobs_by_id = {j.job_id: j for j in self.jobs}
        if len(self._servers_by_id) != len(self.servers):
            raise ProblemError("duplicate server_id")
        if len(self._jobs_by_id) != len(self.jobs):
            raise ProblemError("duplicate job_id")
        for job in self.jobs:
            if len(job.accessible_rings) > len(self.servers):
                raise ProblemError(f"job {job.job_id}: more accessible rings than servers")
            for acc in job.accessible_rings:
                self.server(acc.server_id).ring(acc.ring_index)

    def server(self, server_id: int) -> EdgeServer:
        try:
            return self._servers_by_id[server_id]
        except KeyError:
            raise ProblemError(f"unknown server {server_id}") from None

    def job(self, job_id: int) -> Job:
        try:
            return self._jobs_by_id[job_id]
        except KeyError:
            raise ProblemError(f"unknown job {job_id}") from None

    # JSON document: top-level keys servers, jobs, channel_env
    def to_dict(self) -> dict:
        def ring_d(r):
            return {k: v for k, v in (
                ("ring_index", r.ring_index), ("channel_gain", r.channel_gain),
                ("per_bu_rate", r.per_bu_rate), ("inner_radius", r.inner_radius),
                ("outer_radius", r.outer_radius)) if v is not None}

        def job_d(j):
            pt: dict[str, dict[str, float]] = {}
            for (k, c), t in sorted(j.processing_times.items()):
                pt.setdefault(str(k), {})[str(c)] = t
            d = {
                "job_id": j.job_id,
                "input_size_mb": j.input_size_mb,
                "deadline": j.deadline,
                "tolerance_factor": j.tolerance_factor,
                "full_utility": j.full_utility,
                "accessible_rings": [
                    {"server_id": a.server_id, "ring_index": a.ring_index,
                     "dwell_time": a.dwell_time} for a in j.accessible_rings],
                "processing_times": pt,
                "penalty": {"kind": j.penalty.kind,
                            "step_levels": [list(lv) for lv in j.penalty.step_levels]},
            }
            if j.offload_power is not None:
                d["offload_power"] = j.offload_power
            return d

        return {
            "servers": [
                {"server_id": s.server_id, "bandwidth_units": s.bandwidth_units,
                 "bu_size_mhz": s.bu_size_mhz, "computing_units": s.computing_units,
                 "rings": [ring_d(r) for r in s.rings]} for s in self.servers],
            "jobs": [job_d(j) for j in self.jobs],
            "channel_env": None if self.channel_env is None else {
                "noise_spectral_density": self.channel_env.noise_spectral_density,
                "default_offload_power": self.channel_env.default_offload_power},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Problem":
        try:
            servers = [
                EdgeServer(
                    server_id=s["server_id"], bandwidth_units=s["bandwidth_units"],
                    bu_size_mhz=s["bu_size_mhz"], computing_units=s["computing_units"],
                    rings=[NetworkRing(**r) for r in s["rings"]])
                for s in doc["servers"]]
            jobs = []
            for j in doc["jobs"]:
                pt = {(int(k), int(c)): float(t)
                      for k, row in j["processing_times"].items() for c, t in row.items()}
                pen = j.get("penalty") or {}
                jobs.append(Job(
                    job_id=j["job_id"], input_size_mb=j["input_size_mb"], deadline=j["deadline"],
                    tolerance_factor=j.get("tolerance_factor", 1.0),
                    full_utility=j["full_utility"],
                    accessible_rings=[RingAccess(**a) for a in j["accessible_rings"]],
                    processing_times=pt,
                    penalty=PenaltyShape(pen.get("kind", "linear_decreasing"),
                                         pen.get("step_levels", ())),
                    offload_power=j.get("offload_power")))
            env = doc.get("channel_env")
            channel_env = None if env is None else ChannelEnv(**env)
        except (KeyError, TypeError) as exc:
            raise ProblemError(f"malformed problem document: {exc}") from exc
        return cls(servers, jobs, channel_env)


def load_problem(path) -> Problem:
    with open(path) as fh:
        return Problem.from_dict(json.load(fh))


def save_problem(problem: Problem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem.to_dict(), fh, indent=1)


def compute_offload_rate(job: Job, server: EdgeServer, ring: NetworkRing, bu: int,
                         channel_env: Optional[ChannelEnv] = None) -> float:
    """Uplink rate in MB/s for ``bu`` bandwidth units on ``ring``."""
    if bu < 1:
        raise ValueError(f"bu must be >= 1, got {bu}")
    if ring not in server.rings:
        raise ProblemError(f"ring {ring.ring_index} does not belong to server {server.server_id}")
    if not ring.shannon_mode:
        return bu * ring.per_bu_rate
    if channel_env is None:
        raise ProblemError("Shannon-mode ring requires a channel_env")
    power = job.offload_power if job.offload_power is not None else channel_env.default_offload_power
    if power is None:
        raise ProblemError(f"job {job.job_id}: no offload power and no default configured")
    snr = power * ring.channel_gain / channel_env.noise_spectral_density
    return bu * server.bu_size_mhz * math.log2(1.0 + snr) / MBIT_PER_MB


def compute_offload_time(job: Job, rate: float) -> float:
    if not rate > 0:
        raise ValueError(f"offload rate must be > 0, got {rate}")
    return job.input_size_mb / rate


def compute_utility(job: Job, completion_time: float) -> float:
    if completion_time <= job.deadline:
        return job.full_utility
    if completion_time <= job.tolerance_factor * job.deadline:
        return job.full_utility * job.penalty.fraction(
            completion_time, job.deadline, job.tolerance_factor)
    return 0.0


@dataclass
class Solution:
    """Selected instances (``x = 1``) plus per-server resource bookkeeping."""

    selected: list[int] = field(default_factory=list)
    total_utility: float = 0.0
    per_server_bu_used: dict[int, int] = field(default_factory=dict)
    per_server_cu_used: dict[int, int] = field(default_factory=dict)
    jobs: set[int] = field(default_factory=set)

    def add(self, inst: AssignmentInstance) -> None:
        self.selected.append(inst.instance_id)
        self.jobs.add(inst.job_id)
        self.total_utility += inst.utility
        k = inst.server_id
        self.per_server_bu_used[k] = self.per_server_bu_used.get(k, 0) + inst.bu_alloc
        self.per_server_cu_used[k] = self.per_server_cu_used.get(k, 0) + inst.cu_alloc

    def __len__(self):
        return len(self.selected)


def check_add_feasible(solution: Solution, inst: AssignmentInstance, problem: Problem) -> bool:
    server = problem.server(inst.server_id)
    problem.job(inst.job_id)
    if inst.job_id in solution.jobs:
        return False
    k = inst.server_id
    return (solution.per_server_bu_used.get(k, 0) + inst.bu_alloc <= server.bandwidth_units
            and solution.per_server_cu_used.get(k, 0) + inst.cu_alloc <= server.computing_units)


def build_solution(instances, problem: Problem) -> Solution:
    """Solution from a list of instances, added in order without checks."""
    sol = Solution()
    for inst in instances:
        sol.add(inst)
    return sol


def validate_solution(solution: Solution, pool, problem: Problem, rel_tol: float = 1e-9) -> list[str]:
    """Re-check every solution invariant from scratch; returns the violations."""
    errors = []
    ids = list(solution.selected)
    if len(ids) != len(set(ids)):
        errors.append("duplicate instance ids")
    insts = [pool.instances[i] for i in ids]
    seen_jobs: set[int] = set()
    bu: dict[int, int] = {}
    cu: dict[int, int] = {}
    for inst in insts:
        if inst.job_id in seen_jobs:
            errors.append(f"job {inst.job_id} selected more than once")
        seen_jobs.add(inst.job_id)
        bu[inst.server_id] = bu.get(inst.server_id, 0) + inst.bu_alloc
        cu[inst.server_id] = cu.get(inst.server_id, 0) + inst.cu_alloc
    for k, used in bu.items():
        if used > problem.server(k).bandwidth_units:
            errors.append(f"server {k}: {used} BUs used > {problem.server(k).bandwidth_units}")
    for k, used in cu.items():
        if used > problem.server(k).computing_units:
            errors.append(f"server {k}: {used} CUs used > {problem.server(k).computing_units}")
    total = math.fsum(inst.utility for inst in insts)
    if not math.isclose(total, solution.total_utility, rel_tol=rel_tol, abs_tol=1e-9):
        errors.append(f"total_utility {solution.total_utility} != recomputed {total}")
    if {k: v for k, v in solution.per_server_bu_used.items() if v} != bu:
        errors.append("per_server_bu_used bookkeeping mismatch")
    if {k: v for k, v in solution.per_server_cu_used.items() if v} != cu:
        errors.append("per_server_cu_used bookkeeping mismatch")
    return errors
