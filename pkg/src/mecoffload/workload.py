"""Synthetic MEC topologies and jobsets, mobility sources and profile files."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Protocol

import numpy as np

from .model import EdgeServer, Job, NetworkRing, PenaltyShape, Problem, RingAccess


class WorkloadError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Randfixedsum


def randfixedsum(n: int, total: float, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform random vector on {x : sum(x) = total, lo <= x_i <= hi}.

    Stafford's construction: the constrained simplex slice of the unit cube
    is split into simplices whose volumes are tabulated, one is drawn with
    probability proportional to volume, a point is drawn uniformly inside
    it, and the coordinates are shuffled.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not lo <= hi:
        raise ValueError("need lo <= hi")
    span = hi - lo
    tol = 1e-12 * max(1.0, abs(total), n * max(abs(lo), abs(hi)))
    if total < n * lo - tol or total > n * hi + tol:
        raise ValueError(f"total {total} outside [{n * lo}, {n * hi}]")
    if n == 1:
        return np.array([min(max(total, lo), hi)])
    if span == 0:
        return np.full(n, lo)

    s = (total - n * lo) / span
    k = int(max(min(math.floor(s), n - 1), 0))
    s = max(min(s, k + 1), k)
    s1 = s - np.arange(k, k - n, -1, dtype=float)
    s2 = np.arange(k + n, k, -1, dtype=float) - s

    huge = np.finfo(float).max
    tiny = np.finfo(float).tiny
    w = np.zeros((n, n + 1))
    w[0, 1] = huge
    t = np.zeros((n - 1, n))
    for i in range(2, n + 1):
        tmp1 = w[i - 2, 1:i + 1] * s1[:i] / i
        tmp2 = w[i - 2, :i] * s2[n - i:] / i
        w[i - 1, 1:i + 1] = tmp1 + tmp2
        tmp3 = w[i - 1, 1:i + 1] + tiny
        tmp4 = s2[n - i:] > s1[:i]
        t[i - 2, :i] = np.where(tmp4, tmp2 / tmp3, 1.0 - tmp1 / tmp3)

    x = np.zeros(n)
    rt = rng.random(n - 1)
    rs = rng.random(n - 1)
    j = k
    sm, pr = 0.0, 1.0
    for i in range(n - 1, 0, -1):
        e = 1 if rt[n - i - 1] <= t[i - 1, j] else 0
        sx = rs[n - i - 1] ** (1.0 / i)
        sm += (1.0 - sx) * pr * s / (i + 1)
        pr *= sx
        x[n - i - 1] = sm + pr * e
        s -= e
        j -= e
    x[n - 1] = sm + pr * s
    x = x[rng.permutation(n)]
    return np.clip(span * x + lo, lo, hi)


# ---------------------------------------------------------------------------
# Mobility


class MobilitySource(Protocol):
    def vehicles_at(self, t: float) -> list: ...

    def state(self, vehicle, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(position, velocity) in meters and m/s."""
        ...


class TraceMobility:
    """Piecewise-linear trajectories from a (vehicle_id, timestamp_s, x_m, y_m) CSV."""

    def __init__(self, tracks: dict):
        self.tracks = {}
        for vid, pts in tracks.items():
            pts = sorted(pts)
            ts = np.array([p[0] for p in pts], dtype=float)
            xy = np.array([[p[1], p[2]] for p in pts], dtype=float)
            self.tracks[vid] = (ts, xy)

    def vehicles_at(self, t: float) -> list:
        return sorted(v for v, (ts, _) in self.tracks.items() if ts[0] <= t <= ts[-1])

    def state(self, vehicle, t: float):
        ts, xy = self.tracks[vehicle]
        if len(ts) == 1:
            return xy[0].copy(), np.zeros(2)
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        dt = ts[i + 1] - ts[i]
        vel = (xy[i + 1] - xy[i]) / dt if dt > 0 else np.zeros(2)
        return xy[i] + vel * (t - ts[i]), vel

    @property
    def time_range(self) -> tuple[float, float]:
        starts = [ts[0] for ts, _ in self.tracks.values()]
        ends = [ts[-1] for ts, _ in self.tracks.values()]
        return min(starts), max(ends)


def load_trace(path) -> TraceMobility:
    tracks: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        want = ["vehicle_id", "timestamp_s", "x_m", "y_m"]
        if header is None or [h.strip() for h in header] != want:
            raise WorkloadError(f"{path}:1: expected header {','.join(want)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise WorkloadError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                t, x, y = float(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise WorkloadError(f"{path}:{lineno}: {exc}") from None
            if not all(map(math.isfinite, (t, x, y))):
                raise WorkloadError(f"{path}:{lineno}: non-finite value")
            tracks.setdefault(row[0].strip(), []).append((t, x, y))
    if not tracks:
        raise WorkloadError(f"{path}: no rows")
    return TraceMobility(tracks)


class GridMobility:
    """Constant-velocity vehicles on an axis-aligned road grid (wrapping at the edges)."""

    def __init__(self, area_m: float, n_roads: int, n_vehicles: int, speed_range, rng):
        self.area = area_m
        roads = (np.arange(n_roads) + 0.5) * area_m / n_roads
        self.start = np.zeros((n_vehicles, 2))
        self.vel = np.zeros((n_vehicles, 2))
        for v in range(n_vehicles):
            road = roads[rng.integers(n_roads)]
            along = rng.uniform(0, area_m)
            speed = rng.uniform(*speed_range) * rng.choice([-1.0, 1.0])
            if rng.random() < 0.5:
                self.start[v] = (along, road)
                self.vel[v] = (speed, 0.0)
            else:
                self.start[v] = (road, along)
                self.vel[v] = (0.0, speed)

    def vehicles_at(self, t: float) -> list:
        return list(range(len(self.start)))

    def state(self, vehicle, t: float):
        pos = np.mod(self.start[vehicle] + self.vel[vehicle] * t, self.area)
        return pos, self.vel[vehicle].copy()


def ring_dwell_time(pos, vel, center, inner: float, outer: float, horizon: float) -> float:
    """Time until a straight-line constant-velocity vehicle leaves the annulus."""
    q = np.asarray(pos, float) - np.asarray(center, float)
    v = np.asarray(vel, float)
    vv = float(v @ v)
    if vv == 0.0:
        return horizon
    qv = float(q @ v)
    qq = float(q @ q)
    best = horizon
    for radius in (outer, inner):
        if radius <= 0:
            continue
        disc = qv * qv - vv * (qq - radius * radius)
        if disc < 0:
            continue
        root = math.sqrt(disc)
        for tt in ((-qv - root) / vv, (-qv + root) / vv):
            if tt > 1e-12:
                best = min(best, tt)
    return best


# ---------------------------------------------------------------------------
# Processing-time profiles

# (name, single-unit seconds at gpu_factor 1, speedup exponent)
APPS = (
    ("resnet34", 0.30, 0.90), ("resnet50", 0.40, 0.88), ("resnet101", 0.65, 0.85),
    ("densenet121", 0.45, 0.80), ("densenet169", 0.55, 0.80),
    ("vgg11", 0.50, 0.92), ("vgg13", 0.60, 0.92), ("vgg16", 0.75, 0.90), ("vgg19", 0.90, 0.90),
)
GPU_FACTORS = (0.5, 0.75, 1.0, 1.25, 1.5)


@dataclass(frozen=True)
class AppProfile:
    name: str
    base_time: float
    alpha: float


def synth_processing_table(app: AppProfile, gpu_factor: float, max_c: int) -> dict[int, float]:
    """t(c) = base_time * gpu_factor / c**alpha for c = 1..max_c."""
    if not app.base_time > 0 or not 0 < app.alpha <= 1:
        raise ValueError(f"bad profile {app}")
    return {c: app.base_time * gpu_factor / c ** app.alpha for c in range(1, max_c + 1)}


def load_processing_profile(path) -> dict[tuple[str, str], dict[int, float]]:
    """CSV with columns app_id, gpu_id, computing_units, seconds."""
    table: dict[tuple[str, str], dict[int, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"app_id", "gpu_id", "computing_units", "seconds"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise WorkloadError(f"{path}:1: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                c = int(row["computing_units"])
                sec = float(row["seconds"])
            except (TypeError, ValueError) as exc:
                raise WorkloadError(f"{path}:{lineno}: {exc}") from None
            if c < 1 or not sec > 0:
                raise WorkloadError(f"{path}:{lineno}: need computing_units >= 1 and seconds > 0")
            table.setdefault((row["app_id"], row["gpu_id"]), {})[c] = sec
    return table


# ---------------------------------------------------------------------------
# Configuration and synthesis


@dataclass
class WorkloadConfig:
    """Synthesis knobs. Defaults follow the base evaluation setup (20 ES,
    2 MHz bandwidth units, 25 computing units, two rings at 1.65/1.15 MB/s)."""

    n_servers: int = 20
    bu_per_server: tuple = (20, 40)
    bu_size_mhz: float = 2.0
    cu_per_server: int = 25
    ring_rates: tuple = (1.65, 1.15)
    ring_radii: tuple = (100.0, 200.0)
    jobset_size: int = 200
    ru_b_range: tuple = (0.6, 0.9)
    ru_c_range: tuple = (0.6, 0.9)
    input_size_range: tuple = (0.15, 0.63)
    n_images: int = 45
    utility_range: tuple = (20.0, 60.0)
    gamma_range: tuple = (1.8, 2.2)
    hard_deadline_fraction: float = 0.5
    slack_range: tuple = (1.0, 1.2)
    area_m: float = 1000.0
    n_roads: int = 5
    n_vehicles: int = 300
    speed_range: tuple = (5.0, 15.0)
    period_s: float = 900.0
    dwell_horizon_s: float = 60.0
    profile_path: Optional[str] = None
    trace_path: Optional[str] = None
    seed: int = 0
    max_retries: int = 50

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_range"):
                if len(v) != 2 or not v[0] <= v[1]:
                    raise WorkloadError(f"{f.name} must be [lo, hi] with lo <= hi, got {v}")
                setattr(self, f.name, (float(v[0]), float(v[1])))
        for name in ("bu_per_server", "ring_rates", "ring_radii"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.n_servers < 1 or self.jobset_size < 1 or self.cu_per_server < 1:
            raise WorkloadError("n_servers, jobset_size, cu_per_server must be >= 1")
        if not self.bu_per_server or min(self.bu_per_server) < 1:
            raise WorkloadError("bu_per_server must list positive integers")
        if len(self.ring_rates) != len(self.ring_radii) or not self.ring_rates:
            raise WorkloadError("ring_rates and ring_radii must have equal non-zero length")
        if min(self.ring_rates) <= 0 or list(self.ring_radii) != sorted(set(self.ring_radii)):
            raise WorkloadError("ring rates must be positive and radii strictly increasing")
        if not 0 <= self.hard_deadline_fraction <= 1:
            raise WorkloadError("hard_deadline_fraction must be in [0, 1]")
        if self.gamma_range[0] < 1 or self.input_size_range[0] <= 0 or self.utility_range[0] <= 0:
            raise WorkloadError("gamma >= 1, input sizes and utilities > 0 required")
        if self.bu_size_mhz <= 0 or self.slack_range[0] < 1:
            raise WorkloadError("bu_size_mhz must be > 0 and slack >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise WorkloadError(f"unknown workload keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Topology:
    servers: list[EdgeServer]
    positions: np.ndarray
    gpu_ids: list  # per server: index into GPU_FACTORS or a profile gpu_id
    gpu_factors: list[float] = field(default_factory=list)


def synthesize_topology(cfg: WorkloadConfig, rng: np.random.Generator,
                        gpu_choices: Optional[list] = None) -> Topology:
    """ES spread on road intersections of a grid covering the area."""
    side = math.ceil(math.sqrt(cfg.n_servers))
    cells = [((i + 0.5) * cfg.area_m / side, (j + 0.5) * cfg.area_m / side)
             for i in range(side) for j in range(side)]
    pick = np.sort(rng.choice(len(cells), size=cfg.n_servers, replace=False))
    positions = np.array([cells[p] for p in pick])
    servers, gpu_ids, factors = [], [], []
    for k in range(cfg.n_servers):
        rings = []
        inner = 0.0
        for r, (rate, outer) in enumerate(zip(cfg.ring_rates, cfg.ring_radii), start=1):
            rings.append(NetworkRing(r, per_bu_rate=rate, inner_radius=inner, outer_radius=outer))
            inner = outer
        bu = int(cfg.bu_per_server[rng.integers(len(cfg.bu_per_server))])
        servers.append(EdgeServer(k, bu, cfg.bu_size_mhz, cfg.cu_per_server, rings))
        if gpu_choices is None:
            g = int(rng.integers(len(GPU_FACTORS)))
            gpu_ids.append(g)
            factors.append(GPU_FACTORS[g])
        else:
            gpu_ids.append(gpu_choices[rng.integers(len(gpu_choices))])
    return Topology(servers, positions, gpu_ids, factors)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class Jobset:
    jobs: list[Job]
    ru_b: float
    ru_c: float
    bu_shares: np.ndarray
    cu_shares: np.ndarray
    release_time: float


def _coverage(topo: Topology, pos, vel, horizon):
    """One (server, ring, dwell) per server whose coverage contains ``pos``."""
    out = []
    for k, srv in enumerate(topo.servers):
        dist = float(np.hypot(*(pos - topo.positions[k])))
        for ring in srv.rings:
            if ring.inner_radius <= dist < ring.outer_radius:
                dwell = ring_dwell_time(pos, vel, topo.positions[k], ring.inner_radius,
                                        ring.outer_radius, horizon)
                out.append((srv, ring, dwell))
                break
    return out


def synthesize_jobset(cfg: WorkloadConfig, topo: Topology, mobility: MobilitySource,
                      rng: np.random.Generator, profiles: Optional[dict] = None,
                      release_window: Optional[tuple] = None) -> Jobset:
    """Sample a jobset whose aggregate BU/CU demand matches sampled utilisations.

    The per-job demand shares drawn with ``randfixedsum`` are rounded to
    integer units (b*, c*); each deadline is the completion time at (b*, c*)
    on the job's fastest usable ring times a slack factor, so every job has
    at least one feasible instance.
    """
    n = cfg.jobset_size
    total_b = sum(s.bandwidth_units for s in topo.servers)
    total_c = sum(s.computing_units for s in topo.servers)
    ru_b = float(rng.uniform(*cfg.ru_b_range))
    ru_c = float(rng.uniform(*cfg.ru_c_range))
    hi_b = min(s.bandwidth_units for s in topo.servers)
    hi_c = min(s.computing_units for s in topo.servers)
    try:
        bu_shares = randfixedsum(n, ru_b * total_b, 0.0, hi_b, rng)
        cu_shares = randfixedsum(n, ru_c * total_c, 0.0, hi_c, rng)
    except ValueError as exc:
        raise WorkloadError(f"utilisation not reachable with {n} jobs: {exc}") from None

    window = release_window or (0.0, cfg.period_s)
    release = float(rng.uniform(*window))
    active = mobility.vehicles_at(release)
    if not active:
        raise WorkloadError(f"no vehicle active at t={release:.1f}s")
    images = np.linspace(cfg.input_size_range[0], cfg.input_size_range[1], cfg.n_images)
    if profiles is None:
        apps = [AppProfile(*a) for a in APPS]
    else:
        apps = sorted({app for app, _ in profiles})

    jobs = []
    for j in range(n):
        theta = float(images[rng.integers(len(images))])
        utility = float(rng.uniform(*cfg.utility_range))
        app = apps[rng.integers(len(apps))]
        hard = rng.random() < cfg.hard_deadline_fraction
        gamma = 1.0 if hard else float(rng.uniform(*cfg.gamma_range))
        slack = float(rng.uniform(*cfg.slack_range))
        for _ in range(cfg.max_retries):
            vehicle = active[rng.integers(len(active))]
            pos, vel = mobility.state(vehicle, release)
            cover = _coverage(topo, pos, vel, cfg.dwell_horizon_s)
            if not cover:
                continue
            tables = {}
            for srv, _, _ in cover:
                k = srv.server_id
                if profiles is None:
                    tab = synth_processing_table(app, topo.gpu_factors[k], srv.computing_units)
                else:
                    tab = profiles.get((app, topo.gpu_ids[k]), {})
                    if any(c not in tab for c in range(1, srv.computing_units + 1)):
                        raise WorkloadError(
                            f"profile lacks ({app}, {topo.gpu_ids[k]}) for c = 1..{srv.computing_units}")
                tables[k] = tab
            # fastest ring whose dwell time covers the completion at (b*, c*)
            best = None
            for srv, ring, dwell in cover:
                b = min(max(round_half_up(bu_shares[j]), 1), srv.bandwidth_units)
                c = min(max(round_half_up(cu_shares[j]), 1), srv.computing_units)
                t = theta / (b * ring.per_bu_rate) + tables[srv.server_id][c]
                if t <= dwell and (best is None or t < best):
                    best = t
            if best is not None:
                break
        else:
            raise WorkloadError(f"job {j}: no covered vehicle with a usable ring after "
                                f"{cfg.max_retries} draws")
        deadline = best * slack
        pt = {(k, c): t for k, tab in tables.items()
              for c, t in tab.items() if c <= topo.servers[k].computing_units}
        jobs.append(Job(
            job_id=j, input_size_mb=theta, deadline=deadline, tolerance_factor=gamma,
            full_utility=utility,
            accessible_rings=[RingAccess(srv.server_id, ring.ring_index, dwell)
                              for srv, ring, dwell in cover],
            processing_times=pt, penalty=PenaltyShape("linear_decreasing")))
    return Jobset(jobs, ru_b, ru_c, bu_shares, cu_shares, release)


def synthesize_problem(cfg: WorkloadConfig, rng: Optional[np.random.Generator] = None):
    """Topology + mobility + jobset in one call. Returns (problem, jobset)."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    profiles = load_processing_profile(cfg.profile_path) if cfg.profile_path else None
    gpu_choices = sorted({g for _, g in profiles}) if profiles else None
    topo = synthesize_topology(cfg, rng, gpu_choices)
    if cfg.trace_path:
        mobility = load_trace(cfg.trace_path)
        window = mobility.time_range
    else:
        mobility = GridMobility(cfg.area_m, cfg.n_roads, cfg.n_vehicles, cfg.speed_range, rng)
        window = None
    jobset = synthesize_jobset(cfg, topo, mobility, rng, profiles, window)
    return Problem(topo.servers, jobset.jobs, None), jobset


def random_problem(rng: np.random.Generator, n_jobs=(1, 8), n_servers=(1, 3), bu=(1, 6), cu=(1, 6),
                   soft_fraction: float = 0.5) -> Problem:
    """Small unstructured problem for property tests.

    Deadlines are drawn around the completion time of a random (b, c) so
    that each job has a handful of feasible instances.
    """
    m = int(rng.integers(n_servers[0], n_servers[1] + 1))
    servers = []
    for k in range(m):
        rings = [NetworkRing(r + 1, per_bu_rate=float(rng.uniform(0.5, 2.0)))
                 for r in range(int(rng.integers(1, 3)))]
        servers.append(EdgeServer(k, int(rng.integers(bu[0], bu[1] + 1)), 2.0,
                                  int(rng.integers(cu[0], cu[1] + 1)), rings))
    jobs = []
    for j in range(int(rng.integers(n_jobs[0], n_jobs[1] + 1))):
        n_acc = int(rng.integers(1, m + 1))
        picked = np.sort(rng.choice(m, size=n_acc, replace=False))
        acc, pt = [], {}
        theta = float(rng.uniform(0.1, 1.0))
        base = float(rng.uniform(0.1, 1.0))
        alpha = float(rng.uniform(0.3, 1.0))
        for k in picked:
            srv = servers[k]
            ring = srv.rings[rng.integers(len(srv.rings))]
            acc.append(RingAccess(int(k), ring.ring_index, float(rng.uniform(0.5, 5.0))))
            g = float(rng.uniform(0.5, 1.5))
            for c in range(1, srv.computing_units + 1):
                pt[(int(k), c)] = base * g / c ** alpha
        # anchor the deadline on a random allocation of the first accessible server
        srv = servers[picked[0]]
        ring = srv.ring(acc[0].ring_index)
        b0 = int(rng.integers(1, srv.bandwidth_units + 1))
        c0 = int(rng.integers(1, srv.computing_units + 1))
        t0 = theta / (b0 * ring.per_bu_rate) + pt[(int(picked[0]), c0)]
        soft = rng.random() < soft_fraction
        gamma = float(rng.uniform(1.2, 2.0)) if soft else 1.0
        deadline = t0 * float(rng.uniform(0.7, 1.3)) / gamma
        penalty = PenaltyShape("linear_decreasing")
        if soft and rng.random() < 0.3:
            penalty = PenaltyShape("step", ((0.5, 0.6), (1.0, 0.2)))
        jobs.append(Job(j, theta, deadline, gamma, float(rng.uniform(1.0, 60.0)), acc, pt,
                        penalty))
    return Problem(servers, jobs, None)
