"""3-D particle diffusion between a reflecting transmitter and an absorbing receiver.

Particles are independent (no collisions), so each one is tracked on its own
random stream keyed by ``(seed, particle id)``.  That makes the hit records a
pure function of the seed and the emission schedule, whatever the number of
worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .core import ParameterError, PhysicalParams, first_hit_cdf_1d

CROSSING_MODES = {"endpoint": K.ENDPOINT, "segment": K.SEGMENT, "bridge": K.BRIDGE}


class InvariantViolation(RuntimeError):
    """Engine state broke an invariant it relies on (e.g. a particle inside a sphere)."""


def default_workers() -> int:
    env = os.environ.get("CVD_SIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _steps(value: float, dt: float, what: str) -> int:
    n = round(value / dt)
    if abs(n * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ParameterError(f"{what} = {value} is not a multiple of dt = {dt}")
    return int(n)


def _crossing_code(crossing: str) -> int:
    try:
        return CROSSING_MODES[crossing]
    except KeyError:
        raise ParameterError(f"unknown crossing mode {crossing!r}; expected one of {sorted(CROSSING_MODES)}") from None


@dataclass(frozen=True)
class Geometry:
    """Receiver centered at the origin, transmitter on the negative x axis."""

    tn_center: np.ndarray
    rn_center: np.ndarray
    r_tn: float
    r_rn: float
    r_mm: float = 0.0

    @classmethod
    def from_params(cls, params: PhysicalParams) -> "Geometry":
        sep = params.r_tn + params.d + params.r_rn
        return cls(tn_center=np.array([-sep, 0.0, 0.0]), rn_center=np.zeros(3),
                   r_tn=params.r_tn, r_rn=params.r_rn, r_mm=params.r_mm)

    @property
    def r_eff(self) -> float:
        return self.r_rn + self.r_mm

    @property
    def gap(self) -> float:
        return float(np.linalg.norm(self.tn_center - self.rn_center)) - self.r_tn - self.r_rn

    @property
    def release_point(self) -> np.ndarray:
        """Point of the transmitter surface facing the receiver."""
        axis = self.rn_center - self.tn_center
        return self.tn_center + self.r_tn * axis / np.linalg.norm(axis)

    def _kernel_args(self):
        return (np.ascontiguousarray(self.tn_center, dtype=float), float(self.r_tn),
                np.ascontiguousarray(self.rn_center, dtype=float), float(self.r_eff))


@dataclass(frozen=True)
class Particle:
    id: int
    position: np.ndarray
    hit_time: float | None = None

    @property
    def absorbed(self) -> bool:
        return self.hit_time is not None


@dataclass(frozen=True)
class HitRecords:
    """Absorption events sorted by (hit_time, id)."""

    ids: np.ndarray
    hit_time: np.ndarray
    emission_time: np.ndarray

    @classmethod
    def build(cls, ids, hit_time, emission_time) -> "HitRecords":
        ids = np.asarray(ids, dtype=np.int64)
        hit_time = np.asarray(hit_time, dtype=float)
        emission_time = np.asarray(emission_time, dtype=float)
        order = np.lexsort((ids, hit_time))
        return cls(ids[order], hit_time[order], emission_time[order])

    def __len__(self):
        return int(self.ids.shape[0])


@dataclass
class ParticleSet:
    """Struct-of-arrays particle population with per-particle stream counters."""

    seed: int
    dt: float
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    pos: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    absorbed: np.ndarray = field(default_factory=lambda: np.empty(0, bool))
    hit_step: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    emission_step: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    normal_counter: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    uniform_counter: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    step: int = 0

    @property
    def time(self) -> float:
        return self.step * self.dt

    @property
    def n_total(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_absorbed(self) -> int:
        return int(self.absorbed.sum())

    @property
    def n_free(self) -> int:
        return self.n_total - self.n_absorbed

    def release(self, count: int, point, first_id: int | None = None) -> None:
        """Emit ``count`` particles at ``point`` at the current step."""
        count = int(count)
        if count < 0:
            raise ParameterError("count must be >= 0")
        if first_id is None:
            first_id = int(self.ids.max()) + 1 if self.n_total else 0
        new_ids = np.arange(first_id, first_id + count, dtype=np.int64)
        self.ids = np.concatenate([self.ids, new_ids])
        self.pos = np.concatenate([self.pos, np.tile(np.asarray(point, float), (count, 1))])
        self.absorbed = np.concatenate([self.absorbed, np.zeros(count, bool)])
        self.hit_step = np.concatenate([self.hit_step, np.full(count, -1, np.int64)])
        self.emission_step = np.concatenate([self.emission_step, np.full(count, self.step, np.int64)])
        self.normal_counter = np.concatenate([self.normal_counter, np.zeros(count, np.int64)])
        self.uniform_counter = np.concatenate([self.uniform_counter, np.zeros(count, np.int64)])

    def particle(self, i: int) -> Particle:
        hit = self.hit_step[i] * self.dt if self.absorbed[i] else None
        return Particle(int(self.ids[i]), self.pos[i].copy(), hit)


def advance(particles: ParticleSet, geometry: Geometry, D: float, crossing: str = "endpoint") -> HitRecords:
    """Move every free particle by one step of ``particles.dt``; return the new hits.

    Absorption is tested before transmitter reflection.  Absorbed particles are
    never touched again.
    """
    var = 2.0 * D * particles.dt
    hits_before = particles.absorbed.copy()
    res = K.advance_once(np.uint64(particles.seed), particles.ids, particles.pos, particles.absorbed,
                         particles.hit_step, particles.normal_counter, particles.uniform_counter,
                         particles.step, *geometry._kernel_args(), var, _crossing_code(crossing))
    if res < 0:
        i = -1 - res
        raise InvariantViolation(f"particle {particles.ids[i]} starts inside a sphere at {particles.pos[i]}")
    particles.step += 1
    new = particles.absorbed & ~hits_before
    return HitRecords.build(particles.ids[new], particles.hit_step[new] * particles.dt,
                            particles.emission_step[new] * particles.dt)


@dataclass(frozen=True)
class Emission:
    time: float
    count: int
    point: Sequence[float]


@dataclass(frozen=True)
class TrackResult:
    """Per-particle outcome of :func:`track`; ``hit_step`` is -1 for particles still free."""

    ids: np.ndarray
    emission_step: np.ndarray
    hit_step: np.ndarray
    dt: float

    @property
    def n_emitted(self) -> int:
        return int(self.ids.shape[0])

    @property
    def n_absorbed(self) -> int:
        return int((self.hit_step >= 0).sum())

    @property
    def n_free(self) -> int:
        return self.n_emitted - self.n_absorbed

    def hit_records(self) -> HitRecords:
        m = self.hit_step >= 0
        return HitRecords.build(self.ids[m], self.hit_step[m] * self.dt, self.emission_step[m] * self.dt)


def _run_chunks(fn, n: int, workers: int) -> None:
    workers = max(1, min(int(workers), n)) if n else 1
    if workers == 1:
        fn(0, n)
        return
    bounds = np.linspace(0, n, workers + 1).astype(np.int64)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, int(bounds[w]), int(bounds[w + 1])) for w in range(workers)]
        for f in futures:
            f.result()


def track(emission_step: np.ndarray, start: np.ndarray, geometry: Geometry, D: float, dt: float,
          last_step: int, seed: int, ids: np.ndarray | None = None, crossing: str = "endpoint",
          leap_sigma: float = 6.0, kill_distance: float = 0.0, workers: int | None = None) -> TrackResult:
    """Track particles given per-particle emission steps and start points."""
    emission_step = np.ascontiguousarray(emission_step, dtype=np.int64)
    n = emission_step.shape[0]
    start = np.ascontiguousarray(np.broadcast_to(np.asarray(start, float), (n, 3)))
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if n and (emission_step.max() > last_step or emission_step.min() < 0):
        raise ParameterError("emission outside [0, horizon]")
    out = np.full(n, -1, dtype=np.int64)
    var = 2.0 * D * dt
    mode = _crossing_code(crossing)
    gargs = geometry._kernel_args()
    seed64 = np.uint64(seed)

    def run(lo, hi):
        K.track_range(lo, hi, seed64, ids, start, emission_step, int(last_step), *gargs,
                      var, mode, float(leap_sigma), float(kill_distance), out)

    _run_chunks(run, n, default_workers() if workers is None else workers)
    return TrackResult(ids, emission_step, out, dt)


def expand_schedule(schedule: Iterable, dt: float, first_id: int = 0):
    """Flatten an emission schedule into per-particle (ids, emission_step, start) arrays."""
    steps, counts, points = [], [], []
    for item in schedule:
        e = item if isinstance(item, Emission) else Emission(*item)
        if e.count < 0:
            raise ParameterError("emission count must be >= 0")
        steps.append(_steps(e.time, dt, "emission time"))
        counts.append(int(e.count))
        points.append(np.asarray(e.point, float))
    if not counts:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, 3))
    counts = np.asarray(counts)
    emission_step = np.repeat(np.asarray(steps, np.int64), counts)
    start = np.repeat(np.asarray(points), counts, axis=0)
    ids = np.arange(first_id, first_id + emission_step.shape[0], dtype=np.int64)
    return ids, emission_step, start


def simulate_hits(schedule: Iterable, geometry: Geometry, params: PhysicalParams, horizon: float,
                  seed: int, dt: float | None = None, crossing: str = "endpoint", leap_sigma: float = 6.0,
                  kill_distance: float = 0.0, workers: int | None = None, first_id: int = 0) -> HitRecords:
    """Emit, diffuse and absorb every scheduled molecule up to ``horizon`` (inclusive).

    ``schedule`` holds ``(time, count, release point)`` entries; particle ids are
    assigned consecutively in schedule order starting at ``first_id``.
    """
    dt = params.dt_sim if dt is None else dt
    last = _steps(horizon, dt, "horizon")
    ids, emission_step, start = expand_schedule(schedule, dt, first_id)
    res = track(emission_step, start, geometry, params.D, dt, last, seed, ids=ids, crossing=crossing,
                leap_sigma=leap_sigma, kill_distance=kill_distance, workers=workers)
    return res.hit_records()


@dataclass(frozen=True)
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray
    n_particles: int
    r0: float
    D: float
    horizon: float

    @property
    def n_hit(self) -> int:
        return int(self.counts.sum())

    @property
    def hit_fraction(self) -> float:
        return self.n_hit / self.n_particles

    def analytic_probabilities(self) -> np.ndarray:
        """Exact per-bin first-hit probabilities from the 1-D closed form."""
        return np.diff(first_hit_cdf_1d(self.r0, self.edges, self.D))

    def analytic_pdf(self) -> np.ndarray:
        """Bin-averaged analytic density [1/s]."""
        return self.analytic_probabilities() / np.diff(self.edges)


def validate_1d(r0: float, D: float, dt: float, n_particles: int, horizon: float, bins: int = 50,
                seed: int = 0, crossing: str = "bridge", leap_sigma: float = 6.0,
                workers: int | None = None) -> Histogram1D:
    """Simulate 1-D walkers started at ``r0`` from a point absorber; histogram the hit times.

    The default ``bridge`` crossing test counts paths that cross the absorber
    between two grid points; plain endpoint tests hit systematically late.
    """
    if not r0 > 0:
        raise ParameterError("r0 must be > 0")
    if crossing not in ("endpoint", "bridge"):
        raise ParameterError("1-D walkers support 'endpoint' or 'bridge' crossing")
    last = _steps(horizon, dt, "horizon")
    n = int(n_particles)
    out = np.full(n, -1, dtype=np.int64)
    var = 2.0 * D * dt
    mode = _crossing_code(crossing)

    def run(lo, hi):
        K.walk_1d_range(lo, hi, np.uint64(seed), 0, float(r0), var, last, mode, float(leap_sigma), out)

    _run_chunks(run, n, default_workers() if workers is None else workers)
    edges = np.linspace(0.0, horizon, bins + 1)
    # a hit at step s crossed during ((s-1) dt, s dt]; bin by step index to avoid float edge effects
    hit = out[out >= 0]
    bin_of = np.minimum(((hit - 1) * bins) // last, bins - 1) if hit.size else hit
    counts = np.bincount(bin_of, minlength=bins).astype(np.int64)
    return Histogram1D(edges, counts, n, float(r0), float(D), float(horizon))


def chi2_first_hit(hist: Histogram1D, min_expected: float = 5.0):
    """Chi-square goodness of fit of a 1-D hit histogram against the closed form.

    Leading bins with expected count below ``min_expected`` are merged, and a
    final "not hit by the horizon" cell is included.  Returns (stat, dof, p).
    """
    n = hist.n_particles
    expected = hist.analytic_probabilities() * n
    obs = hist.counts.astype(float)
    cells_e, cells_o = [], []
    acc_e = acc_o = 0.0
    for e, o in zip(expected, obs):
        acc_e += e
        acc_o += o
        if acc_e >= min_expected:
            cells_e.append(acc_e)
            cells_o.append(acc_o)
            acc_e = acc_o = 0.0
    if acc_e > 0 and cells_e:
        cells_e[-1] += acc_e
        cells_o[-1] += acc_o
    cells_e.append(n * (1.0 - first_hit_cdf_1d(hist.r0, hist.horizon, hist.D)))
    cells_o.append(n - hist.n_hit)
    e = np.asarray(cells_e)
    o = np.asarray(cells_o)
    stat = float(((o - e) ** 2 / e).sum())
    dof = len(e) - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


def write_histogram_csv(path, hist: Histogram1D, header: str | None = None, analytic: bool = False) -> None:
    """Write ``bin_start_s,bin_end_s,count`` (plus ``analytic_pdf`` when requested)."""
    lines = []
    if header:
        lines.append(f"# {header}")
    cols = "bin_start_s,bin_end_s,count" + (",analytic_pdf" if analytic else "")
    lines.append(cols)
    pdf = hist.analytic_pdf() if analytic else None
    for i, c in enumerate(hist.counts):
        row = f"{hist.edges[i]:.6f},{hist.edges[i + 1]:.6f},{int(c)}"
        if analytic:
            row += f",{pdf[i]:.6f}"
        lines.append(row)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def hit_time_histogram(records: HitRecords, edges: np.ndarray) -> Histogram1D:
    """Histogram of 3-D hit delays (hit_time - emission_time) for diagnostics."""
    delay = records.hit_time - records.emission_time
    counts, _ = np.histogram(delay, edges)
    return Histogram1D(np.asarray(edges, float), counts.astype(np.int64), len(records), math.nan, math.nan,
                       float(edges[-1]))
