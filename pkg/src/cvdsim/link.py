"""End-to-end channel runs: symbol source, modulator, emission, diffusion, sampled reception."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, ExperimentConfig
from .engine import Geometry, track
from .modulation import emission_counts
from .receiver import SignatureTable
from .rng import PILOT, SYMBOLS, derive_seed, generator

KINDS = ("sent", "received", "noisy", "filtered")


@dataclass(frozen=True)
class SlotSignal:
    values: np.ndarray
    start_time: float
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown slot signal kind {self.kind!r}")


@dataclass(frozen=True)
class RunRecord:
    """One channel realization: ground truth plus sent and noiseless received counts per sample."""

    scheme: str
    symbols: np.ndarray       # (n_sym,)
    sent: np.ndarray          # (n_sym, samples_per_slot) int
    received: np.ndarray      # (n_sym, samples_per_slot) int
    t_s: float
    fingerprint: str
    channel_fingerprint: str
    seed: int
    n_free: int               # molecules never absorbed inside the run window

    @property
    def n_sym(self) -> int:
        return int(self.symbols.shape[0])

    @property
    def n_emitted(self) -> int:
        return int(self.sent.sum())

    @property
    def n_received(self) -> int:
        return int(self.received.sum())

    def slot(self, j: int, kind: str = "received") -> SlotSignal:
        values = {"sent": self.sent, "received": self.received}[kind][j]
        return SlotSignal(values.astype(float), j * self.t_s, kind)


def _steps_per_sample(config: ExperimentConfig) -> int:
    return int(round(config.t_ss / config.dt_sim))


def _engine_kwargs(config: ExperimentConfig, workers):
    return dict(crossing=config.crossing, leap_sigma=config.leap_sigma, kill_distance=config.kill_distance,
                workers=config.workers if workers is None else workers)


def run_link(config: ExperimentConfig, seed: int, symbols=None, workers: int | None = None) -> RunRecord:
    """Transmit ``n_sym`` consecutive symbols through one shared diffusion channel.

    Molecules for each sample are released as an impulse at the sample's start
    instant.  Particle ids follow emission order, so runs that share a symbol
    prefix share the trajectories of the prefix molecules.  The last simulated
    step is the last one whose hit time falls inside the final sample bin.
    """
    scheme = config.modulation()
    clock = config.clock
    n = clock.samples_per_slot
    if symbols is None:
        symbols = generator(seed, SYMBOLS).integers(0, scheme.n_symbols, config.n_sym)
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.ndim != 1 or symbols.size == 0:
        raise ConfigError("symbol sequence must be a non-empty 1-D array")
    if symbols.min() < 0 or symbols.max() > scheme.m:
        raise ConfigError(f"symbols out of range for {scheme.name}")
    sent = emission_counts(scheme, symbols, clock)
    n_slots = symbols.size
    sps = _steps_per_sample(config)
    sample_steps = np.arange(n_slots * n, dtype=np.int64) * sps
    emission_step = np.repeat(sample_steps, sent.ravel())
    last = n_slots * n * sps - 1
    geometry = Geometry.from_params(config.physical)
    res = track(emission_step, geometry.release_point, geometry, config.D, config.dt_sim, last, seed,
                **_engine_kwargs(config, workers))
    hits = res.hit_step[res.hit_step >= 0]
    received = np.bincount(hits // sps, minlength=n_slots * n).reshape(n_slots, n)
    return RunRecord(scheme.name, symbols, sent, received.astype(np.int64), config.t_s, config.fingerprint(),
                     config.channel_fingerprint(), int(seed), res.n_free)


@dataclass(frozen=True)
class PilotResult:
    sig0: np.ndarray      # mean counts in the symbol's own slot
    sig1: np.ndarray      # mean counts in the following slot
    sig0_sd: np.ndarray   # per-sample standard deviation across repetitions
    sig1_sd: np.ndarray
    repetitions: int
    emitted: int          # molecules emitted per repetition


def pilot_run(config: ExperimentConfig, symbol: int, n_repetitions: int | None = None, seed: int | None = None,
              workers: int | None = None) -> PilotResult:
    """Send ``symbol`` alone in slot 0 and average slot 0 / slot 1 reception over repetitions.

    All repetitions run in one engine call on disjoint particle-id ranges, so
    each repetition draws from its own independent streams.
    """
    reps = config.pilot_repetitions if n_repetitions is None else int(n_repetitions)
    if reps < 1:
        raise ConfigError("n_repetitions must be >= 1")
    base = config.seed if seed is None else seed
    scheme = config.modulation()
    clock = config.clock
    n = clock.samples_per_slot
    counts = emission_counts(scheme, [symbol], clock)[0]
    per_rep = int(counts.sum())
    sps = _steps_per_sample(config)
    if per_rep == 0:
        z = np.zeros(n)
        return PilotResult(z, z.copy(), z.copy(), z.copy(), reps, 0)
    one = np.repeat(np.arange(n, dtype=np.int64) * sps, counts)
    emission_step = np.tile(one, reps)
    last = 2 * n * sps - 1
    geometry = Geometry.from_params(config.physical)
    res = track(emission_step, geometry.release_point, geometry, config.D, config.dt_sim, last,
                derive_seed(base, PILOT, symbol), **_engine_kwargs(config, workers))
    rep_of = np.repeat(np.arange(reps), per_rep)
    m = res.hit_step >= 0
    flat = np.bincount(rep_of[m] * 2 * n + res.hit_step[m] // sps, minlength=reps * 2 * n)
    grid = flat.reshape(reps, 2, n).astype(float)
    sd = grid.std(axis=0, ddof=1) if reps > 1 else np.zeros((2, n))
    mean = grid.mean(axis=0)
    return PilotResult(mean[0], mean[1], sd[0], sd[1], reps, per_rep)


def calibrate_signatures(config: ExperimentConfig, seed: int | None = None, n_repetitions: int | None = None,
                         workers: int | None = None) -> SignatureTable:
    """Pilot-run every symbol of the configured scheme and collect its signature table."""
    scheme = config.modulation()
    pilots = [pilot_run(config, i, n_repetitions, seed, workers) for i in range(scheme.n_symbols)]
    return SignatureTable(
        scheme=scheme.name,
        sig0=np.stack([p.sig0 for p in pilots]),
        sig1=np.stack([p.sig1 for p in pilots]),
        fingerprint=config.channel_fingerprint(),
        repetitions=pilots[0].repetitions,
        sig0_sd=np.stack([p.sig0_sd for p in pilots]),
        sig1_sd=np.stack([p.sig1_sd for p in pilots]),
        seed=int(config.seed if seed is None else seed),
    )


def write_run_csv(path, run: RunRecord) -> None:
    lines = [f"# fingerprint={run.fingerprint} seed={run.seed} scheme={run.scheme}",
             "slot,sample,sent_count,received_count"]
    n = run.sent.shape[1]
    for j in range(run.n_sym):
        for k in range(n):
            lines.append(f"{j},{k},{int(run.sent[j, k])},{int(run.received[j, k])}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
