"""SER, ROC and PAMR measurements over SNR sweeps and repetitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .link import RunRecord, calibrate_signatures, run_link
from .modulation import SCHEMES, balanced_symbols, emission_counts, pamr
from .receiver import NoiseModel, SignatureTable, add_noise, calibrate_noise, demodulate, detector_for
from .rng import AUX, CHANNEL, NOISE, derive_seed, generator

# Qualitative comparison labels: SER class, PAMR class, node complexity.
SCHEME_CLASSES = {
    "ook": ("Low", "High", "Low"),
    "bcsk": ("Moderate", "Low", "Moderate"),
    "bmfsk": ("Moderate", "Low", "High"),
    "qcsk": ("High", "Low", "Moderate"),
    "qmfsk": ("High", "Low", "High"),
}


@dataclass(frozen=True)
class SerPoint:
    scheme: str
    dfe: bool
    snr_db: float
    ser: float
    repetitions: int
    n_sym: int
    per_rep: tuple = field(default=(), compare=False)

    @property
    def stderr(self) -> float:
        """Binomial standard error over all detected symbols."""
        return math.sqrt(self.ser * (1.0 - self.ser) / (self.repetitions * self.n_sym))


@dataclass(frozen=True)
class RocPoint:
    tau: float
    pd1: float
    pf1: float


def ser(decided, truth) -> float:
    decided = np.asarray(decided)
    truth = np.asarray(truth)
    if decided.shape != truth.shape:
        raise ValueError(f"length mismatch: {decided.shape} vs {truth.shape}")
    if decided.size == 0:
        raise ValueError("need at least one symbol")
    return float(np.mean(decided != truth))


def roc_sweep(statistic, truth, taus=None, n_points: int = 200) -> list[RocPoint]:
    """Empirical (Pd, Pf) for deciding "1" when the statistic exceeds each threshold."""
    s = np.asarray(statistic, dtype=float)
    truth = np.asarray(truth)
    ones = np.sort(s[truth == 1])
    zeros = np.sort(s[truth == 0])
    if ones.size == 0 or zeros.size == 0:
        raise ValueError("both classes must be present in the ground truth")
    if taus is None:
        taus = np.linspace(s.min(), s.max(), n_points)
    taus = np.asarray(taus, dtype=float)
    pd = 1.0 - np.searchsorted(ones, taus, side="right") / ones.size
    pf = 1.0 - np.searchsorted(zeros, taus, side="right") / zeros.size
    return [RocPoint(float(t), float(a), float(b)) for t, a, b in zip(taus, pd, pf)]


def pd_at_pf(statistic, truth, pf_max: float) -> float:
    """Best detection probability over thresholds whose false-alarm rate is at most ``pf_max``."""
    s = np.asarray(statistic, dtype=float)
    taus = np.unique(s)
    best = 0.0
    for p in roc_sweep(s, truth, taus):
        if p.pf1 <= pf_max:
            best = max(best, p.pd1)
    return best


@dataclass
class SweepResult:
    scheme: str
    points: list[SerPoint]
    roc: dict = field(default_factory=dict)          # snr_db -> list[RocPoint]
    roc_data: dict = field(default_factory=dict)     # snr_db -> (statistic, truth)
    a_rx: list = field(default_factory=list)
    table: SignatureTable | None = None

    def point(self, snr_db: float, dfe: bool) -> SerPoint:
        for p in self.points:
            if p.snr_db == snr_db and p.dfe == dfe:
                return p
        raise KeyError((snr_db, dfe))


def dfe_modes(config: ExperimentConfig) -> tuple:
    return {"on": (True,), "off": (False,), "both": (False, True)}[config.dfe]


def snr_sweep(config: ExperimentConfig, snr_db=None, repetitions: int | None = None, base_seed: int | None = None,
              table: SignatureTable | None = None, roc_snrs=(), workers: int | None = None,
              runs: list[RunRecord] | None = None) -> SweepResult:
    """SER versus SNR for the configured scheme, with and/or without decision feedback.

    One channel run per repetition is shared by every SNR point; noise is
    drawn per (repetition, SNR) and shared by the DFE on/off variants, so
    those comparisons are paired.
    """
    name = config.scheme
    scheme = config.modulation()
    clock = config.clock
    snrs = tuple(float(x) for x in (config.snr_db if snr_db is None else snr_db))
    reps = config.repetitions if repetitions is None else int(repetitions)
    base = config.seed if base_seed is None else int(base_seed)
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    if table is None:
        table = calibrate_signatures(config, seed=base, workers=workers)
    modes = dfe_modes(config)
    alpha = config.alpha_for(name)
    detectors = {m: detector_for(scheme, table, m, alpha, config.sync_window, config.thresholds) for m in modes}
    roc_mode = True if True in modes else False
    binary = scheme.n_symbols == 2
    per = {(s, m): [] for s in snrs for m in modes}
    roc_stats = {s: ([], []) for s in roc_snrs if binary}
    a_rx = []
    for r in range(reps):
        run = runs[r] if runs is not None else run_link(config, derive_seed(base, CHANNEL, r), workers=workers)
        table.check(run.channel_fingerprint)
        a = calibrate_noise(run)
        a_rx.append(a)
        for si, snr in enumerate(snrs):
            noisy = add_noise(run.received, NoiseModel(snr, a), generator(base, NOISE, r, si))
            for m in modes:
                dem = demodulate(noisy, table, detectors[m], scheme, clock)
                per[(snr, m)].append(ser(dem.decisions, run.symbols))
                if m == roc_mode and snr in roc_stats:
                    roc_stats[snr][0].append(dem.statistic)
                    roc_stats[snr][1].append(run.symbols)
        for snr in roc_stats:
            if snr not in snrs:
                rng = generator(base, NOISE, r, AUX, int(round(snr * 1000)))
                noisy = add_noise(run.received, NoiseModel(snr, a), rng)
                dem = demodulate(noisy, table, detectors[roc_mode], scheme, clock)
                roc_stats[snr][0].append(dem.statistic)
                roc_stats[snr][1].append(run.symbols)
    n_sym = config.n_sym if runs is None else runs[0].n_sym
    points = [SerPoint(name, m, s, float(np.mean(per[(s, m)])), reps, n_sym, tuple(per[(s, m)]))
              for s in snrs for m in modes]
    result = SweepResult(name, points, a_rx=a_rx, table=table)
    for snr, (st, tr) in roc_stats.items():
        st = np.concatenate(st)
        tr = np.concatenate(tr)
        result.roc_data[snr] = (st, tr)
        result.roc[snr] = roc_sweep(st, tr, n_points=config.roc_points)
    return result


def ser_slope(points: list[SerPoint]) -> float:
    """Least-squares slope of SER against SNR [1/dB]."""
    x = np.array([p.snr_db for p in points])
    y = np.array([p.ser for p in points])
    return float(np.polyfit(x, y, 1)[0])


def scheme_pamr(config: ExperimentConfig, name: str, n_slots: int | None = None, seed: int | None = None) -> float:
    """PAMR of an equiprobable emitted stream (each symbol equally often, random order)."""
    scheme = config.modulation(name)
    n = config.n_sym if n_slots is None else n_slots
    rng = generator(config.seed if seed is None else seed, AUX, list(SCHEMES).index(name))
    symbols = balanced_symbols(scheme.n_symbols, n, rng)
    return pamr(emission_counts(scheme, symbols, config.clock))


def compare_schemes(results: dict, pamrs: dict, reference_snrs=(3.0, 9.0, 15.0)) -> list[dict]:
    """One row per scheme: measured SER (with DFE where available), PAMR, qualitative labels."""
    rows = []
    for name in results.keys() | pamrs.keys():
        row = {"scheme": name}
        res = results.get(name)
        if res is not None:
            use_dfe = any(p.dfe for p in res.points)
            for snr in reference_snrs:
                try:
                    row[f"ser@{snr:g}dB"] = res.point(snr, use_dfe).ser
                except KeyError:
                    pass
        if name in pamrs:
            row["pamr"] = pamrs[name]
        ser_label, pamr_label, complexity = SCHEME_CLASSES.get(name, ("", "", ""))
        row.update(ser_class=ser_label, pamr_class=pamr_label, node_complexity=complexity)
        rows.append(row)
    order = list(SCHEME_CLASSES)
    rows.sort(key=lambda r: order.index(r["scheme"]) if r["scheme"] in order else len(order))
    return rows


def _write(path, header: str, columns: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header}\n{columns}\n")
        for r in rows:
            fh.write(r + "\n")


def write_ser_csv(path, points: list[SerPoint], header: str) -> None:
    pts = sorted(points, key=lambda p: (p.scheme, p.snr_db, p.dfe))
    _write(path, header, "scheme,dfe,snr_db,ser,stderr,reps,nsym",
           [f"{p.scheme},{int(p.dfe)},{p.snr_db:.6f},{p.ser:.6f},{p.stderr:.6f},{p.repetitions},{p.n_sym}"
            for p in pts])


def write_roc_csv(path, rocs: dict, header: str) -> None:
    """``rocs`` maps (scheme, snr_db) to a list of RocPoint."""
    rows = []
    for (name, snr) in sorted(rocs):
        for p in sorted(rocs[(name, snr)], key=lambda q: q.tau):
            rows.append(f"{name},{snr:.6f},{p.tau:.6f},{p.pd1:.6f},{p.pf1:.6f}")
    _write(path, header, "scheme,snr_db,tau,pd1,pf1", rows)


def write_pamr_csv(path, pamrs: dict, header: str) -> None:
    order = list(SCHEME_CLASSES)
    names = sorted(pamrs, key=lambda n: order.index(n) if n in order else len(order))
    _write(path, header, "scheme,pamr", [f"{n},{pamrs[n]:.6f}" for n in names])
