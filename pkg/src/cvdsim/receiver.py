"""Receiver chain: calibrated Gaussian noise, decision-feedback ISI cancellation, detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .modulation import ModulationScheme, SymbolClock, templates


class CalibrationError(ValueError):
    """Signatures or noise calibration are unusable."""


class FingerprintMismatch(ValueError):
    """A signature table was calibrated for a different channel or scheme."""


@dataclass(frozen=True)
class SignatureTable:
    """Mean received vectors per symbol: own slot (``sig0``) and the next slot (``sig1``)."""

    scheme: str
    sig0: np.ndarray
    sig1: np.ndarray
    fingerprint: str
    repetitions: int
    sig0_sd: np.ndarray | None = None
    sig1_sd: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.sig0.shape != self.sig1.shape or self.sig0.ndim != 2:
            raise CalibrationError("sig0 and sig1 must be matching (symbols, samples) arrays")
        if np.any(self.sig0 < 0) or np.any(self.sig1 < 0):
            raise CalibrationError("signature entries must be >= 0")

    @property
    def n_symbols(self) -> int:
        return self.sig0.shape[0]

    def stderr0(self) -> np.ndarray:
        """Standard error of each ``sig0`` entry (needs the per-sample spreads)."""
        if self.sig0_sd is None:
            raise CalibrationError("table carries no spread information")
        return self.sig0_sd / math.sqrt(self.repetitions)

    def check(self, fingerprint: str | None) -> None:
        if fingerprint is not None and fingerprint != self.fingerprint:
            raise FingerprintMismatch(
                f"signature table was calibrated for {self.fingerprint}, run has {fingerprint}; rerun calibrate")

    def save(self, path) -> None:
        seed = "" if self.seed is None else f" seed={self.seed}"
        lines = [f"# fingerprint={self.fingerprint}{seed} scheme={self.scheme} repetitions={self.repetitions}",
                 "symbol,slot,sample,mean_count"]
        for i in range(self.n_symbols):
            for slot, sig in ((0, self.sig0), (1, self.sig1)):
                for k in range(sig.shape[1]):
                    lines.append(f"{i},{slot},{k},{float(sig[i, k])!r}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "SignatureTable":
        meta = {}
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    meta.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
                    continue
                if line.startswith("symbol"):
                    continue
                i, slot, k, v = line.split(",")
                rows.append((int(i), int(slot), int(k), float(v)))
        if not rows or not {"fingerprint", "scheme", "repetitions"} <= meta.keys():
            raise CalibrationError(f"{path}: not a signature table")
        m = max(r[0] for r in rows) + 1
        n = max(r[2] for r in rows) + 1
        sig = np.zeros((2, m, n))
        for i, slot, k, v in rows:
            sig[slot, i, k] = v
        seed = int(meta["seed"]) if "seed" in meta else None
        return cls(meta["scheme"], sig[0], sig[1], meta["fingerprint"], int(meta["repetitions"]), seed=seed)


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float
    a_rx: float

    @property
    def sigma(self) -> float:
        """Per-sample noise standard deviation from SNR = 10 log10 (A_rx / sigma)^2."""
        return self.a_rx / 10.0 ** (self.snr_db / 20.0)


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "threshold"            # "threshold" or "correlation"
    thresholds: tuple = field(default=())
    dfe: bool = True
    alpha: float = 1.0
    sync_window: int = 2

    def __post_init__(self):
        if self.kind not in ("threshold", "correlation"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.sync_window < 0:
            raise ValueError("sync_window must be >= 0")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.dfe else 0.0


def add_noise(clean, sigma, rng: np.random.Generator) -> np.ndarray:
    """Add independent N(0, sigma^2) to every sample; values are not clamped.

    ``sigma`` is a standard deviation or a :class:`NoiseModel`.
    """
    clean = np.asarray(clean, dtype=float)
    if isinstance(sigma, NoiseModel):
        sigma = sigma.sigma
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return clean.copy()
    return clean + sigma * rng.standard_normal(clean.shape)


def calibrate_noise(run) -> float:
    """Mean noiseless received amplitude A_rx over every sample of a run."""
    received = np.asarray(run.received if hasattr(run, "received") else run, dtype=float)
    if received.size == 0:
        raise CalibrationError("empty run")
    a = float(received.mean())
    if a <= 0:
        raise CalibrationError("all-zero run: SNR is undefined")
    return a


def dfe_filter(noisy, previous: int | None, table: SignatureTable, alpha: float,
               fingerprint: str | None = None) -> np.ndarray:
    """Subtract ``alpha`` times the next-slot signature of the previously decided symbol."""
    table.check(fingerprint)
    noisy = np.asarray(noisy, dtype=float)
    if previous is None:
        return noisy.copy()
    return noisy - alpha * table.sig1[previous]


def calibrate_thresholds(table: SignatureTable) -> tuple:
    """Midpoints between consecutive own-slot signature sums."""
    if table.n_symbols < 2:
        raise CalibrationError("need at least two symbols")
    sums = table.sig0.sum(axis=1)
    return thresholds_from_sums(sums)


def thresholds_from_sums(sums) -> tuple:
    sums = np.asarray(sums, dtype=float)
    if np.any(np.diff(sums) <= 0):
        raise CalibrationError(f"signature sums are not increasing: {sums.tolist()}")
    return tuple(float(x) for x in (sums[:-1] + sums[1:]) / 2.0)


def detect_threshold(filtered, thresholds) -> int:
    """Number of thresholds strictly below the slot sum."""
    s = float(np.sum(filtered))
    return int(np.searchsorted(np.asarray(thresholds, dtype=float), s, side="left"))


def correlation_scores(filtered, tmpl: np.ndarray, sync_window: int) -> np.ndarray:
    """``scores[i, lag] = sum_k y[k + lag] * x_i[k]`` with zero padding past the slot end."""
    y = np.asarray(filtered, dtype=float)
    n = y.shape[-1]
    out = np.zeros(y.shape[:-1] + (tmpl.shape[0], sync_window + 1))
    for lag in range(min(sync_window, n - 1) + 1):
        out[..., lag] = y[..., lag:] @ tmpl[:, : n - lag].T
    return out


def _argmax_tiebreak(scores: np.ndarray) -> int:
    # scores: (symbols, lags); near-ties go to the lowest symbol, then the smallest lag
    best = scores.max()
    tol = 1e-9 * max(1.0, float(np.abs(scores).max()))
    flat = np.flatnonzero(scores.ravel() >= best - tol)[0]
    return int(flat // scores.shape[1])


def detect_correlation(filtered, scheme: ModulationScheme, clock: SymbolClock, cfg: DetectorConfig) -> int:
    """Symbol whose template correlates best with the slot over lags 0..sync_window."""
    return _argmax_tiebreak(correlation_scores(filtered, templates(scheme, clock), cfg.sync_window))


def detector_for(scheme: ModulationScheme, table: SignatureTable | None, dfe: bool, alpha: float,
                 sync_window: int = 2, thresholds=()) -> DetectorConfig:
    if scheme.family == "mfsk":
        return DetectorConfig("correlation", (), dfe, alpha, sync_window)
    if not thresholds:
        if table is None:
            raise CalibrationError("threshold detection needs a signature table or explicit thresholds")
        thresholds = calibrate_thresholds(table)
    return DetectorConfig("threshold", tuple(thresholds), dfe, alpha, sync_window)


@dataclass(frozen=True)
class Demodulation:
    decisions: np.ndarray
    statistic: np.ndarray   # filtered slot sum (threshold) or binary correlation margin


def demodulate(noisy: np.ndarray, table: SignatureTable, cfg: DetectorConfig, scheme: ModulationScheme,
               clock: SymbolClock) -> Demodulation:
    """Sequential decision-feedback detection over a (slots, samples) matrix.

    Filtering is linear, so the per-slot statistic is precomputed for the raw
    signal and corrected by the precomputed statistic of the subtracted
    signature of the previous decision.
    """
    noisy = np.asarray(noisy, dtype=float)
    n_slots = noisy.shape[0]
    alpha = cfg.effective_alpha
    decisions = np.empty(n_slots, dtype=np.int64)
    statistic = np.empty(n_slots)
    prev = None
    if cfg.kind == "threshold":
        thr = np.asarray(cfg.thresholds, dtype=float)
        raw = noisy.sum(axis=1)
        isi = alpha * table.sig1.sum(axis=1)
        for j in range(n_slots):
            s = raw[j] if prev is None else raw[j] - isi[prev]
            d = int(np.searchsorted(thr, s, side="left"))
            decisions[j] = d
            statistic[j] = s
            prev = d
        return Demodulation(decisions, statistic)
    tmpl = templates(scheme, clock)
    raw = correlation_scores(noisy, tmpl, cfg.sync_window)
    isi = alpha * correlation_scores(table.sig1, tmpl, cfg.sync_window)
    for j in range(n_slots):
        sc = raw[j] if prev is None else raw[j] - isi[prev]
        d = _argmax_tiebreak(sc)
        decisions[j] = d
        per_symbol = sc.max(axis=1)
        statistic[j] = per_symbol[1] - per_symbol[0] if sc.shape[0] == 2 else per_symbol[d]
        prev = d
    return Demodulation(decisions, statistic)


def demodulate_stream(run, noise: NoiseModel, table: SignatureTable, cfg: DetectorConfig,
                      rng: np.random.Generator, scheme: ModulationScheme, clock: SymbolClock) -> np.ndarray:
    """Add noise, cancel the previous decision's ISI, detect; decisions feed forward."""
    table.check(run.channel_fingerprint)
    noisy = add_noise(run.received, noise, rng)
    return demodulate(noisy, table, cfg, scheme, clock).decisions


def demodulate_reference(noisy: np.ndarray, table: SignatureTable, cfg: DetectorConfig,
                         scheme: ModulationScheme, clock: SymbolClock) -> np.ndarray:
    """Slot-by-slot composition of dfe_filter and the detectors (slow path)."""
    out = []
    prev = None
    for y in np.asarray(noisy, dtype=float):
        f = dfe_filter(y, prev, table, cfg.effective_alpha)
        if cfg.kind == "threshold":
            d = detect_threshold(f, cfg.thresholds)
        else:
            d = detect_correlation(f, scheme, clock, cfg)
        out.append(d)
        prev = d
    return np.asarray(out, dtype=np.int64)
