"""Emission waveforms for OOK, CSK and MFSK, molecule-count quantization, and PAMR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ParameterError

FAMILIES = ("ook", "csk", "mfsk")

# name -> (family, number of symbols)
SCHEMES = {
    "ook": ("ook", 2),
    "bcsk": ("csk", 2),
    "qcsk": ("csk", 4),
    "bmfsk": ("mfsk", 2),
    "qmfsk": ("mfsk", 4),
}

DISPLAY_NAMES = {"ook": "MC-OOK", "bcsk": "BCSK", "qcsk": "QCSK", "bmfsk": "BMFSK", "qmfsk": "QMFSK"}


@dataclass(frozen=True)
class SymbolClock:
    t_s: float = 0.032
    t_ss: float = 0.002

    def __post_init__(self):
        if not (self.t_s > 0 and self.t_ss > 0):
            raise ParameterError("t_s and t_ss must be > 0")
        ratio = self.t_s / self.t_ss
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ParameterError(f"t_s = {self.t_s} is not an integer multiple of t_ss = {self.t_ss}")

    @property
    def samples_per_slot(self) -> int:
        return int(round(self.t_s / self.t_ss))

    def sample_times(self) -> np.ndarray:
        return np.arange(self.samples_per_slot) * self.t_ss


@dataclass(frozen=True)
class ModulationScheme:
    """A modulation family with ``n_symbols`` = m + 1 symbols and mean amplitude A."""

    name: str
    family: str
    n_symbols: int
    amplitude: float = 90.0
    frequencies: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown modulation family {self.family!r}")
        if self.n_symbols < 2:
            raise ParameterError("a scheme needs at least two symbols")
        if not self.amplitude > 0:
            raise ParameterError("amplitude must be > 0")
        if self.family == "mfsk":
            if len(self.frequencies) != self.n_symbols:
                raise ParameterError(f"{self.name}: need {self.n_symbols} frequencies, got {len(self.frequencies)}")
            if len(set(self.frequencies)) != len(self.frequencies):
                raise ParameterError(f"{self.name}: frequencies must be distinct")
            if any(not f > 0 for f in self.frequencies):
                raise ParameterError(f"{self.name}: frequencies must be > 0")

    @classmethod
    def named(cls, name: str, amplitude: float = 90.0, clock: SymbolClock | None = None,
              frequencies=None) -> "ModulationScheme":
        try:
            family, m1 = SCHEMES[name]
        except KeyError:
            raise ParameterError(f"unknown scheme {name!r}; expected one of {sorted(SCHEMES)}") from None
        freqs = ()
        if family == "mfsk":
            if frequencies:
                freqs = tuple(float(f) for f in frequencies[:m1])
            else:
                clock = clock or SymbolClock()
                freqs = tuple((i + 1) / clock.t_s for i in range(m1))
        return cls(name, family, m1, float(amplitude), freqs)

    @property
    def m(self) -> int:
        """Maximum symbol id."""
        return self.n_symbols - 1

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES.get(self.name, self.name)

    def csk_level(self, i: int) -> float:
        return 2.0 * i * self.amplitude / self.m


def waveform(scheme: ModulationScheme, symbol: int, clock: SymbolClock) -> np.ndarray:
    """Per-sample intended emission rate (molecules per sampling period) for one symbol."""
    if not 0 <= symbol <= scheme.m:
        raise ParameterError(f"symbol {symbol} out of range 0..{scheme.m} for {scheme.name}")
    n = clock.samples_per_slot
    A = scheme.amplitude
    if scheme.family == "csk":
        return np.full(n, scheme.csk_level(symbol))
    if scheme.family == "mfsk":
        t = clock.sample_times()
        # clamp round-off below zero at the cosine troughs
        return np.maximum(A + A * np.cos(2.0 * math.pi * scheme.frequencies[symbol] * t), 0.0)
    # OOK: the whole slot budget of a "1" goes out in the first sample
    out = np.zeros(n)
    if symbol:
        out[0] = 2.0 * A * n
    return out


def templates(scheme: ModulationScheme, clock: SymbolClock) -> np.ndarray:
    """All symbol waveforms stacked as rows."""
    return np.stack([waveform(scheme, i, clock) for i in range(scheme.n_symbols)])


def quantize(rates) -> np.ndarray:
    """Residual-carrying rounding of real rates to integer molecule counts.

    The emitted running total tracks ``floor(running real total + 1/2)``, so the
    running difference stays within half a molecule and the slot total is the
    rounded real total.
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ParameterError("emission rates must be finite and >= 0")
    target = np.floor(np.cumsum(rates) + 0.5)
    return np.diff(target, prepend=0.0).astype(np.int64)


def emission_counts(scheme: ModulationScheme, symbols, clock: SymbolClock) -> np.ndarray:
    """Quantized counts for a symbol sequence, shape (n_slots, samples_per_slot)."""
    table = np.stack([quantize(waveform(scheme, i, clock)) for i in range(scheme.n_symbols)])
    return table[np.asarray(symbols, dtype=np.int64)]


def pamr(stream) -> float:
    """Peak-to-average ratio of an emitted per-sample molecule stream."""
    x = np.asarray(stream, dtype=float).ravel()
    if x.size == 0:
        raise ParameterError("PAMR of an empty stream is undefined")
    mean = x.mean()
    if not mean > 0:
        raise ParameterError("PAMR undefined for a stream with zero average")
    return float(x.max() / mean)


def balanced_symbols(n_symbols: int, n_slots: int, rng: np.random.Generator) -> np.ndarray:
    """Random order of a sequence in which every symbol occurs equally often (up to remainder)."""
    seq = np.arange(n_slots) % n_symbols
    rng.shuffle(seq)
    return seq


def write_waveform_csv(path, scheme: ModulationScheme, symbol: int, clock: SymbolClock, header: str | None = None):
    real = waveform(scheme, symbol, clock)
    ints = quantize(real)
    lines = [f"# {header}"] if header else []
    lines.append("sample_index,rate_real,count_int")
    lines += [f"{k},{real[k]:.6f},{int(ints[k])}" for k in range(real.size)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
