"""Experiment configuration: flat ``key = value`` files, flag overrides, fingerprints.

Grammar (one entry per line)::

    # comment
    key = value          # trailing comments allowed

Values are numbers, comma-separated lists, or bare words.  Unknown keys are
rejected.  Every key has a default, so an empty file yields the reference
configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

from .core import ParameterError, PhysicalParams
from .engine import CROSSING_MODES, default_workers
from .modulation import SCHEMES, ModulationScheme, SymbolClock


class ConfigError(ValueError):
    """Malformed or invalid configuration entry; ``key`` names the offending field when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    # physics
    D: float = 79.4
    r_tn: float = 10.0
    r_rn: float = 10.0
    r_mm: float = 0.0025
    d: float = 1.0
    dt_sim: float = 1e-4
    # engine options
    crossing: str = "endpoint"
    leap_sigma: float = 6.0
    kill_distance: float = 0.0
    # clock and modulation
    t_s: float = 0.032
    t_ss: float = 0.002
    schemes: tuple = ("bcsk",)
    amplitude: float = 90.0
    frequencies: tuple = ()
    # receiver
    dfe: str = "both"
    alpha: float | None = None
    sync_window: int = 2
    thresholds: tuple = ()
    # experiment
    snr_db: tuple = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0)
    n_sym: int = 2000
    repetitions: int = 20
    pilot_repetitions: int = 200
    roc_points: int = 200
    seed: int = 1
    workers: int = field(default_factory=default_workers)
    output_dir: str = "results"

    def __post_init__(self):
        for k in _FLOAT_KEYS:
            object.__setattr__(self, k, float(getattr(self, k)))
        for k in _INT_KEYS:
            object.__setattr__(self, k, int(getattr(self, k)))
        for k in _FLOAT_LIST_KEYS:
            object.__setattr__(self, k, tuple(float(x) for x in getattr(self, k)))
        if isinstance(self.schemes, str):
            object.__setattr__(self, "schemes", (self.schemes,))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", float(self.alpha))
        try:
            PhysicalParams(self.D, self.r_tn, self.r_rn, self.r_mm, self.d, self.dt_sim)
            clock = SymbolClock(self.t_s, self.t_ss)
        except ParameterError as exc:
            msg = str(exc)
            raise ConfigError(msg, msg.split()[0]) from None
        if self.dt_sim > self.t_ss * (1 + 1e-12):
            raise ConfigError(f"dt_sim = {self.dt_sim} must not exceed t_ss = {self.t_ss}", "dt_sim")
        ratio = self.t_ss / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f"t_ss = {self.t_ss} must be an integer multiple of dt_sim = {self.dt_sim}", "t_ss")
        if self.crossing not in CROSSING_MODES:
            raise ConfigError(f"crossing must be one of {sorted(CROSSING_MODES)}", "crossing")
        if self.leap_sigma < 0 or self.kill_distance < 0:
            raise ConfigError("leap_sigma and kill_distance must be >= 0", "leap_sigma" if self.leap_sigma < 0 else "kill_distance")
        if not self.schemes:
            raise ConfigError("at least one scheme is required", "schemes")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; expected one of {sorted(SCHEMES)}", "schemes")
            try:
                ModulationScheme.named(s, self.amplitude, clock, self.frequencies)
            except ParameterError as exc:
                raise ConfigError(str(exc), "frequencies") from None
        if self.dfe not in ("on", "off", "both"):
            raise ConfigError("dfe must be on, off or both", "dfe")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]", "alpha")
        if self.sync_window < 0:
            raise ConfigError("sync_window must be >= 0", "sync_window")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError("thresholds must be strictly increasing", "thresholds")
        if not self.snr_db:
            raise ConfigError("snr_db must list at least one value", "snr_db")
        for name in ("n_sym", "repetitions", "pilot_repetitions", "roc_points", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1", name)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits", "seed")

    # derived views -----------------------------------------------------

    @property
    def physical(self) -> PhysicalParams:
        return PhysicalParams(self.D, self.r_tn, self.r_rn, self.r_mm, self.d, self.dt_sim)

    @property
    def clock(self) -> SymbolClock:
        return SymbolClock(self.t_s, self.t_ss)

    @property
    def scheme(self) -> str:
        if len(self.schemes) != 1:
            raise ConfigError(f"operation needs a single scheme, config has {self.schemes}")
        return self.schemes[0]

    def modulation(self, name: str | None = None) -> ModulationScheme:
        return ModulationScheme.named(name or self.scheme, self.amplitude, self.clock, self.frequencies)

    def for_scheme(self, name: str) -> "ExperimentConfig":
        return dataclasses.replace(self, schemes=(name,))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def alpha_for(self, name: str | None = None) -> float:
        if self.alpha is not None:
            return self.alpha
        return 0.5 if SCHEMES[name or self.scheme][0] == "mfsk" else 1.0

    # fingerprints -------------------------------------------------------

    def canonical_text(self, keys=None) -> str:
        keys = keys or [k for k in KEYS if k not in _NON_SEMANTIC]
        return "\n".join(f"{k} = {_format(getattr(self, k))}" for k in keys) + "\n"

    def fingerprint(self) -> str:
        """Hash of every field that can change results (not seed, workers or paths)."""
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def channel_fingerprint(self) -> str:
        """Hash of the fields that determine pilot signatures for the configured scheme."""
        text = self.canonical_text(_CHANNEL_KEYS) + f"scheme = {self.scheme}\n"
        return hashlib.sha256(text.encode()).hexdigest()[:16]


KEYS = [f.name for f in dataclasses.fields(ExperimentConfig)]
_NON_SEMANTIC = {"seed", "workers", "output_dir"}
_CHANNEL_KEYS = ["D", "r_tn", "r_rn", "r_mm", "d", "dt_sim", "crossing", "leap_sigma", "kill_distance",
                 "t_s", "t_ss", "amplitude", "frequencies"]

_FLOAT_KEYS = {"D", "r_tn", "r_rn", "r_mm", "d", "dt_sim", "leap_sigma", "kill_distance", "t_s", "t_ss",
               "amplitude"}
_INT_KEYS = {"sync_window", "n_sym", "repetitions", "pilot_repetitions", "roc_points", "seed", "workers"}
_FLOAT_LIST_KEYS = {"frequencies", "thresholds", "snr_db"}
_WORD_KEYS = {"crossing", "dfe", "output_dir"}


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "auto"
    return str(v)


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {s!r}")
    return v


def _parse_int(s: str) -> int:
    f = float(s)
    if f != int(f):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(s) if s.strip().lstrip("+-").isdigit() else int(f)


def parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _FLOAT_KEYS:
        return _parse_float(raw)
    if key in _INT_KEYS:
        return _parse_int(raw)
    if key in _FLOAT_LIST_KEYS:
        if raw.lower() in ("", "none", "auto"):
            return ()
        return tuple(_parse_float(x) for x in raw.split(","))
    if key == "schemes":
        return tuple(x.strip().lower() for x in raw.split(",") if x.strip())
    if key == "alpha":
        return None if raw.lower() == "auto" else _parse_float(raw)
    if key in _WORD_KEYS:
        return raw if key == "output_dir" else raw.lower()
    raise KeyError(key)


ALIASES = {"scheme": "schemes", "snr": "snr_db", "nsym": "n_sym", "reps": "repetitions", "A": "amplitude"}


def parse_config(text: str = "", overrides: dict | None = None, source: str = "<config>") -> ExperimentConfig:
    """Parse ``key = value`` text, apply ``overrides`` (flag values, as strings), validate."""
    values = {}
    where = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (p.strip() for p in body.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key)
        try:
            values[key] = parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}", key) from None
        where[key] = f"{source}:{lineno}"
    for key, raw in (overrides or {}).items():
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(f"override: unknown key {key!r}", key)
        try:
            values[key] = parse_value(key, str(raw))
        except ValueError as exc:
            raise ConfigError(f"override: bad value for {key!r}: {exc}", key) from None
        where[key] = "override"
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        loc = where.get(exc.key, f"{source} (default)")
        raise ConfigError(f"{loc}: key {exc.key!r}: {exc}", exc.key) from None
