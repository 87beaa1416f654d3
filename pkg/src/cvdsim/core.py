"""Physical parameters, Gaussian displacement sampling and closed-form diffusion formulas.

Units throughout the package: micrometers, seconds, micrometers^2 / second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .rng import RngStream


class ParameterError(ValueError):
    """A physical or numerical parameter is out of its admissible range."""


def _check_finite_positive(name: str, value: float, allow_zero: bool = False) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ParameterError(f"{name} must be {bound}, got {value}")
    return value


@dataclass(frozen=True)
class PhysicalParams:
    D: float = 79.4         # diffusion coefficient [um^2/s]
    r_tn: float = 10.0      # transmitter radius [um]
    r_rn: float = 10.0      # receiver radius [um]
    r_mm: float = 0.0025    # messenger molecule radius [um]
    d: float = 1.0          # surface-to-surface gap [um]
    dt_sim: float = 1e-4    # Monte Carlo step [s]

    def __post_init__(self):
        for name in ("D", "r_tn", "r_rn", "r_mm", "d", "dt_sim"):
            _check_finite_positive(name, getattr(self, name))

    def step_sd(self, dt: float | None = None) -> float:
        """Per-axis displacement standard deviation for one step."""
        return math.sqrt(2.0 * self.D * (self.dt_sim if dt is None else dt))


def gaussian_step(stream: RngStream, D: float, dt: float, n: int = 3, count: int | None = None) -> np.ndarray:
    """Draw a Brownian displacement with each component ~ N(0, 2 D dt).

    With ``count`` given, returns ``count`` consecutive displacements as a
    ``(count, n)`` array; otherwise a single vector of length ``n``.
    """
    D = _check_finite_positive("D", D)
    dt = _check_finite_positive("dt", dt, allow_zero=True)
    if n not in (1, 2, 3):
        raise ParameterError(f"dimension must be 1, 2 or 3, got {n}")
    rows = 1 if count is None else int(count)
    z = stream.normals(rows * n).reshape(rows, n)
    disp = math.sqrt(2.0 * D * dt) * z
    return disp[0] if count is None else disp


def concentration(r, t: float, D: float, n: int = 3):
    """Free-space point-source density (4 pi D t)^(-n/2) exp(-r^2 / 4 D t), unit mass."""
    t = float(t)
    if not t > 0:
        raise ParameterError(f"t must be > 0, got {t}")
    D = _check_finite_positive("D", D)
    r = np.asarray(r, dtype=float)
    out = (4.0 * math.pi * D * t) ** (-n / 2.0) * np.exp(-r * r / (4.0 * D * t))
    return out if out.ndim else float(out)


def _check_domain(r0, t):
    if np.any(np.asarray(r0) <= 0):
        raise ParameterError("r0 must be > 0")
    if np.any(np.asarray(t) <= 0):
        raise ParameterError("t must be > 0")


def first_hit_pdf_1d(r0: float, t, D: float):
    """First-passage density r0 / sqrt(4 pi D t^3) exp(-r0^2 / 4 D t) for a 1-D walker."""
    _check_domain(r0, t)
    D = _check_finite_positive("D", D)
    t = np.asarray(t, dtype=float)
    out = r0 / np.sqrt(4.0 * math.pi * D * t**3) * np.exp(-r0 * r0 / (4.0 * D * t))
    return out if out.ndim else float(out)


def first_hit_cdf_1d(r0: float, t, D: float):
    """Probability of having hit the absorber by time t: erfc(r0 / sqrt(4 D t)); 0 at t = 0."""
    if r0 <= 0:
        raise ParameterError("r0 must be > 0")
    D = _check_finite_positive("D", D)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("t must be >= 0")
    with np.errstate(divide="ignore"):
        out = np.where(t > 0, special.erfc(r0 / np.sqrt(4.0 * D * np.where(t > 0, t, 1.0))), 0.0)
    return out if out.ndim else float(out)
