import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, optimize

from cvdsim.core import (ParameterError, PhysicalParams, concentration, first_hit_cdf_1d, first_hit_pdf_1d,
                         gaussian_step)
from cvdsim.rng import RngStream


def test_step_sd_at_sampling_period():
    assert PhysicalParams().step_sd(0.002) == pytest.approx(0.5635601121442148, rel=1e-12)
    assert math.sqrt(2 * 79.4 * 0.002) == pytest.approx(0.563560, abs=1e-6)


def test_zero_dt_gives_zero_displacement():
    assert np.array_equal(gaussian_step(RngStream(1), 79.4, 0.0), np.zeros(3))


def test_step_variance_over_a_million_draws():
    disp = gaussian_step(RngStream(2024), 79.4, 0.002, n=3, count=1_000_000 // 3 + 1)
    x = disp.ravel()[:1_000_000]
    assert 0.3176 * 0.99 <= x.var() <= 0.3176 * 1.01
    assert abs(x.mean()) < 4 * math.sqrt(0.3176 / x.size)


def test_step_shapes_and_stream_advance():
    s = RngStream(9)
    assert gaussian_step(s, 1.0, 1.0, n=1).shape == (1,)
    assert s.normal_counter == 1
    assert gaussian_step(s, 1.0, 1.0, n=3, count=4).shape == (4, 3)
    assert s.normal_counter == 13


@pytest.mark.parametrize("kw", [dict(D=0.0, dt=1.0), dict(D=1.0, dt=-1.0), dict(D=float("nan"), dt=1.0)])
def test_step_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        gaussian_step(RngStream(0), **kw)


def test_concentration_unit_peak():
    assert concentration(0.0, 1.0, 1 / (4 * math.pi), 3) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("n", [1, 3])
def test_concentration_integrates_to_one(n):
    D, t = 79.4, 0.01
    scale = math.sqrt(4 * D * t)
    if n == 1:
        val, _ = integrate.quad(lambda r: 2 * concentration(r, t, D, 1), 0, 40 * scale, epsabs=1e-12)
    else:
        val, _ = integrate.quad(lambda r: 4 * math.pi * r * r * concentration(r, t, D, 3), 0, 40 * scale,
                                epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_concentration_matches_arbitrary_precision():
    mpmath.mp.dps = 40
    r, t, D = mpmath.mpf(1), mpmath.mpf("0.002"), mpmath.mpf("79.4")
    ref = (4 * mpmath.pi * D * t) ** mpmath.mpf(-1.5) * mpmath.exp(-r * r / (4 * D * t))
    assert concentration(1.0, 0.002, 79.4, 3) == pytest.approx(float(ref), rel=1e-13)


def test_concentration_rejects_nonpositive_time():
    with pytest.raises(ParameterError):
        concentration(1.0, 0.0, 1.0)


def test_first_hit_pdf_mode():
    D, r0 = 79.4, 1.0
    res = optimize.minimize_scalar(lambda t: -first_hit_pdf_1d(r0, t, D), bounds=(1e-4, 0.02), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.x == pytest.approx(r0 * r0 / (6 * D), rel=1e-5)
    assert res.x == pytest.approx(0.00209908, rel=1e-5)


def test_first_hit_pdf_normalized():
    D, r0 = 79.4, 1.0
    # t = u^2 substitution tames the t^(-3/2) tail
    val, _ = integrate.quad(lambda u: 2 * u * first_hit_pdf_1d(r0, u * u, D), 1e-6, np.inf, limit=500)
    assert val == pytest.approx(1.0, abs=1e-4)


def test_first_hit_pdf_positive_and_cdf_consistent():
    t = np.logspace(-5, 3, 200)
    pdf = first_hit_pdf_1d(1.0, t, 79.4)
    assert np.all(pdf > 0)
    for a, b in [(0.001, 0.01), (0.01, 0.1)]:
        val, _ = integrate.quad(lambda s: first_hit_pdf_1d(1.0, s, 79.4), a, b)
        assert first_hit_cdf_1d(1.0, b, 79.4) - first_hit_cdf_1d(1.0, a, 79.4) == pytest.approx(val, rel=1e-9)
    assert first_hit_cdf_1d(1.0, 0.0, 79.4) == 0.0


@pytest.mark.parametrize("name", ["D", "r_tn", "r_rn", "r_mm", "d", "dt_sim"])
def test_physical_params_reject_nonpositive(name):
    with pytest.raises(ParameterError):
        PhysicalParams(**{name: 0.0})
