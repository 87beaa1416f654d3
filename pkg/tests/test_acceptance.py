"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The SNR-sweep criteria share one set of channel runs per scheme through a
session fixture.  The full-scale error-floor check only runs with
CVD_SIM_LONG=1.
"""

import math
import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy import stats

from conftest import ACCEPTANCE_LINES
from cvdsim.config import ExperimentConfig
from cvdsim.core import first_hit_cdf_1d
from cvdsim.engine import chi2_first_hit, validate_1d
from cvdsim.link import calibrate_signatures, run_link, write_run_csv
from cvdsim.metrics import pd_at_pf, scheme_pamr, ser_slope, snr_sweep
from cvdsim.modulation import ModulationScheme, SymbolClock, templates
from cvdsim.receiver import correlation_scores, detect_correlation, detect_threshold, dfe_filter, DetectorConfig

SNRS = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0)
SCHEMES = ("ook", "bcsk", "qcsk", "bmfsk", "qmfsk")
CLOCK = SymbolClock()


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- shared sweeps -----------------------------------------------------------

_SWEEP_SECONDS = {}


@pytest.fixture(scope="session")
def sweeps():
    out = {}
    for name in SCHEMES:
        cfg = ExperimentConfig(schemes=(name,), n_sym=500, repetitions=5, snr_db=SNRS)
        binary = cfg.modulation().n_symbols == 2
        t0 = time.perf_counter()
        out[name] = snr_sweep(cfg, roc_snrs=(3.0, 9.0) if binary else ())
        _SWEEP_SECONDS[name] = time.perf_counter() - t0
    return out


# -- 1: one-dimensional first-passage oracle ---------------------------------

def test_criterion_1_first_passage_oracle():
    t0 = time.perf_counter()
    hist = validate_1d(1.0, 79.4, 1e-5, 100_000, 0.1, bins=50, seed=2024)
    elapsed = time.perf_counter() - t0
    stat, dof, p = chi2_first_hit(hist)
    analytic = float(first_hit_cdf_1d(1.0, 0.1, 79.4))
    se = math.sqrt(analytic * (1 - analytic) / hist.n_particles)
    z = (hist.hit_fraction - analytic) / se
    ok = len(hist.counts) >= 20 and p > 0.01 and abs(z) < 3 and elapsed < 60
    report("1", ok, f"chi2={stat:.1f} dof={dof} p={p:.3f}; hit fraction {hist.hit_fraction:.5f} vs "
                    f"{analytic:.5f} (z={z:+.2f}); {elapsed:.1f}s")


# -- 2: conservation and determinism ---------------------------------------

def test_criterion_2_conservation_and_determinism(tmp_path):
    cfg = ExperimentConfig(schemes=("bcsk",), n_sym=100)
    t0 = time.perf_counter()
    a = run_link(cfg, 17, workers=1)
    b = run_link(cfg, 17, workers=8)
    elapsed = time.perf_counter() - t0
    write_run_csv(tmp_path / "w1.csv", a)
    write_run_csv(tmp_path / "w8.csv", b)
    same = (tmp_path / "w1.csv").read_bytes() == (tmp_path / "w8.csv").read_bytes()
    conserved = all(r.n_emitted == r.n_received + r.n_free for r in (a, b))
    ok = same and conserved and elapsed < 120
    report("2", ok, f"emitted {a.n_emitted} = absorbed {a.n_received} + free {a.n_free}; "
                    f"bytes identical for workers 1/8: {same}; {elapsed:.1f}s")


# -- 3: DFE exactness on synthetic two-tap slots ----------------------------

@pytest.fixture(scope="session")
def tables(sweeps):
    return {name: sweeps[name].table for name in SCHEMES}


_DFE_WORST = {}


def test_criterion_3_dfe_exactness(tables):
    @settings(max_examples=1000, deadline=None, suppress_health_check=list(HealthCheck), database=None)
    @given(name=st.sampled_from(SCHEMES), data=st.data())
    def check(name, data):
        t = tables[name]
        a = data.draw(st.integers(0, t.n_symbols - 1))
        b = data.draw(st.integers(0, t.n_symbols - 1))
        slot = t.sig0[a] + t.sig1[b]
        err = np.abs(dfe_filter(slot, b, t, 1.0) - t.sig0[a])
        bound = 3 * t.sig0_sd[a] / math.sqrt(t.repetitions)
        _DFE_WORST[name] = max(_DFE_WORST.get(name, 0.0), float(err.max()))
        assert np.all(err <= bound + 1e-9)

    try:
        check()
        ok, detail = True, "1000 cases"
    except AssertionError as exc:
        ok, detail = False, f"counterexample: {exc}"
    worst = max(_DFE_WORST.values()) if _DFE_WORST else float("nan")
    report("3", ok, f"{detail}; max |filtered - sig0| = {worst:.2e} (bound 3*sd/sqrt(reps))")


# -- 4: SER trend, DFE benefit, ordering -------------------------------------

def _per_rep(res, snr, dfe):
    return np.array(res.point(snr, dfe).per_rep)


def test_criterion_4a_ser_slope(sweeps):
    slopes = {(n, d): ser_slope([p for p in sweeps[n].points if p.dfe == d]) for n in SCHEMES for d in (False, True)}
    ok = all(s <= 0 for s in slopes.values())
    worst = max(slopes, key=slopes.get)
    report("4a", ok, f"max SER/dB slope {slopes[worst]:+.2e} ({worst[0]}, dfe={worst[1]}); "
                     f"sweep time {sum(_SWEEP_SECONDS.values()):.0f}s")


def test_criterion_4b_dfe_benefit(sweeps):
    details, ok = [], True
    for name in ("bcsk", "qcsk"):
        for snr in SNRS:
            if snr < 3:
                continue
            on, off = _per_rep(sweeps[name], snr, True), _per_rep(sweeps[name], snr, False)
            diff = on - off
            if np.all(diff == 0):
                p = 1.0
            elif np.std(diff) == 0:
                p = 0.0 if diff[0] > 0 else 1.0
            else:
                p = stats.ttest_rel(on, off, alternative="greater").pvalue
            passed = p >= 0.05
            ok &= passed
            details.append(f"{name}@{snr:g}dB {on.mean():.4f}<={off.mean():.4f}" + ("" if passed else " (rejected)"))
    report("4b", ok, "; ".join(details))


def test_criterion_4c_high_snr_ordering(sweeps):
    top = SNRS[-1]
    parts, ok = [], True
    for dfe in (True, False):
        v = [sweeps[n].point(top, dfe).ser for n in ("ook", "bcsk", "qcsk")]
        ok &= v[0] <= v[1] <= v[2]
        parts.append(f"dfe={int(dfe)}: OOK {v[0]:.4f} <= BCSK {v[1]:.4f} <= QCSK {v[2]:.4f}")
    total = sum(_SWEEP_SECONDS.values())
    ok &= total < 1800
    report("4c", ok, f"at {top:g} dB " + "; ".join(parts) + f"; sweeps {total:.0f}s")


# -- 5: full-scale error floors (soft) -------------------------------------

@pytest.mark.long
def test_criterion_5_error_floors_soft():
    if os.environ.get("CVD_SIM_LONG") != "1":
        ACCEPTANCE_LINES.append("[SKIP] criterion 5: full-scale soft targets; set CVD_SIM_LONG=1")
        pytest.skip("set CVD_SIM_LONG=1 for the full-scale run")
    floors = {}
    for name in ("bcsk", "qcsk"):
        cfg = ExperimentConfig(schemes=(name,), n_sym=2000, repetitions=20, snr_db=SNRS)
        res = snr_sweep(cfg)
        floors[name] = {d: res.point(SNRS[-1], d).ser for d in (False, True)}
    targets = [("BCSK no-DFE", floors["bcsk"][False], 0.06, 0.03),
               ("QCSK DFE", floors["qcsk"][True], 0.07, 0.04),
               ("QCSK no-DFE", floors["qcsk"][False], 0.4, 0.1)]
    parts = [f"{lab} {v:.4f} (target {c}+-{tol}{'' if abs(v - c) <= tol else ', miss'})" for lab, v, c, tol in targets]
    hit = all(abs(v - c) <= tol for _, v, c, tol in targets)
    # soft criterion: a miss is reported for investigation, not failed
    line = f"[{'PASS' if hit else 'SOFT-MISS'}] criterion 5: " + "; ".join(parts)
    ACCEPTANCE_LINES.append(line)
    print(line)


# -- 6: ROC ordering -----------------------------------------------------------

PD_TARGETS = {3.0: {"bmfsk": 0.3, "bcsk": 0.98, "ook": 1.0}, 9.0: {"bmfsk": 0.72, "bcsk": 1.0, "ook": 1.0}}


def test_criterion_6_roc(sweeps):
    ok, parts, soft = True, [], []
    for snr in (3.0, 9.0):
        pd = {}
        for name in ("ook", "bcsk", "bmfsk"):
            s, truth = sweeps[name].roc_data[snr]
            pd[name] = pd_at_pf(s, truth, 0.05)
            roc = sweeps[name].roc[snr]
            ok &= all(np.diff([p.pd1 for p in roc]) <= 0) and all(np.diff([p.pf1 for p in roc]) <= 0)
            if abs(pd[name] - PD_TARGETS[snr][name]) > 0.15:
                soft.append(f"{name}@{snr:g}dB")
        ok &= pd["ook"] >= pd["bcsk"] >= pd["bmfsk"]
        parts.append(f"{snr:g} dB Pd OOK {pd['ook']:.3f} >= BCSK {pd['bcsk']:.3f} >= BMFSK {pd['bmfsk']:.3f}")
    note = "soft +-0.15 targets met" if not soft else "soft targets missed: " + ",".join(soft)
    report("6", ok, "; ".join(parts) + f"; staircases monotone; {note}")


# -- 7: PAMR -------------------------------------------------------------------

def test_criterion_7_pamr():
    cfg = ExperimentConfig()
    got = {n: scheme_pamr(cfg, n, 2000) for n in ("ook", "bcsk", "bmfsk")}
    want = {"ook": 32.0, "bcsk": 2.0, "bmfsk": 2.0}
    ok = all(abs(got[n] - want[n]) <= 0.5 for n in want)
    report("7", ok, ", ".join(f"{n} {got[n]:.4f} (want {want[n]:g})" for n in want))


# -- 8: detector properties ------------------------------------------------------

def test_criterion_8_detector_properties():
    n = {"monotone": 0, "scale": 0, "dc": 0}

    @settings(max_examples=1000, deadline=None, database=None)
    @given(s1=st.floats(-1e5, 1e5), s2=st.floats(-1e5, 1e5),
           thr=st.lists(st.floats(-1e5, 1e5), min_size=1, max_size=3, unique=True))
    def monotone(s1, s2, thr):
        thr = sorted(thr)
        lo, hi = min(s1, s2), max(s1, s2)
        n["monotone"] += 1
        assert detect_threshold([lo], thr) <= detect_threshold([hi], thr)

    @settings(max_examples=1000, deadline=None, database=None)
    @given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["bmfsk", "qmfsk"]),
           scale=st.floats(1e-3, 1e3), lag=st.integers(0, 3))
    def scale_invariant(seed, name, scale, lag):
        y = np.random.default_rng(seed).normal(90, 60, 16)
        base = ModulationScheme.named(name, 90.0, CLOCK)
        scaled = ModulationScheme.named(name, 90.0 * scale, CLOCK)
        cfg = DetectorConfig("correlation", sync_window=lag)
        n["scale"] += 1
        assert detect_correlation(y, base, CLOCK, cfg) == detect_correlation(y, scaled, CLOCK, cfg)

    @settings(max_examples=1000, deadline=None, database=None)
    @given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["bmfsk", "qmfsk"]), shift=st.floats(-1e3, 1e3))
    def dc_invariant(seed, name, shift):
        # default grid: every template has the same sum, so a DC shift moves all lag-0 scores equally
        y = np.random.default_rng(seed).normal(90, 60, 16)
        s = ModulationScheme.named(name, 90.0, CLOCK)
        cfg = DetectorConfig("correlation", sync_window=0)
        sc = correlation_scores(y, templates(s, CLOCK), 0)[:, 0]
        top2 = np.sort(sc)[-2:]
        if top2[1] - top2[0] < 1e-6 * max(1.0, np.abs(sc).max()):
            return          # numerically tied; tie-break may legitimately move
        n["dc"] += 1
        assert detect_correlation(y, s, CLOCK, cfg) == detect_correlation(y + shift, s, CLOCK, cfg)

    ok, fail = True, ""
    for fn in (monotone, scale_invariant, dc_invariant):
        try:
            fn()
        except AssertionError as exc:
            ok, fail = False, f"; {fn.__name__} failed: {exc}"
    ok &= min(n.values()) >= 1000
    report("8", ok, f"cases: threshold monotone {n['monotone']}, template scaling {n['scale']}, "
                    f"DC shift {n['dc']}{fail}")
