import numpy as np
import pytest

from cvdsim.config import ConfigError, ExperimentConfig
from cvdsim.engine import Emission, Geometry, simulate_hits
from cvdsim.link import calibrate_signatures, pilot_run, run_link, write_run_csv
from cvdsim.receiver import CalibrationError, calibrate_noise

CFG = ExperimentConfig(schemes=("bcsk",), n_sym=40, workers=1)

# Mean received total in the "0" slots of an alternating 1,0,1,0 BCSK stream
# (400 symbols, seed 5, default engine).
ISI_ZERO_SLOT_MEAN = 702.965

# BCSK symbol 1, 20 pilot repetitions, base seed 3.
PILOT_SIG0 = [17.45, 53.2, 84.65, 108.65, 119.25, 130.35, 136.3, 145.75, 144.4, 154.9, 152.3, 159.8, 158.9, 161.1,
              164.05, 168.3]
PILOT_SIG1 = [149.45, 113.2, 81.9, 65.4, 51.1, 40.7, 33.4, 25.85, 21.4, 17.3, 15.3, 12.5, 11.05, 9.4, 7.95, 8.5]


def test_all_zero_stream_receives_nothing():
    run = run_link(CFG, 1, symbols=np.zeros(10, int))
    assert run.n_emitted == 0 and np.all(run.received == 0)
    with pytest.raises(CalibrationError):
        calibrate_noise(run)


def test_single_ook_symbol_matches_simulate_hits():
    cfg = CFG.replace(schemes=("ook",))
    run = run_link(cfg, 77, symbols=[1])
    g = Geometry.from_params(cfg.physical)
    hits = simulate_hits([Emission(0.0, 2880, g.release_point)], g, cfg.physical, 0.032 - cfg.dt_sim, seed=77,
                         workers=1)
    assert run.received[0].sum() == len(hits)
    sample = np.floor(hits.hit_time / cfg.t_ss + 1e-9).astype(int)
    assert np.array_equal(np.bincount(sample, minlength=16), run.received[0])


def test_conservation_and_shapes():
    run = run_link(CFG, 3)
    assert run.sent.shape == run.received.shape == (40, 16)
    assert run.n_received + run.n_free == run.n_emitted
    assert np.all(run.received >= 0)


def test_determinism_and_worker_independence():
    a = run_link(CFG, 9, workers=1)
    b = run_link(CFG, 9, workers=4)
    assert np.array_equal(a.symbols, b.symbols) and np.array_equal(a.received, b.received)
    c = run_link(CFG, 10, workers=1)
    assert not np.array_equal(a.received, c.received)


def test_causality_under_suffix_change():
    prefix = [1, 0, 1, 1, 0]
    a = run_link(CFG, 4, symbols=prefix + [0, 0, 0])
    b = run_link(CFG, 4, symbols=prefix + [1, 1, 1])
    assert np.array_equal(a.received[:5], b.received[:5])
    assert b.received[5:].sum() > a.received[5:].sum()


def test_symbol_range_checked():
    with pytest.raises(ConfigError):
        run_link(CFG, 1, symbols=[0, 2])


def test_alternating_bcsk_shows_isi():
    run = run_link(CFG.replace(n_sym=100), 5, symbols=(np.arange(100) + 1) % 2)
    tot = run.received.sum(axis=1)
    zero = tot[run.symbols == 0]
    assert zero.mean() > 0
    assert abs(zero.mean() - ISI_ZERO_SLOT_MEAN) < 0.03 * ISI_ZERO_SLOT_MEAN
    assert tot[run.symbols == 1].mean() > 2 * zero.mean()


def test_a_rx_regression():
    run = run_link(CFG.replace(n_sym=50), 12)
    assert calibrate_noise(run) == 92.085


def test_pilot_zero_symbol():
    p = pilot_run(CFG, 0, 5, seed=1)
    assert np.all(p.sig0 == 0) and np.all(p.sig1 == 0) and p.emitted == 0


def test_pilot_golden_bcsk_one():
    p = pilot_run(CFG, 1, 20, seed=3)
    assert p.sig0.tolist() == pytest.approx(PILOT_SIG0, abs=1e-9)
    assert p.sig1.tolist() == pytest.approx(PILOT_SIG1, abs=1e-9)
    assert p.sig0.sum() + p.sig1.sum() <= p.emitted


def test_pilot_independent_of_workers():
    a = pilot_run(CFG, 1, 4, seed=2, workers=1)
    b = pilot_run(CFG, 1, 4, seed=2, workers=3)
    assert np.array_equal(a.sig0, b.sig0) and np.array_equal(a.sig1_sd, b.sig1_sd)


def test_calibrated_table_shape_and_fingerprint():
    t = calibrate_signatures(CFG.replace(schemes=("qcsk",)), seed=1, n_repetitions=3)
    assert t.sig0.shape == (4, 16) and t.repetitions == 3
    sums = t.sig0.sum(axis=1)
    assert sums[0] == 0 and np.all(np.diff(sums) > 0)
    assert t.fingerprint == CFG.replace(schemes=("qcsk",)).channel_fingerprint()


def test_run_csv(tmp_path):
    run = run_link(CFG.replace(n_sym=3), 1, symbols=[1, 0, 1])
    p = tmp_path / "run.csv"
    write_run_csv(p, run)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# fingerprint=") and "seed=1" in lines[0]
    assert lines[1] == "slot,sample,sent_count,received_count"
    assert len(lines) == 2 + 48
    assert lines[2].startswith("0,0,180,")
