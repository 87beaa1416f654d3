import pytest

from cvdsim.config import ConfigError, ExperimentConfig, parse_config


def test_empty_file_gives_reference_defaults():
    cfg = parse_config("")
    assert (cfg.D, cfg.r_tn, cfg.r_rn, cfg.r_mm, cfg.d) == (79.4, 10.0, 10.0, 0.0025, 1.0)
    assert (cfg.t_s, cfg.t_ss, cfg.amplitude) == (0.032, 0.002, 90.0)
    assert cfg.clock.samples_per_slot == 16


def test_comments_aliases_and_lists():
    cfg = parse_config("# header\nscheme = qcsk, bmfsk  # two\nsnr = 3,9\nA = 45\nalpha = auto\n")
    assert cfg.schemes == ("qcsk", "bmfsk")
    assert cfg.snr_db == (3.0, 9.0)
    assert cfg.amplitude == 45.0
    assert cfg.alpha_for("qcsk") == 1.0 and cfg.alpha_for("bmfsk") == 0.5


def test_divisibility_rejected_with_location():
    with pytest.raises(ConfigError) as e:
        parse_config("t_s = 0.033\n", source="exp.cfg")
    assert "exp.cfg:1" in str(e.value) and "t_s" in str(e.value)


def test_dt_must_divide_sampling_period():
    with pytest.raises(ConfigError):
        parse_config("dt_sim = 3e-4\n")
    with pytest.raises(ConfigError):
        parse_config("dt_sim = 0.004\n")


def test_override_precedence():
    cfg = parse_config("snr_db = 0,15\nseed = 4\n", {"snr_db": "3,9"})
    assert cfg.snr_db == (3.0, 9.0) and cfg.seed == 4


@pytest.mark.parametrize("text,key", [("bogus = 1\n", "bogus"), ("n_sym = many\n", "n_sym"),
                                      ("crossing = sideways\n", "crossing"), ("scheme = 8psk\n", "schemes"),
                                      ("n_sym = 0\n", "n_sym"), ("D = -1\n", "D")])
def test_bad_entries_name_the_key(text, key):
    with pytest.raises(ConfigError) as e:
        parse_config(text, source="f")
    assert e.value.key == key and "f:1" in str(e.value)


def test_malformed_line():
    with pytest.raises(ConfigError, match="f:2"):
        parse_config("seed = 1\njust words\n", source="f")


def test_fingerprints():
    a = ExperimentConfig()
    assert a.fingerprint() == ExperimentConfig(seed=99, workers=3, output_dir="x").fingerprint()
    assert a.fingerprint() != ExperimentConfig(n_sym=10).fingerprint()
    # signature tables only depend on channel, clock and waveform fields
    assert a.channel_fingerprint() == ExperimentConfig(n_sym=10, snr_db=(1.0,)).channel_fingerprint()
    assert a.channel_fingerprint() != ExperimentConfig(d=2.0).channel_fingerprint()
    assert a.channel_fingerprint() != a.for_scheme("qcsk").channel_fingerprint()


def test_canonical_text_roundtrip():
    cfg = ExperimentConfig(schemes=("qcsk", "ook"), snr_db=(1.5, 2.0), alpha=0.25, seed=5)
    again = parse_config(cfg.canonical_text(), {"seed": "5"})
    assert again.fingerprint() == cfg.fingerprint()


def test_single_scheme_required():
    cfg = ExperimentConfig(schemes=("ook", "bcsk"))
    with pytest.raises(ConfigError):
        cfg.scheme
    assert cfg.for_scheme("ook").scheme == "ook"
