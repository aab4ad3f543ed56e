import logging

import pytest

from pinchnet.config import config_hash, known_keys, load_configs, read_key_value
from pinchnet.exceptions import ConfigError
from pinchnet.scenario import ScenarioConfig


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


def test_read_key_value_skips_comments_and_blank_lines(write_config):
    path = write_config("# deployment\nB = 2\n\nK=3   # three users\n")
    assert read_key_value(path) == {"B": "2", "K": "3"}


@pytest.mark.parametrize(
    "text, message",
    [
        ("B 2\n", "expected 'key = value'"),
        ("B = 2\nwaveguides = 3\n", "unknown key 'waveguides'"),
        ("K = 2\nK = 3\n", "duplicate key 'K'"),
    ],
)
def test_read_key_value_reports_the_line(write_config, text, message):
    path = write_config(text)
    with pytest.raises(ConfigError, match=message) as excinfo:
        read_key_value(path)
    assert f"{path}:" in str(excinfo.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read_key_value(tmp_path / "absent.cfg")


def test_known_keys_cover_every_section():
    keys = known_keys()
    assert {"B", "sigma2_dbm", "hidden_chan", "G9", "epochs", "milestones", "seed"} <= keys


def test_defaults_come_from_settings(settings):
    settings.PINCHNET = {**settings.PINCHNET, "TRAINING": {**settings.PINCHNET["TRAINING"], "epochs": 7}}
    run = load_configs()
    assert run.training.epochs == 7
    assert run.scenario.K == settings.PINCHNET["SCENARIO"]["K"]
    assert run.model.n_waveguides == run.scenario.N


def test_file_values_are_routed_to_their_sections(write_config):
    path = write_config(
        "B = 2\nK = 2\nN = 4\nM = 3\nL = 8\n"
        "hidden_chan = 8\nheads = 2\nresidual = false\n"
        "epochs = 3\nmilestones = 1, 2\nsplit = 6,2,2\nseed = 11\n"
    )
    run = load_configs(path)
    assert (run.scenario.B, run.scenario.K, run.scenario.N, run.scenario.M, run.scenario.L) == (2, 2, 4, 3, 8)
    assert run.model.hidden_chan == 8
    assert run.model.residual is False
    assert (run.model.n_waveguides, run.model.n_pas, run.model.n_elements) == (4, 3, 8)
    assert run.training.epochs == 3
    assert run.training.milestones == (1, 2)
    assert run.training.split == (6.0, 2.0, 2.0)
    assert run.scenario.seed == run.training.seed == 11


def test_overrides_beat_the_file_and_none_is_ignored(write_config):
    path = write_config("epochs = 3\nobjective = sr\n")
    run = load_configs(path, overrides={"epochs": 9, "objective": None})
    assert run.training.epochs == 9
    assert run.training.objective == "sr"


def test_unit_aliases_are_converted(write_config):
    run = load_configs(write_config("sigma2_dbm = -60\nkappa_db = 10\nbeta0_db = -20\n"))
    assert run.scenario.sigma2 == pytest.approx(1e-9)
    assert run.scenario.kappa == pytest.approx(10.0)
    assert run.scenario.beta0 == pytest.approx(1e-2)


def test_alias_and_target_together_are_rejected(write_config):
    with pytest.raises(ConfigError, match="sigma2_dbm"):
        load_configs(write_config("sigma2_dbm = -60\nsigma2 = 1e-9\n"))


@pytest.mark.parametrize(
    "text, field",
    [
        ("K = 9\nN = 8\n", "K"),
        ("hidden_chan = 10\nheads = 4\n", "heads"),
        ("message_passing = false\nresidual = false\n", "residual"),
        ("objective = throughput\n", "objective"),
        ("D = nan\n", "D"),
    ],
)
def test_invalid_values_become_config_errors(write_config, text, field):
    with pytest.raises(ConfigError, match=field):
        load_configs(write_config(text))


def test_stored_scenario_replaces_the_file_section(write_config, caplog, tiny_config):
    path = write_config("K = 3\nhidden_chan = 8\nheads = 2\n")
    with caplog.at_level(logging.WARNING, logger="pinchnet.config"):
        run = load_configs(path, scenario_cfg=tiny_config)
    assert run.scenario is tiny_config
    assert run.model.n_elements == tiny_config.L
    assert "['K']" in caplog.text


def test_config_hash_is_stable_and_sensitive(tiny_config):
    first = config_hash(tiny_config)
    assert first == config_hash(ScenarioConfig(B=2, R=1, K=2, N=2, M=2, L=4))
    assert len(first) == 16
    int(first, 16)
    assert config_hash(tiny_config.replace(seed=1)) != first


def test_run_config_hash_covers_every_section(write_config):
    base = load_configs(write_config("epochs = 3\n", "a.cfg"))
    other = load_configs(write_config("epochs = 4\n", "b.cfg"))
    assert base.config_hash == config_hash(base.scenario, base.model, base.training)
    assert base.config_hash != other.config_hash
