import pytest

from gestalk.config import Settings, env_overrides, load_settings, parse_config_file
from gestalk.errors import ConfigError


def test_defaults():
    settings = load_settings(environ={})
    assert settings.threshold == 0.2
    assert settings.inclusive_threshold is False
    assert settings.slack_ms == 500
    assert settings.parallel == 1
    assert settings.max_attempts == 3


def test_config_file_layering(tmp_path):
    cfg = tmp_path / "gestalk.conf"
    cfg.write_text(
        "# tuning\n"
        "threshold = 0.4\n"
        "inclusive_threshold = yes\n"
        "labels = cutting, waving\n"
        "\n"
        "slack_ms=250\n",
        encoding="utf-8",
    )
    settings = load_settings(cfg, environ={})
    assert settings.threshold == 0.4
    assert settings.inclusive_threshold is True
    assert settings.slack_ms == 250
    assert settings.label_list() == ["cutting", "waving"]


def test_env_beats_file_and_flags_beat_env(tmp_path):
    cfg = tmp_path / "gestalk.conf"
    cfg.write_text("threshold = 0.4\nparallel = 2\n", encoding="utf-8")
    env = {"GESTALK_THRESHOLD": "0.6", "GESTALK_SLACK_MS": "100"}
    settings = load_settings(cfg, environ=env, overrides={"threshold": 0.9})
    assert settings.threshold == 0.9  # flag wins
    assert settings.slack_ms == 100  # env wins over default
    assert settings.parallel == 2  # file wins over default


def test_env_overrides_ignores_unrelated_variables():
    assert env_overrides({"GESTALK_NOPE": "1", "PATH": "/bin"}) == {}


@pytest.mark.parametrize(
    "body",
    [
        "mystery = 1\n",
        "threshold\n",
        "threshold = high\n",
        "parallel = 1.5\n",
        "inclusive_threshold = maybe\n",
    ],
)
def test_bad_config_file_rejected(tmp_path, body):
    cfg = tmp_path / "gestalk.conf"
    cfg.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.conf", environ={})


def test_validation_applies_to_merged_values():
    with pytest.raises(ConfigError):
        load_settings(environ={"GESTALK_THRESHOLD": "1.5"})
    with pytest.raises(ConfigError):
        load_settings(environ={}, overrides={"parallel": 0})
    with pytest.raises(ConfigError):
        load_settings(environ={}, overrides={"mystery": 1})


def test_settings_are_immutable():
    with pytest.raises(AttributeError):
        Settings().threshold = 0.5
