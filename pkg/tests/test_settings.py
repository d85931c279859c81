import pytest

from utils import settings


def test_environment_wins_over_defaults(monkeypatch):
    monkeypatch.setenv("SPANEX_LOG_LEVEL", "debug")
    assert settings.get("SPANEX_LOG_LEVEL") == "debug"
    monkeypatch.delenv("SPANEX_LOG_LEVEL")
    assert settings.get("SPANEX_LOG_LEVEL") == "INFO"


def test_caller_default_before_builtin(monkeypatch):
    monkeypatch.delenv("SPANEX_DTYPE", raising=False)
    assert settings.get("SPANEX_DTYPE") == "float64"
    assert settings.get("SPANEX_DTYPE", default="float32") == "float32"


def test_missing_setting(monkeypatch):
    monkeypatch.delenv("SPANEX_NOT_A_SETTING", raising=False)
    with pytest.raises(KeyError, match="SPANEX_NOT_A_SETTING"):
        settings.get("SPANEX_NOT_A_SETTING")


def test_get_int(monkeypatch):
    monkeypatch.delenv("SPANEX_MAX_LEN", raising=False)
    assert settings.get_int("SPANEX_MAX_LEN") == 128
    monkeypatch.setenv("SPANEX_MAX_LEN", "256")
    assert settings.get_int("SPANEX_MAX_LEN") == 256
    monkeypatch.setenv("SPANEX_MAX_LEN", "long")
    with pytest.raises(ValueError, match="integer"):
        settings.get_int("SPANEX_MAX_LEN")
