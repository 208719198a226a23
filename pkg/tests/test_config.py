"""Tests for voltspy.config: environment settings and per-run configuration."""

import logging
from pathlib import Path

import pytest

from voltspy.config import (
    DEFAULT_MAX_ROWS,
    RunConfig,
    Settings,
    get_log_level_int,
    parse_int_list,
)


@pytest.fixture
def clean_env(monkeypatch):
    for name in ("VOLTSPY_THREADS", "VOLTSPY_MAX_ROWS", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


class TestSettings:
    def test_defaults(self, clean_env):
        settings = Settings.from_env()
        assert settings.threads >= 1
        assert settings.max_rows == DEFAULT_MAX_ROWS
        assert settings.log_level == "INFO"

    def test_reads_overrides(self, clean_env):
        clean_env.setenv("VOLTSPY_THREADS", "3")
        clean_env.setenv("VOLTSPY_MAX_ROWS", "500")
        clean_env.setenv("LOG_LEVEL", "debug")
        settings = Settings.from_env()
        assert settings.threads == 3
        assert settings.max_rows == 500
        assert settings.log_level == "DEBUG"

    def test_non_integer_threads_raises(self, clean_env):
        clean_env.setenv("VOLTSPY_THREADS", "many")
        with pytest.raises(ValueError, match="VOLTSPY_THREADS"):
            Settings.from_env()

    def test_zero_max_rows_raises(self, clean_env):
        clean_env.setenv("VOLTSPY_MAX_ROWS", "0")
        with pytest.raises(ValueError, match="VOLTSPY_MAX_ROWS"):
            Settings.from_env()

    def test_unknown_log_level_raises(self, clean_env):
        clean_env.setenv("LOG_LEVEL", "CHATTY")
        with pytest.raises(ValueError, match="LOG_LEVEL"):
            Settings.from_env()


class TestGetLogLevelInt:
    def test_configured_level(self, clean_env):
        clean_env.setenv("LOG_LEVEL", "warning")
        assert get_log_level_int() == logging.WARNING

    def test_invalid_falls_back_to_info(self, clean_env):
        clean_env.setenv("LOG_LEVEL", "CHATTY")
        assert get_log_level_int() == logging.INFO


class TestRunConfig:
    def test_synth_needs_no_data_dir(self, tmp_path):
        config = RunConfig(command="synth", out_dir=tmp_path)
        assert config.data_dir is None
        assert config.seed == 42

    def test_read_command_requires_existing_dir(self, tmp_path):
        with pytest.raises(ValueError, match="does not exist"):
            RunConfig(command="attack", data_dir=tmp_path / "missing")

    def test_read_command_with_existing_dir(self, tmp_path):
        config = RunConfig(command="attack", data_dir=tmp_path, objectives=("vehicle",))
        assert config.objectives == ("vehicle",)

    def test_fraction_out_of_range_raises(self, tmp_path):
        with pytest.raises(ValueError, match="--fraction"):
            RunConfig(command="attack", data_dir=tmp_path, fraction=0.0)

    def test_non_positive_size_raises(self, tmp_path):
        with pytest.raises(ValueError, match="--sizes"):
            RunConfig(command="defend", data_dir=tmp_path, sizes=(10, 0))

    def test_zero_window_raises(self, tmp_path):
        with pytest.raises(ValueError, match="--window"):
            RunConfig(command="aggregate", data_dir=tmp_path, out_dir=Path("x"), window=0)


class TestParseIntList:
    def test_parses_with_spaces(self):
        assert parse_int_list("10, 20,30", "--sizes") == (10, 20, 30)

    def test_skips_empty_parts(self):
        assert parse_int_list("5,,6,", "--sizes") == (5, 6)

    def test_non_integer_names_flag(self):
        with pytest.raises(ValueError, match="--sizes"):
            parse_int_list("10,ten", "--sizes")

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="must not be empty"):
            parse_int_list(" , ", "--sizes")
