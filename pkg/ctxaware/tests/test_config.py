"""
Unit tests for configuration loading.
"""

from pathlib import Path

import pytest
from pydantic import ValidationError

from ctxaware.config import (
    DATA_DIR_ENV,
    Config,
    load_config,
    resolve_data_dir,
    save_config,
)


class TestDefaults:
    """Test default values."""

    def test_presence_defaults(self):
        """Thirty-second scans, two misses to exit."""
        config = Config()
        assert config.presence.scan_period_ms == 30_000
        assert config.presence.exit_misses == 2
        assert not config.presence.notify_unknown

    def test_geofence_default(self):
        assert Config().triggers.geofence_radius_m == 100.0

    def test_invalid_values_rejected(self):
        """Zero misses would exit devices while still visible."""
        with pytest.raises(ValidationError):
            Config.model_validate({"presence": {"exit_misses": 0}})


class TestLoadSave:
    """Test TOML round trip."""

    def test_missing_file_gives_defaults(self, tmp_path):
        assert load_config(tmp_path / "none.toml") == Config()

    def test_save_then_load(self, tmp_path):
        """Saved settings load back unchanged."""
        config = Config.model_validate(
            {"presence": {"scan_period_s": 10.0, "exit_misses": 3}, "sim": {"seed": 42}}
        )
        path = tmp_path / "sub" / "config.toml"
        save_config(config, path)
        assert load_config(path) == config

    def test_partial_file(self, tmp_path):
        """Sections not in the file keep their defaults."""
        path = tmp_path / "config.toml"
        path.write_text('[broker]\nlisten = "0.0.0.0:9000"\n', encoding="utf-8")
        config = load_config(path)
        assert config.broker.listen == "0.0.0.0:9000"
        assert config.presence.exit_misses == 2


class TestDataDir:
    """Test data directory precedence."""

    def test_override_wins(self, monkeypatch):
        monkeypatch.setenv(DATA_DIR_ENV, "/from/env")
        assert resolve_data_dir(Config(), "/explicit") == Path("/explicit")

    def test_env_beats_config(self, monkeypatch):
        monkeypatch.setenv(DATA_DIR_ENV, "/from/env")
        assert resolve_data_dir(Config()) == Path("/from/env")

    def test_config_fallback(self, monkeypatch):
        monkeypatch.delenv(DATA_DIR_ENV, raising=False)
        config = Config.model_validate({"store": {"data_dir": "/from/config"}})
        assert resolve_data_dir(config) == Path("/from/config")
