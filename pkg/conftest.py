"""
Root conftest — global safety nets for ALL test directories.
Keeps every test away from a developer's real config.toml.
"""
import pytest


@pytest.fixture(autouse=True)
def _isolated_config(tmp_path, monkeypatch):
    """Point $RARESIM_CONFIG_DIR at an empty dir and drop the cached config."""
    from raresim import config

    monkeypatch.setenv(config.ENV_VAR, str(tmp_path / "no-config"))
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(config, "_CONFIG", None)
    yield
    config._CONFIG = None
