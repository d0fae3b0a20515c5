import json

import pytest

from app.errors import ConfigError
from config import DEV_FIELD_KEY, CliConfig, load_cli_config


def write(tmp_path, data):
    path = tmp_path / "idfabric.json"
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def test_file_overrides_defaults(tmp_path):
    config = load_cli_config(write(tmp_path, {
        "snapshot_path": str(tmp_path / "s.json"),
        "audit_log_path": str(tmp_path / "a.jsonl"),
        "deletion_grace_days": 30,
        "domain_admins": ["adm-0001"],
    }))
    assert config.deletion_grace_days == 30
    assert config.domain_admins == ("adm-0001",)


@pytest.mark.parametrize("data", [{"snapshot_pth": "x"}, "[1, 2]", "{not json"])
def test_bad_config_files(tmp_path, data):
    with pytest.raises(ConfigError):
        load_cli_config(write(tmp_path, data))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_cli_config(str(tmp_path / "missing.json"))


def test_paths_must_be_distinct(tmp_path):
    same = str(tmp_path / "state")
    with pytest.raises(ConfigError):
        CliConfig(snapshot_path=same, audit_log_path=same)


@pytest.mark.parametrize("overrides", [
    {"auth_max_failed_attempts": 0},
    {"session_ttl_seconds": -1},
    {"bcrypt_rounds": True},
    {"deletion_grace_days": -1},
    {"environment": "staging"},
])
def test_invalid_values(tmp_path, overrides):
    with pytest.raises(ConfigError):
        CliConfig(snapshot_path=str(tmp_path / "s"), audit_log_path=str(tmp_path / "a"), **overrides)


def test_development_key_fallback(tmp_path):
    config = CliConfig(snapshot_path=str(tmp_path / "s"), audit_log_path=str(tmp_path / "a"), field_key=None)
    assert config.encryption_key == DEV_FIELD_KEY
    assert CliConfig(snapshot_path=str(tmp_path / "s"), audit_log_path=str(tmp_path / "a"),
                     field_key="k").encryption_key == "k"
