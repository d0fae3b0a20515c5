import json
import os
from dataclasses import dataclass, field, fields, replace

import structlog
from dotenv import load_dotenv

from app.errors import ConfigError

# Load environment variables from .env file
load_dotenv()

logger = structlog.get_logger(__name__)

# Base directories
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DATA_DIR = os.getenv('IDFABRIC_DATA_DIR', os.path.join(BASE_DIR, 'data'))

# State files
SNAPSHOT_PATH = os.getenv('IDFABRIC_SNAPSHOT_PATH', os.path.join(DATA_DIR, 'snapshot.json'))
AUDIT_LOG_PATH = os.getenv('IDFABRIC_AUDIT_LOG_PATH', os.path.join(DATA_DIR, 'audit.jsonl'))
MATRIX_PATH = os.getenv('IDFABRIC_MATRIX_PATH')  # default matrix when unset

# Key for sensitive fields at rest - never commit a real one
FIELD_ENCRYPTION_KEY = os.getenv('IDFABRIC_FIELD_KEY')
DEV_FIELD_KEY = 'idfabric-development-key'

# Engine settings
RETRY_MAX_ATTEMPTS = int(os.getenv('IDFABRIC_RETRY_MAX_ATTEMPTS', 5))
DELETION_GRACE_DAYS = int(os.getenv('IDFABRIC_DELETION_GRACE_DAYS', 0))

# Authentication settings
AUTH_MAX_FAILED_ATTEMPTS = int(os.getenv('IDFABRIC_AUTH_MAX_FAILED_ATTEMPTS', 5))
AUTH_LOCKOUT_SECONDS = int(os.getenv('IDFABRIC_AUTH_LOCKOUT_SECONDS', 900))
SESSION_TTL_SECONDS = int(os.getenv('IDFABRIC_SESSION_TTL_SECONDS', 3600))
BCRYPT_ROUNDS = int(os.getenv('IDFABRIC_BCRYPT_ROUNDS', 12))

# Directory settings
EMAIL_DOMAIN = os.getenv('IDFABRIC_EMAIL_DOMAIN', 'alpha.example.edu')
DEPLOYMENT_ENVIRONMENT = os.getenv('IDFABRIC_ENVIRONMENT', 'production')
DOMAIN_ADMINS = [p.strip() for p in os.getenv('IDFABRIC_DOMAIN_ADMINS', '').split(',') if p.strip()]

ENVIRONMENTS = ('production', 'non-production')


@dataclass(frozen=True)
class CliConfig:
    """Everything a CLI invocation needs, resolved from env defaults plus a config file."""

    snapshot_path: str = SNAPSHOT_PATH
    audit_log_path: str = AUDIT_LOG_PATH
    matrix_path: str | None = MATRIX_PATH
    auth_max_failed_attempts: int = AUTH_MAX_FAILED_ATTEMPTS
    auth_lockout_seconds: int = AUTH_LOCKOUT_SECONDS
    retry_max_attempts: int = RETRY_MAX_ATTEMPTS
    deletion_grace_days: int = DELETION_GRACE_DAYS
    session_ttl_seconds: int = SESSION_TTL_SECONDS
    bcrypt_rounds: int = BCRYPT_ROUNDS
    environment: str = DEPLOYMENT_ENVIRONMENT
    domain_admins: tuple = field(default_factory=lambda: tuple(DOMAIN_ADMINS))
    field_key: str | None = FIELD_ENCRYPTION_KEY

    def __post_init__(self):
        paths = [p for p in (self.snapshot_path, self.audit_log_path, self.matrix_path) if p]
        if len({os.path.abspath(p) for p in paths}) != len(paths):
            raise ConfigError("snapshot_path, audit_log_path and matrix_path must be distinct")
        for name in ('auth_max_failed_attempts', 'auth_lockout_seconds', 'retry_max_attempts',
                     'session_ttl_seconds', 'bcrypt_rounds'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.deletion_grace_days, int) or self.deletion_grace_days < 0:
            raise ConfigError(f"deletion_grace_days must be >= 0, got {self.deletion_grace_days!r}")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"environment must be one of {ENVIRONMENTS}, got {self.environment!r}")

    @property
    def encryption_key(self):
        if not self.field_key:
            logger.warning("field_key_not_set", hint="set IDFABRIC_FIELD_KEY; using the development key")
            return DEV_FIELD_KEY
        return self.field_key


def load_cli_config(path=None):
    """Build a CliConfig from env defaults, overlaid with a flat JSON config file.

    The file path comes from the argument, else IDFABRIC_CONFIG. Unknown keys
    are rejected so typos don't silently fall back to defaults.
    """
    path = path or os.getenv('IDFABRIC_CONFIG')
    config = CliConfig()
    if not path:
        return config

    try:
        with open(path, 'r', encoding='utf-8') as f:
            overrides = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")

    if not isinstance(overrides, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")

    known = {f.name for f in fields(CliConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if 'domain_admins' in overrides:
        overrides['domain_admins'] = tuple(overrides['domain_admins'])

    logger.debug("config_loaded", path=path, keys=sorted(overrides))
    return replace(config, **overrides)
