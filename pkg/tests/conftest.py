from datetime import date, datetime, timezone

import pytest
import structlog

from app.auth.authenticator import AuthPolicy, Authenticator
from app.auth.certificates import CertificateAuthority, StatusResponder
from app.auth.sessions import SessionManager
from app.clock import ManualClock
from app.fabric import Fabric
from app.feeds.feed_parser import FeedRecord
from app.identity.models import EventKind, Role, SubRole
from app.provisioning.engine import ProvisioningEngine
from app.provisioning.matrix import default_matrix
from app.resources.endpoints import ResourceFleet
from app.storage.audit_log import AuditLog
from app.storage.data_store import IdentityStore
from config import CliConfig

START = datetime(2026, 1, 5, 9, 0, tzinfo=timezone.utc)


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    structlog.reset_defaults()


@pytest.fixture
def clock():
    return ManualClock(START)


@pytest.fixture
def fleet():
    return ResourceFleet.build(seed=7)


@pytest.fixture
def store():
    return IdentityStore()


@pytest.fixture
def audit(tmp_path, clock):
    return AuditLog(str(tmp_path / "engine-audit.jsonl"), clock)


@pytest.fixture
def engine(store, fleet, audit, clock):
    return ProvisioningEngine(store, default_matrix(), fleet, audit, clock=clock,
                              max_attempts=5, grace_days=0, bcrypt_rounds=4)


@pytest.fixture
def sessions(clock):
    return SessionManager(clock, ttl_seconds=3600)


@pytest.fixture
def authority(clock):
    return CertificateAuthority("test-ca", clock)


@pytest.fixture
def responder(authority):
    return StatusResponder([authority])


@pytest.fixture
def authenticator(fleet, sessions, audit, clock, responder):
    return Authenticator(fleet.registry, sessions, audit, clock, responder,
                         AuthPolicy(max_failed_attempts=5, lockout_duration=900))


@pytest.fixture
def cli_config(tmp_path):
    return CliConfig(
        snapshot_path=str(tmp_path / "snapshot.json"),
        audit_log_path=str(tmp_path / "audit.jsonl"),
        matrix_path=None,
        bcrypt_rounds=4,
        field_key="test-field-key",
        domain_admins=("adm-0001",),
    )


@pytest.fixture
def fabric(cli_config, clock):
    return Fabric(cli_config, clock=clock, seed=11, persistent=False)


@pytest.fixture
def make_record():
    def make(person_id, role=Role.EMPLOYEE, sub_role=SubRole.INDIVIDUAL_CONTRIBUTOR,
             department="Registrar", event=None, full_name=None, effective_date=date(2026, 1, 5),
             reason=None):
        return FeedRecord(
            person_id=person_id,
            full_name=full_name or f"Person {person_id}",
            role=role,
            sub_role=sub_role,
            department=department,
            event=event,
            effective_date=effective_date,
            reason=reason,
        )
    return make


@pytest.fixture
def hire(engine, make_record):
    """Provision a new employee-like identity through the engine."""
    def provision(person_id, role=Role.EMPLOYEE, sub_role=SubRole.INDIVIDUAL_CONTRIBUTOR, department="Registrar"):
        event = EventKind.HIRE if role in (Role.EMPLOYEE, Role.FACULTY, Role.CONTRACTOR) else None
        return engine.provision_workflow(make_record(person_id, role, sub_role, department, event))
    return provision
