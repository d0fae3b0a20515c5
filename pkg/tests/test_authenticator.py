from dataclasses import replace
from datetime import date, timedelta

import bcrypt
import pytest

from app.auth.authenticator import AuthPolicy, Authenticator, Denial, policy_for
from app.auth.certificates import RevocationListCache, publish_revocation
from app.auth.sessions import Factor
from app.errors import ConfigError, UnknownSerial
from app.identity.models import ResourceId
from app.resources.endpoints import FaultKind, FaultMode
from app.storage.audit_log import AuditCategory, AuditOutcome

PASSWORD = "s3cret-Passphrase"


@pytest.fixture
def registry(fleet):
    registry = fleet.registry
    for pid in ("alice", "bob"):
        registry.create_account(pid, {"uid": pid, "email": f"{pid}@example.edu", "full_name": pid.title()})
        registry.set_password(pid, bcrypt.hashpw(PASSWORD.encode(), bcrypt.gensalt(rounds=4)))
    return registry


@pytest.fixture
def credentials(registry, authority):
    issued = {}
    for pid in ("alice", "bob"):
        certificate, proof = authority.issue(pid, f"{pid}@example.edu")
        registry.store_certificate(pid, certificate)
        issued[pid] = (certificate, proof)
    return issued


def test_production_happy_path(authenticator, credentials, responder, sessions):
    certificate, proof = credentials["alice"]
    result = authenticator.authenticate_production(certificate, proof)
    assert result.ok
    assert result.factor is Factor.CERTIFICATE
    assert sessions.is_valid(result.session)
    assert responder.queries == 1


def test_revocation_denies_that_serial_only(authenticator, credentials, responder):
    alice_cert, alice_proof = credentials["alice"]
    bob_cert, bob_proof = credentials["bob"]
    assert authenticator.authenticate_production(alice_cert, alice_proof).ok

    publish_revocation(responder, alice_cert.serial, "keyCompromise")
    for _ in range(3):
        result = authenticator.authenticate_production(alice_cert, alice_proof)
        assert result.denial is Denial.REVOKED
        assert result.session is None
        assert result.detail["reason"] == "keyCompromise"
    assert authenticator.authenticate_production(bob_cert, bob_proof).ok


def test_publishing_twice_keeps_one_entry(authority, credentials, responder):
    serial = credentials["alice"][0].serial
    first = publish_revocation(responder, serial, "superseded")
    second = publish_revocation(responder, serial, "superseded")
    assert first is second
    assert len(second.entries) == 1
    with pytest.raises(UnknownSerial):
        publish_revocation(responder, 999, "unknown")


def test_expired_certificate_never_queries_the_responder(authenticator, credentials, responder, clock):
    certificate, proof = credentials["alice"]
    clock.advance(days=(certificate.not_after - clock.today()).days + 1)
    result = authenticator.authenticate_production(certificate, proof)
    assert result.denial is Denial.EXPIRED_CERTIFICATE
    assert responder.queries == 0


def test_not_yet_valid_and_unknown_issuer(authenticator, credentials, responder):
    certificate, proof = credentials["alice"]
    future = replace(certificate, not_before=date(2030, 1, 1), not_after=date(2031, 1, 1))
    assert authenticator.authenticate_production(future, proof).denial is Denial.NOT_YET_VALID
    foreign = replace(certificate, issuer="other-ca")
    assert authenticator.authenticate_production(foreign, proof).denial is Denial.UNKNOWN_ISSUER
    assert responder.queries == 0


def test_wrong_proof_is_proof_mismatch(authenticator, credentials):
    certificate, _ = credentials["alice"]
    assert authenticator.authenticate_production(certificate, "guess").denial is Denial.PROOF_MISMATCH


def test_valid_certificate_without_registry_account(authenticator, authority):
    certificate, proof = authority.issue("carol", "carol@example.edu")
    assert authenticator.authenticate_production(certificate, proof).denial is Denial.NO_REGISTRY_ACCOUNT


def test_stale_revocation_list_misses_fresh_revocations(authenticator, credentials, responder, clock):
    certificate, proof = credentials["alice"]
    cache = RevocationListCache(responder, clock, refresh_seconds=86400)
    assert authenticator.authenticate_production(certificate, proof, responder=cache).ok

    publish_revocation(responder, certificate.serial, "keyCompromise")
    assert authenticator.authenticate_production(certificate, proof, responder=cache).ok
    assert authenticator.authenticate_production(certificate, proof).denial is Denial.REVOKED

    clock.advance(seconds=86400)
    assert authenticator.authenticate_production(certificate, proof, responder=cache).denial is Denial.REVOKED


def test_nonproduction_accepts_only_byte_equal_certificates(authenticator, credentials, responder):
    certificate, proof = credentials["alice"]
    assert authenticator.authenticate_nonproduction(certificate, proof).ok
    for change in ({"subject_email": "alice@elsewhere.edu"}, {"not_after": certificate.not_after + timedelta(days=1)},
                   {"key_token": "0" * 64}, {"serial": certificate.serial + 100}):
        result = authenticator.authenticate_nonproduction(replace(certificate, **change), proof)
        assert result.denial is Denial.CERTIFICATE_MISMATCH
    assert responder.queries == 0


def test_nonproduction_ignores_revocation(authenticator, credentials, responder):
    certificate, proof = credentials["alice"]
    publish_revocation(responder, certificate.serial, "keyCompromise")
    assert authenticator.authenticate_nonproduction(certificate, proof).ok


def test_nonproduction_suspended_account(authenticator, credentials, registry):
    certificate, proof = credentials["alice"]
    registry.suspend_account("alice")
    assert authenticator.authenticate_nonproduction(certificate, proof).denial is Denial.ACCOUNT_SUSPENDED


def test_nonproduction_without_stored_certificate(authenticator, authority, registry):
    registry.create_account("dave", {"uid": "dave", "email": "dave@example.edu"})
    certificate, proof = authority.issue("dave", "dave@example.edu")
    assert authenticator.authenticate_nonproduction(certificate, proof).denial is Denial.CERTIFICATE_MISMATCH
    stranger, proof = authority.issue("erin", "erin@example.edu")
    assert authenticator.authenticate_nonproduction(stranger, proof).denial is Denial.NO_REGISTRY_ACCOUNT


def test_password_success(authenticator, registry):
    result = authenticator.authenticate_password("alice", PASSWORD)
    assert result.ok
    assert result.session.factors_satisfied == {Factor.PASSWORD}


def test_password_failures_reset_on_success(authenticator, registry):
    assert authenticator.authenticate_password("alice", "nope").denial is Denial.BAD_CREDENTIALS
    assert authenticator.authenticate_password("alice", "nope").denial is Denial.BAD_CREDENTIALS
    assert authenticator.lockout.failures("alice") == 2
    assert authenticator.authenticate_password("alice", PASSWORD).ok
    assert authenticator.lockout.failures("alice") == 0


def test_lockout_after_exactly_max_failures_then_expiry(authenticator, registry, clock):
    for attempt in range(1, 5):
        result = authenticator.authenticate_password("alice", "wrong")
        assert result.denial is Denial.BAD_CREDENTIALS
        assert "locked_until" not in result.detail
    fifth = authenticator.authenticate_password("alice", "wrong")
    assert fifth.denial is Denial.BAD_CREDENTIALS
    assert "locked_until" in fifth.detail

    assert authenticator.authenticate_password("alice", PASSWORD).denial is Denial.LOCKED_OUT
    clock.advance(seconds=899)
    assert authenticator.authenticate_password("alice", PASSWORD).denial is Denial.LOCKED_OUT
    clock.advance(seconds=1)
    assert authenticator.authenticate_password("alice", PASSWORD).ok


def test_lockout_is_per_identity(authenticator, registry):
    for _ in range(5):
        authenticator.authenticate_password("alice", "wrong")
    assert authenticator.authenticate_password("alice", PASSWORD).denial is Denial.LOCKED_OUT
    assert authenticator.authenticate_password("bob", PASSWORD).ok


@pytest.mark.parametrize("limit", [1, 3, 7])
def test_lockout_threshold_follows_policy(fleet, sessions, audit, clock, responder, registry, limit):
    authenticator = Authenticator(fleet.registry, sessions, audit, clock, responder,
                                  AuthPolicy(max_failed_attempts=limit, lockout_duration=60))
    failures = 0
    while authenticator.authenticate_password("bob", "wrong").detail.get("locked_until") is None:
        failures += 1
    assert failures + 1 == limit
    assert authenticator.authenticate_password("bob", PASSWORD).denial is Denial.LOCKED_OUT


def test_lockout_resumes_from_the_audit_log(authenticator, registry, fleet, sessions, audit, clock, responder):
    for _ in range(5):
        authenticator.authenticate_password("alice", "wrong")
    fresh = Authenticator(fleet.registry, sessions, audit, clock, responder,
                          AuthPolicy(max_failed_attempts=5, lockout_duration=900))
    fresh.lockout.replay(audit.events)
    assert fresh.authenticate_password("alice", PASSWORD).denial is Denial.LOCKED_OUT
    clock.advance(seconds=900)
    assert fresh.authenticate_password("alice", PASSWORD).ok


def test_password_denials(authenticator, registry, fleet):
    assert authenticator.authenticate_password("nobody", PASSWORD).denial is Denial.NO_REGISTRY_ACCOUNT
    registry.suspend_account("bob")
    assert authenticator.authenticate_password("bob", PASSWORD).denial is Denial.ACCOUNT_SUSPENDED
    fleet.registry.inject_fault(FaultMode(FaultKind.DOWN))
    assert authenticator.authenticate_password("alice", PASSWORD).denial is Denial.REGISTRY_UNAVAILABLE


def test_mfa_requires_every_factor_for_one_person(authenticator, credentials, registry):
    certificate, proof = credentials["alice"]
    cert = authenticator.authenticate_production(certificate, proof, issue_session=False)
    password = authenticator.authenticate_password("alice", PASSWORD, issue_session=False)
    combined = authenticator.mfa_authenticate([cert, password])
    assert combined.ok
    assert combined.session.factors_satisfied == {Factor.CERTIFICATE, Factor.PASSWORD}

    missing = authenticator.mfa_authenticate([cert])
    assert missing.denial is Denial.MISSING_FACTOR
    assert missing.detail["missing"] == ["Password"]

    bob_password = authenticator.authenticate_password("bob", PASSWORD, issue_session=False)
    assert authenticator.mfa_authenticate([cert, bob_password]).denial is Denial.FACTOR_MISMATCH


def test_mfa_with_locked_out_password(authenticator, credentials, registry):
    certificate, proof = credentials["alice"]
    for _ in range(5):
        authenticator.authenticate_password("alice", "wrong")
    cert = authenticator.authenticate_production(certificate, proof, issue_session=False)
    locked = authenticator.authenticate_password("alice", PASSWORD, issue_session=False)
    result = authenticator.mfa_authenticate([cert, locked])
    assert result.denial is Denial.MISSING_FACTOR


def test_every_attempt_is_audited(authenticator, credentials, registry, audit):
    certificate, proof = credentials["alice"]
    authenticator.authenticate_production(certificate, proof)
    authenticator.authenticate_password("alice", "wrong")
    attempts = [e for e in audit.events if e.category is AuditCategory.AUTH_ATTEMPT]
    assert [e.outcome for e in attempts] == [AuditOutcome.SUCCESS, AuditOutcome.FAILURE]
    assert attempts[1].detail["denial"] == "BadCredentials"
    assert PASSWORD not in str([e.to_dict() for e in audit.events])


def test_policy_defaults_and_validation():
    assert policy_for(ResourceId.LEARNING_PLATFORM).required_factors == {Factor.PASSWORD}
    assert policy_for(ResourceId.STUDENT_PORTAL).required_factors == {Factor.CERTIFICATE, Factor.PASSWORD}
    with pytest.raises(ConfigError):
        AuthPolicy(max_failed_attempts=0)
