"""Authentication flows: certificate (production and non-production), password, and MFA.

Denials are values, never exceptions. Every attempt, granted or denied,
lands in the audit log under AuthAttempt.
"""

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum

import bcrypt
import structlog

import config
from app.auth.certificates import CertStatus, proof_matches
from app.auth.sessions import Factor
from app.clock import SystemClock
from app.errors import ConfigError, ResourceDown
from app.identity.models import ResourceId
from app.resources.endpoints import AccountState
from app.storage.audit_log import AuditCategory, AuditOutcome

logger = structlog.get_logger(__name__)


class Denial(Enum):
    REVOKED = "Revoked"
    EXPIRED_CERTIFICATE = "ExpiredCertificate"
    NOT_YET_VALID = "NotYetValid"
    UNKNOWN_ISSUER = "UnknownIssuer"
    UNKNOWN_CERTIFICATE = "UnknownCertificate"
    PROOF_MISMATCH = "ProofMismatch"
    NO_REGISTRY_ACCOUNT = "NoRegistryAccount"
    REGISTRY_UNAVAILABLE = "RegistryUnavailable"
    CERTIFICATE_MISMATCH = "CertificateMismatch"
    ACCOUNT_SUSPENDED = "AccountSuspended"
    BAD_CREDENTIALS = "BadCredentials"
    LOCKED_OUT = "LockedOut"
    MISSING_FACTOR = "MissingFactor"
    FACTOR_MISMATCH = "FactorMismatch"


@dataclass(frozen=True)
class AuthPolicy:
    max_failed_attempts: int = config.AUTH_MAX_FAILED_ATTEMPTS
    lockout_duration: int = config.AUTH_LOCKOUT_SECONDS
    required_factors: frozenset = frozenset({Factor.CERTIFICATE, Factor.PASSWORD})

    def __post_init__(self):
        if self.max_failed_attempts < 1:
            raise ConfigError("max_failed_attempts must be >= 1")
        if self.lockout_duration < 1:
            raise ConfigError("lockout_duration must be >= 1")
        object.__setattr__(self, "required_factors", frozenset(self.required_factors))


# PII-bearing and administrative surfaces need both factors
RESOURCE_FACTORS = {
    ResourceId.STUDENT_PORTAL: frozenset({Factor.CERTIFICATE, Factor.PASSWORD}),
    ResourceId.ACCESS_REGISTRY: frozenset({Factor.CERTIFICATE, Factor.PASSWORD}),
    ResourceId.LEARNING_PLATFORM: frozenset({Factor.PASSWORD}),
}


def policy_for(resource, base=None):
    base = base or AuthPolicy()
    factors = RESOURCE_FACTORS.get(resource, base.required_factors)
    return AuthPolicy(base.max_failed_attempts, base.lockout_duration, factors)


@dataclass(frozen=True)
class AuthResult:
    person_id: str | None
    factor: Factor | None
    denial: Denial | None = None
    session: object = None
    detail: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.denial is None

    def to_dict(self):
        return {
            "person_id": self.person_id,
            "factor": self.factor.value if self.factor else None,
            "ok": self.ok,
            "denial": self.denial.value if self.denial else None,
            "detail": self.detail,
            "session": self.session.to_client() if self.session else None,
        }


class LockoutTracker:
    """Consecutive password failures per person, and the lockout they trigger."""

    def __init__(self, clock=None):
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        # person_id -> (consecutive failures, locked_until or None)
        self._state = {}

    def locked_until(self, person_id):
        now = self.clock.now()
        with self._lock:
            failures, until = self._state.get(person_id, (0, None))
            if until is None:
                return None
            if until <= now:
                # lockout served; start counting afresh
                self._state.pop(person_id, None)
                return None
            return until

    def record_failure(self, person_id, policy):
        """Count a failure; returns the lockout end if this failure triggered one."""
        now = self.clock.now()
        with self._lock:
            failures, _ = self._state.get(person_id, (0, None))
            failures += 1
            if failures >= policy.max_failed_attempts:
                until = now + timedelta(seconds=policy.lockout_duration)
                self._state[person_id] = (failures, until)
                return until
            self._state[person_id] = (failures, None)
            return None

    def record_success(self, person_id):
        with self._lock:
            self._state.pop(person_id, None)

    def failures(self, person_id):
        with self._lock:
            return self._state.get(person_id, (0, None))[0]

    def replay(self, events):
        """Rebuild the counters from audited password attempts, so a new process resumes them."""
        with self._lock:
            for event in events:
                if event.category is not AuditCategory.AUTH_ATTEMPT or event.action != "authenticate_password":
                    continue
                person_id = event.target
                failures, until = self._state.get(person_id, (0, None))
                if until is not None and until <= datetime.fromisoformat(event.timestamp):
                    failures, until = 0, None
                if event.outcome is AuditOutcome.SUCCESS:
                    self._state.pop(person_id, None)
                elif event.detail.get("denial") == Denial.BAD_CREDENTIALS.value:
                    locked = event.detail.get("locked_until")
                    self._state[person_id] = (failures + 1, datetime.fromisoformat(locked) if locked else None)


class Authenticator:
    def __init__(self, registry, sessions, audit, clock=None, responder=None, policy=None):
        self.registry = registry
        self.sessions = sessions
        self.audit = audit
        self.clock = clock or SystemClock()
        self.responder = responder
        self.policy = policy or AuthPolicy()
        self.lockout = LockoutTracker(self.clock)

    def _conclude(self, action, result, issue_session):
        if result.ok and issue_session:
            session = self.sessions.issue(result.person_id, {result.factor} if result.factor else set())
            result = AuthResult(result.person_id, result.factor, None, session, result.detail)
        detail = dict(result.detail)
        if result.denial:
            detail["denial"] = result.denial.value
        self.audit.record(result.person_id or "unknown", AuditCategory.AUTH_ATTEMPT, action,
                          result.person_id or "unknown",
                          AuditOutcome.SUCCESS if result.ok else AuditOutcome.FAILURE, detail)
        logger.info("auth_attempt", flow=action, person_id=result.person_id, ok=result.ok,
                    denial=result.denial.value if result.denial else None)
        return result

    def _registry_account(self, uid):
        try:
            return self.registry.get_account(uid), None
        except ResourceDown:
            return None, Denial.REGISTRY_UNAVAILABLE

    def authenticate_production(self, certificate, proof, responder=None, issue_session=True):
        """Present certificate, query status in real time, verify possession, require a registry account."""
        responder = responder or self.responder
        pid = certificate.subject_uid
        detail = {"serial": certificate.serial, "issuer": certificate.issuer}

        def deny(denial, **extra):
            return self._conclude("authenticate_production",
                                  AuthResult(pid, Factor.CERTIFICATE, denial, detail={**detail, **extra}),
                                  issue_session)

        # local checks come before any status query
        today = self.clock.today()
        if certificate.issuer not in responder.known_issuers:
            return deny(Denial.UNKNOWN_ISSUER)
        if today < certificate.not_before:
            return deny(Denial.NOT_YET_VALID)
        if today > certificate.not_after:
            return deny(Denial.EXPIRED_CERTIFICATE)

        answer = responder.status(certificate.issuer, certificate.serial)
        if answer.status is CertStatus.REVOKED:
            return deny(Denial.REVOKED, reason=answer.entry.reason)
        if answer.status is CertStatus.UNKNOWN:
            return deny(Denial.UNKNOWN_CERTIFICATE)

        if not proof_matches(certificate, proof):
            return deny(Denial.PROOF_MISMATCH)

        account, unavailable = self._registry_account(pid)
        if unavailable:
            return deny(unavailable)
        if account is None or account.state is not AccountState.ACTIVE:
            return deny(Denial.NO_REGISTRY_ACCOUNT)

        return self._conclude("authenticate_production",
                              AuthResult(pid, Factor.CERTIFICATE, detail=detail), issue_session)

    def _find_by_email(self, email):
        try:
            accounts = self.registry.list_accounts()
        except ResourceDown:
            return None
        return next((a for a in accounts if a.attributes.get("email") == email), None)

    def authenticate_nonproduction(self, certificate, proof, issue_session=True):
        """Match the presented certificate byte-for-byte against the one stored on the registry account."""
        pid = certificate.subject_uid
        detail = {"serial": certificate.serial, "issuer": certificate.issuer}

        def deny(denial):
            return self._conclude("authenticate_nonproduction",
                                  AuthResult(pid, Factor.CERTIFICATE, denial, detail=detail), issue_session)

        account, unavailable = self._registry_account(pid)
        if unavailable:
            return deny(unavailable)
        if account is None:
            account = self._find_by_email(certificate.subject_email)
        if account is None:
            return deny(Denial.NO_REGISTRY_ACCOUNT)
        pid = account.person_id
        stored = account.stored_certificate
        if stored is None or stored.to_bytes() != certificate.to_bytes():
            return deny(Denial.CERTIFICATE_MISMATCH)
        if not proof_matches(certificate, proof):
            return deny(Denial.PROOF_MISMATCH)
        if account.state is AccountState.SUSPENDED:
            return deny(Denial.ACCOUNT_SUSPENDED)

        return self._conclude("authenticate_nonproduction",
                              AuthResult(pid, Factor.CERTIFICATE, detail=detail), issue_session)

    def authenticate_password(self, person_id, password, policy=None, issue_session=True):
        policy = policy or self.policy

        def conclude(denial=None, **detail):
            return self._conclude("authenticate_password",
                                  AuthResult(person_id, Factor.PASSWORD, denial, detail=detail), issue_session)

        until = self.lockout.locked_until(person_id)
        if until is not None:
            return conclude(Denial.LOCKED_OUT, until=until.isoformat())

        account, unavailable = self._registry_account(person_id)
        if unavailable:
            return conclude(unavailable)
        if account is None:
            return conclude(Denial.NO_REGISTRY_ACCOUNT)
        if account.state is AccountState.SUSPENDED:
            return conclude(Denial.ACCOUNT_SUSPENDED)

        stored = account.password_hash
        if stored is None or not bcrypt.checkpw(password.encode(), stored):
            locked = self.lockout.record_failure(person_id, policy)
            if locked is not None:
                logger.warning("account_locked_out", person_id=person_id, until=locked.isoformat())
                return conclude(Denial.BAD_CREDENTIALS, locked_until=locked.isoformat())
            return conclude(Denial.BAD_CREDENTIALS, failures=self.lockout.failures(person_id))

        self.lockout.record_success(person_id)
        return conclude()

    def mfa_authenticate(self, results, policy=None):
        """Combine per-factor results into one session covering every required factor."""
        policy = policy or self.policy
        passed = [r for r in results if r.ok]
        people = sorted({r.person_id for r in passed})

        if len(people) > 1:
            return self._conclude("mfa_authenticate",
                                  AuthResult(None, None, Denial.FACTOR_MISMATCH, detail={"people": people}),
                                  issue_session=False)
        person_id = people[0] if people else next((r.person_id for r in results if r.person_id), None)
        satisfied = {r.factor for r in passed}
        missing = sorted(f.value for f in policy.required_factors - satisfied)
        if missing:
            return self._conclude("mfa_authenticate",
                                  AuthResult(person_id, None, Denial.MISSING_FACTOR,
                                             detail={"missing": missing}),
                                  issue_session=False)

        session = self.sessions.issue(person_id, satisfied)
        return self._conclude("mfa_authenticate",
                              AuthResult(person_id, None, session=session,
                                         detail={"factors": sorted(f.value for f in satisfied)}),
                              issue_session=False)
