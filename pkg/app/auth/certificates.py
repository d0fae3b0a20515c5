"""Abstract certificates, the issuing authority, and the two revocation channels.

Key material is modeled, not computed: a certificate carries `key_token`,
the SHA-256 of the holder's secret proof token, and possession is shown by
presenting a proof that hashes to it.

Revocation is published as versioned, immutable lists. The status
responder always answers from the latest version; `RevocationListCache`
is the periodically downloaded list that can lag behind it.
"""

import hashlib
import hmac
import json
import secrets
import threading
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum

import structlog

from app.clock import SystemClock
from app.errors import UnknownSerial

logger = structlog.get_logger(__name__)

DEFAULT_VALIDITY_DAYS = 365


def key_token_for(proof):
    return hashlib.sha256(proof.encode()).hexdigest()


@dataclass(frozen=True)
class Certificate:
    serial: int
    subject_uid: str
    subject_email: str
    issuer: str
    not_before: date
    not_after: date
    key_token: str

    def __post_init__(self):
        if self.not_before > self.not_after:
            raise ValueError("certificate not_before is after not_after")

    def to_dict(self):
        return {
            "serial": self.serial,
            "subject_uid": self.subject_uid,
            "subject_email": self.subject_email,
            "issuer": self.issuer,
            "not_before": self.not_before.isoformat(),
            "not_after": self.not_after.isoformat(),
            "key_token": self.key_token,
        }

    def to_bytes(self):
        """Canonical encoding; two certificates are the same iff these bytes are."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_dict(cls, data):
        return cls(
            serial=data["serial"],
            subject_uid=data["subject_uid"],
            subject_email=data["subject_email"],
            issuer=data["issuer"],
            not_before=date.fromisoformat(data["not_before"]),
            not_after=date.fromisoformat(data["not_after"]),
            key_token=data["key_token"],
        )


def proof_matches(certificate, proof):
    if not proof:
        return False
    return hmac.compare_digest(key_token_for(proof), certificate.key_token)


@dataclass(frozen=True)
class RevocationEntry:
    serial: int
    reason: str
    revoked_at: datetime

    def to_dict(self):
        return {"serial": self.serial, "reason": self.reason, "revoked_at": self.revoked_at.isoformat()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["serial"], data["reason"], datetime.fromisoformat(data["revoked_at"]))


@dataclass(frozen=True)
class RevocationList:
    issuer: str
    version: int
    issued_at: datetime
    entries: frozenset = field(default_factory=frozenset)

    def entry_for(self, serial):
        return next((e for e in self.entries if e.serial == serial), None)

    def is_revoked(self, serial):
        return self.entry_for(serial) is not None

    def to_dict(self):
        return {
            "issuer": self.issuer,
            "version": self.version,
            "issued_at": self.issued_at.isoformat(),
            "entries": [e.to_dict() for e in sorted(self.entries, key=lambda e: e.serial)],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            issuer=data["issuer"],
            version=data["version"],
            issued_at=datetime.fromisoformat(data["issued_at"]),
            entries=frozenset(RevocationEntry.from_dict(e) for e in data.get("entries", [])),
        )


class CertificateAuthority:
    """Issues certificates for one issuer name and publishes its revocation lists."""

    def __init__(self, issuer, clock=None, token_factory=None):
        self.issuer = issuer
        self.clock = clock or SystemClock()
        self.token_factory = token_factory or (lambda: secrets.token_hex(16))
        self._lock = threading.Lock()
        self._next_serial = 1
        self._issued = set()
        self._lists = [RevocationList(issuer, 0, self.clock.now())]

    @property
    def latest(self):
        with self._lock:
            return self._lists[-1]

    @property
    def versions(self):
        with self._lock:
            return list(self._lists)

    def has_issued(self, serial):
        with self._lock:
            return serial in self._issued

    def issue(self, subject_uid, subject_email, not_before=None, not_after=None):
        """Return (certificate, proof). The proof stays with the holder."""
        not_before = not_before or self.clock.today()
        not_after = not_after or not_before + timedelta(days=DEFAULT_VALIDITY_DAYS)
        proof = self.token_factory()
        with self._lock:
            serial = self._next_serial
            self._next_serial += 1
            self._issued.add(serial)
        certificate = Certificate(serial, subject_uid, subject_email, self.issuer,
                                  not_before, not_after, key_token_for(proof))
        logger.info("certificate_issued", issuer=self.issuer, serial=serial, subject_uid=subject_uid)
        return certificate, proof

    def revoke(self, serial, reason):
        """Publish a new list version revoking `serial`. Revoking twice changes nothing."""
        with self._lock:
            if serial not in self._issued:
                raise UnknownSerial(self.issuer, serial)
            current = self._lists[-1]
            if current.is_revoked(serial):
                return current
            now = self.clock.now()
            published = RevocationList(
                issuer=self.issuer,
                version=current.version + 1,
                issued_at=now,
                entries=current.entries | {RevocationEntry(serial, reason, now)},
            )
            self._lists.append(published)
        logger.info("revocation_published", issuer=self.issuer, serial=serial,
                    reason=reason, version=published.version)
        return published

    def to_dict(self):
        with self._lock:
            return {
                "issuer": self.issuer,
                "next_serial": self._next_serial,
                "issued": sorted(self._issued),
                "lists": [rl.to_dict() for rl in self._lists],
            }

    @classmethod
    def from_dict(cls, data, clock=None, token_factory=None):
        authority = cls(data["issuer"], clock=clock, token_factory=token_factory)
        authority._next_serial = data["next_serial"]
        authority._issued = set(data["issued"])
        authority._lists = [RevocationList.from_dict(rl) for rl in data["lists"]]
        return authority


class CertStatus(Enum):
    GOOD = "good"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class StatusAnswer:
    status: CertStatus
    entry: RevocationEntry | None = None
    list_version: int | None = None


class StatusResponder:
    """Answers certificate status queries from each issuer's latest published list."""

    def __init__(self, authorities):
        self._authorities = {authority.issuer: authority for authority in authorities}
        self._lock = threading.Lock()
        self.queries = 0

    @property
    def known_issuers(self):
        return frozenset(self._authorities)

    @property
    def default_issuer(self):
        return sorted(self._authorities)[0]

    def authority(self, issuer=None):
        return self._authorities[issuer or self.default_issuer]

    def status(self, issuer, serial):
        with self._lock:
            self.queries += 1
        authority = self._authorities.get(issuer)
        if authority is None:
            return StatusAnswer(CertStatus.UNKNOWN)
        current = authority.latest
        entry = current.entry_for(serial)
        if entry is not None:
            return StatusAnswer(CertStatus.REVOKED, entry, current.version)
        if not authority.has_issued(serial):
            return StatusAnswer(CertStatus.UNKNOWN, list_version=current.version)
        return StatusAnswer(CertStatus.GOOD, list_version=current.version)


def publish_revocation(responder, serial, reason, issuer=None):
    """Revoke through the responder's authority; the next status query sees it."""
    return responder.authority(issuer).revoke(serial, reason)


class RevocationListCache:
    """A downloaded revocation list, refreshed only every `refresh_seconds`.

    Offers the same `status` call as the responder so authentication can be
    run against it. Between refreshes it misses newly published revocations.
    """

    def __init__(self, responder, clock=None, refresh_seconds=86400):
        self._responder = responder
        self.clock = clock or SystemClock()
        self.refresh_seconds = refresh_seconds
        self._cached = {}
        self._fetched_at = None
        self.queries = 0

    @property
    def known_issuers(self):
        return self._responder.known_issuers

    def _refresh_if_due(self):
        now = self.clock.now()
        if self._fetched_at is None or (now - self._fetched_at).total_seconds() >= self.refresh_seconds:
            self._cached = {issuer: self._responder.authority(issuer).latest
                            for issuer in self._responder.known_issuers}
            self._fetched_at = now
            logger.debug("revocation_list_refreshed", versions={i: rl.version for i, rl in self._cached.items()})

    def status(self, issuer, serial):
        self.queries += 1
        self._refresh_if_due()
        cached = self._cached.get(issuer)
        if cached is None:
            return StatusAnswer(CertStatus.UNKNOWN)
        entry = cached.entry_for(serial)
        if entry is not None:
            return StatusAnswer(CertStatus.REVOKED, entry, cached.version)
        return StatusAnswer(CertStatus.GOOD, list_version=cached.version)
