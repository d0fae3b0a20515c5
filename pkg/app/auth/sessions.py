"""Server-side sessions.

The client holds an opaque token plus a copy of the session fields. The
server keeps only a SHA-256 digest of the token, and a session is valid only
when the digest is known, unexpired, and every client-held field equals the
server record.
"""

import hashlib
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum

import structlog

import config
from app.clock import SystemClock

logger = structlog.get_logger(__name__)

CLIENT_TOKEN_KEYS = frozenset({"session_id", "person_id", "issued_at", "expires_at", "factors"})


class Factor(Enum):
    CERTIFICATE = "Certificate"
    PASSWORD = "Password"


@dataclass(frozen=True)
class Session:
    session_id: str
    person_id: str
    issued_at: datetime
    expires_at: datetime
    factors_satisfied: frozenset

    def to_client(self):
        return {
            "session_id": self.session_id,
            "person_id": self.person_id,
            "issued_at": self.issued_at.isoformat(),
            "expires_at": self.expires_at.isoformat(),
            "factors": sorted(f.value for f in self.factors_satisfied),
        }


def token_digest(token):
    return hashlib.sha256(token.encode()).hexdigest()


@dataclass(frozen=True)
class _Record:
    person_id: str
    issued_at: datetime
    expires_at: datetime
    factors: frozenset


class SessionManager:
    def __init__(self, clock=None, ttl_seconds=config.SESSION_TTL_SECONDS, token_factory=None):
        self.clock = clock or SystemClock()
        self.ttl_seconds = ttl_seconds
        self.token_factory = token_factory or (lambda: secrets.token_urlsafe(32))
        self._records = {}
        self._lock = threading.Lock()

    def issue(self, person_id, factors):
        now = self.clock.now()
        token = self.token_factory()
        record = _Record(person_id, now, now + timedelta(seconds=self.ttl_seconds), frozenset(factors))
        with self._lock:
            self._records[token_digest(token)] = record
        logger.info("session_issued", person_id=person_id,
                    factors=sorted(f.value for f in record.factors))
        return Session(token, person_id, record.issued_at, record.expires_at, record.factors)

    def _lookup(self, token):
        with self._lock:
            record = self._records.get(token_digest(token))
        if record is None or self.clock.now() >= record.expires_at:
            return None
        return record

    def is_valid(self, session):
        if session is None:
            return False
        record = self._lookup(session.session_id)
        return record is not None and (
            record.person_id, record.issued_at, record.expires_at, record.factors
        ) == (session.person_id, session.issued_at, session.expires_at, frozenset(session.factors_satisfied))

    def validate_client_token(self, token):
        """Resolve a client-held token dict to its session, or None if anything is off."""
        if not isinstance(token, dict) or set(token) != CLIENT_TOKEN_KEYS:
            return None
        session_id = token.get("session_id")
        if not isinstance(session_id, str):
            return None
        record = self._lookup(session_id)
        if record is None:
            return None
        session = Session(session_id, record.person_id, record.issued_at, record.expires_at, record.factors)
        return session if session.to_client() == token else None

    def revoke(self, session):
        with self._lock:
            self._records.pop(token_digest(session.session_id), None)

    def __len__(self):
        with self._lock:
            return len(self._records)

    # --- snapshot support ---

    def to_list(self):
        with self._lock:
            items = sorted(self._records.items())
        return [{
            "token_digest": digest,
            "person_id": record.person_id,
            "issued_at": record.issued_at.isoformat(),
            "expires_at": record.expires_at.isoformat(),
            "factors": sorted(f.value for f in record.factors),
        } for digest, record in items]

    def load_list(self, items):
        with self._lock:
            self._records = {
                item["token_digest"]: _Record(
                    item["person_id"],
                    datetime.fromisoformat(item["issued_at"]),
                    datetime.fromisoformat(item["expires_at"]),
                    frozenset(Factor(f) for f in item["factors"]),
                )
                for item in items
            }
