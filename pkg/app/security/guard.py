"""Object access control, opaque object references, and field encryption at rest."""

import base64
import hashlib
import hmac
import html
import threading
from dataclasses import dataclass
from enum import Enum

import structlog
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESSIV
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from app.errors import AuthenticationFailure

logger = structlog.get_logger(__name__)

SCHEME = "aes-siv-hkdf-sha256"
_KDF_INFO = b"idfabric field protection"
# AES-SIV refuses empty input, so every plaintext carries this prefix
_PAD = b"\x01"


# --- field protection ---

@dataclass(frozen=True)
class ProtectedField:
    name: str
    ciphertext: bytes
    scheme: str = SCHEME

    def to_dict(self):
        return {"name": self.name, "ciphertext": base64.b64encode(self.ciphertext).decode(), "scheme": self.scheme}

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], base64.b64decode(data["ciphertext"]), data["scheme"])


def _derive(key):
    if not key:
        raise ValueError("field protection key must be non-empty")
    material = key.encode() if isinstance(key, str) else bytes(key)
    return HKDF(algorithm=hashes.SHA256(), length=64, salt=None, info=_KDF_INFO).derive(material)


def protect_field(name, plaintext, key):
    """Deterministic authenticated encryption bound to the field name."""
    cipher = AESSIV(_derive(key))
    ciphertext = cipher.encrypt(_PAD + plaintext.encode(), [name.encode()])
    return ProtectedField(name, ciphertext)


def unprotect_field(field, key):
    if field.scheme != SCHEME:
        raise AuthenticationFailure(f"unsupported scheme {field.scheme!r}")
    cipher = AESSIV(_derive(key))
    try:
        data = cipher.decrypt(field.ciphertext, [field.name.encode()])
    except InvalidTag:
        raise AuthenticationFailure(f"field {field.name!r} failed authentication")
    return data[len(_PAD):].decode()


def scan_for_plaintext(text, values):
    """The sensitive values that appear verbatim in `text`."""
    return sorted({value for value in values if value and value in text})


def html_escape(text):
    """Escape & < > " ' for HTML output."""
    return html.escape(str(text), quote=True)


# --- object references ---

class ObjectReferenceMap:
    """Opaque handles for (resource, path) pairs, resolvable only on the server."""

    def __init__(self, key):
        self._key = _derive(key)[:32]
        self._objects = {}
        self._lock = threading.Lock()

    def handle_for(self, resource, path):
        message = f"{resource.value}\x00{path}".encode()
        handle = hmac.new(self._key, message, hashlib.sha256).hexdigest()[:32]
        with self._lock:
            self._objects[handle] = (resource, path)
        return handle

    def resolve(self, handle):
        with self._lock:
            return self._objects.get(handle)


@dataclass(frozen=True)
class AclEntry:
    resource: object
    path: str
    person_id: str | None = None
    # (application, group name) whose members are granted
    group: tuple | None = None

    def __post_init__(self):
        if (self.person_id is None) == (self.group is None):
            raise ValueError("an ACL entry grants exactly one person or one group")


class AccessControlList:
    def __init__(self, entries=()):
        self._entries = set(entries)
        self._lock = threading.Lock()

    def grant_person(self, resource, path, person_id):
        self.add(AclEntry(resource, path, person_id=person_id))

    def grant_group(self, resource, path, application, group):
        self.add(AclEntry(resource, path, group=(application, group)))

    def add(self, entry):
        with self._lock:
            self._entries.add(entry)

    def entries_for(self, resource, path):
        with self._lock:
            return [e for e in self._entries if e.resource is resource and e.path == path]

    def __len__(self):
        with self._lock:
            return len(self._entries)


class DenyReason(Enum):
    SESSION_INVALID = "SessionInvalid"
    UNKNOWN_OBJECT = "UnknownObject"
    NO_GRANT = "NoGrant"


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    reason: DenyReason | None = None
    entry: AclEntry | None = None

    def __bool__(self):
        return self.allowed


def check_object_access(session, object_ref, acl, sessions, groups=None, references=None):
    """Allow only when an explicit entry grants the session's person, directly or by group.

    `object_ref` is either a (resource, path) pair or an opaque handle from
    `references`. Evaluated afresh on every call.
    """
    if not sessions.is_valid(session):
        return AccessDecision(False, DenyReason.SESSION_INVALID)

    if isinstance(object_ref, str):
        resolved = references.resolve(object_ref) if references is not None else None
        if resolved is None:
            return AccessDecision(False, DenyReason.UNKNOWN_OBJECT)
        object_ref = resolved
    resource, path = object_ref

    person_id = session.person_id
    for entry in sorted(acl.entries_for(resource, path), key=lambda e: (e.person_id or "", str(e.group))):
        if entry.person_id == person_id:
            return AccessDecision(True, entry=entry)
        if entry.group is not None and groups is not None:
            application, name = entry.group
            if name in groups.group_names(application) and person_id in groups.members(application, name):
                return AccessDecision(True, entry=entry)
    logger.debug("object_access_denied", person_id=person_id, resource=resource.value, path=path)
    return AccessDecision(False, DenyReason.NO_GRANT)
