"""The snapshot file: the whole fabric state as one JSON document.

Written to a temp file and swapped in with an atomic rename, keys sorted,
so equal state always produces identical bytes. Sensitive PII goes to disk
only as protected fields, passwords only as bcrypt hashes and session
tokens only as digests.
"""

import json
import os
import tempfile
from datetime import date

import structlog

from app.auth.certificates import Certificate
from app.errors import StoreUnavailable
from app.identity.models import Identity, PiiField, Role, Status, SubRole
from app.resources.endpoints import Account, AccountState
from app.security.guard import ProtectedField, protect_field, unprotect_field

logger = structlog.get_logger(__name__)

SNAPSHOT_KEYS = ("identities", "resources", "groups", "sessions", "retry_queue", "revocations")


# --- identities ---

def identity_to_record(identity, key):
    record = identity.to_dict()
    pii = {}
    for name in sorted(identity.pii_fields):
        pii_field = identity.pii_fields[name]
        if pii_field.sensitive:
            pii[name] = {"sensitive": True, "protected": protect_field(name, pii_field.value, key).to_dict()}
        else:
            pii[name] = {"sensitive": False, "value": pii_field.value}
    record["pii_fields"] = pii
    return record


def identity_from_record(record, key):
    pii = {}
    for name, item in record.get("pii_fields", {}).items():
        if item["sensitive"]:
            value = unprotect_field(ProtectedField.from_dict(item["protected"]), key)
            pii[name] = PiiField(value, sensitive=True)
        else:
            pii[name] = PiiField(item["value"], sensitive=False)
    terminated_on = record.get("terminated_on")
    return Identity(
        person_id=record["person_id"],
        full_name=record["full_name"],
        role=Role(record["role"]),
        sub_role=SubRole(record["sub_role"]) if record.get("sub_role") else None,
        department=record["department"],
        status=Status(record["status"]),
        pii_fields=pii,
        terminated_on=date.fromisoformat(terminated_on) if terminated_on else None,
    )


# --- accounts ---

def account_to_record(account):
    return {
        "person_id": account.person_id,
        "state": account.state.value,
        "attributes": dict(sorted(account.attributes.items())),
        "stored_certificate": account.stored_certificate.to_dict() if account.stored_certificate else None,
        "password_hash": account.password_hash.decode() if account.password_hash else None,
    }


def account_from_record(resource, record):
    certificate = record.get("stored_certificate")
    password_hash = record.get("password_hash")
    return Account(
        person_id=record["person_id"],
        resource=resource,
        state=AccountState(record["state"]),
        attributes=record.get("attributes", {}),
        stored_certificate=Certificate.from_dict(certificate) if certificate else None,
        password_hash=password_hash.encode() if password_hash else None,
    )


# --- file ---

def render_snapshot(document):
    """The exact text `save_snapshot` writes for `document`."""
    if set(document) != set(SNAPSHOT_KEYS):
        raise ValueError(f"snapshot must hold exactly {SNAPSHOT_KEYS}")
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def save_snapshot(path, document):
    """Atomically replace the snapshot file with `document`."""
    text = render_snapshot(document)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(prefix=".snapshot-", suffix=".tmp", dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_path, path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise
    except OSError as e:
        logger.error("snapshot_write_failed", path=path, error=str(e))
        raise StoreUnavailable(f"cannot write snapshot {path}: {e}")
    logger.debug("snapshot_saved", path=path, bytes=len(text))
    return text


def load_snapshot(path):
    """The snapshot document, or None when no snapshot has been written yet."""
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise StoreUnavailable(f"cannot read snapshot {path}: {e}")
    if not isinstance(document, dict) or set(document) != set(SNAPSHOT_KEYS):
        raise StoreUnavailable(f"snapshot {path} does not hold the expected top-level keys")
    return document
