"""Authoritative-source feed: parse JSON-lines extracts and diff them against the store.

The parse is all-or-nothing: one malformed line rejects the whole batch, so a
half-read extract can never drift the store away from the source.
"""

import json
from dataclasses import dataclass
from datetime import date

import structlog

from app.errors import DuplicateInBatch, InvalidEvent, MalformedLine, UndefinedTransition
from app.identity.lifecycle import apply_event
from app.identity.models import (
    EventKind, LifecycleEvent, PersonId, Role, Status, SubRole, WithdrawalReason, is_valid_pair,
)

logger = structlog.get_logger(__name__)

FEED_KEYS = ("person_id", "full_name", "role", "sub_role", "department", "event", "effective_date")


@dataclass(frozen=True)
class FeedRecord:
    person_id: PersonId
    full_name: str
    role: Role
    sub_role: SubRole | None
    department: str
    event: EventKind | None
    effective_date: date
    reason: WithdrawalReason | None = None

    def to_event(self):
        """The lifecycle event this record's hint describes (None without a hint)."""
        if self.event is None:
            return None
        kwargs = {}
        if self.event is EventKind.WITHDRAWAL:
            kwargs["reason"] = self.reason
        elif self.event is EventKind.TRANSFER:
            kwargs["department"] = self.department
        elif self.event is EventKind.HIRE:
            kwargs["role"] = self.role
            kwargs["sub_role"] = self.sub_role
        return LifecycleEvent(self.event, self.effective_date, **kwargs)


@dataclass(frozen=True)
class Create:
    record: FeedRecord

    @property
    def person_id(self):
        return self.record.person_id


@dataclass(frozen=True)
class Update:
    person_id: PersonId
    event: LifecycleEvent


@dataclass(frozen=True)
class NoChange:
    person_id: PersonId


FeedDelta = Create | Update | NoChange


def _enum(enum_cls, raw, key):
    try:
        return enum_cls(raw)
    except ValueError:
        raise ValueError(f"unknown {key} {raw!r}")


def _parse_event(raw):
    """'graduation' -> (GRADUATION, None); 'withdrawal:academic' -> (WITHDRAWAL, ACADEMIC)."""
    if raw is None:
        return None, None
    if not isinstance(raw, str):
        raise ValueError("event must be a string or null")
    name, _, qualifier = raw.partition(":")
    kind = _enum(EventKind, name, "event")
    if kind is EventKind.WITHDRAWAL:
        if not qualifier:
            raise ValueError("withdrawal requires a reason, e.g. 'withdrawal:academic'")
        return kind, _enum(WithdrawalReason, qualifier, "withdrawal reason")
    if qualifier:
        raise ValueError(f"event {name!r} takes no qualifier")
    return kind, None


def _parse_line(obj):
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    for key in FEED_KEYS:
        if key not in obj:
            raise ValueError(f"missing {key}")
    extra = sorted(set(obj) - set(FEED_KEYS))
    if extra:
        raise ValueError(f"unexpected key {extra[0]}")

    person_id = obj["person_id"]
    if not isinstance(person_id, str) or not person_id.strip():
        raise ValueError("missing person_id")
    for key in ("full_name", "department", "role", "effective_date"):
        if not isinstance(obj[key], str):
            raise ValueError(f"{key} must be a string")

    role = _enum(Role, obj["role"], "role")
    sub_role = None if obj["sub_role"] is None else _enum(SubRole, obj["sub_role"], "sub_role")
    if not is_valid_pair(role, sub_role):
        raise ValueError(f"invalid role/sub_role pair {obj['role']}/{obj['sub_role']}")
    kind, reason = _parse_event(obj["event"])
    try:
        effective_date = date.fromisoformat(obj["effective_date"])
    except ValueError:
        raise ValueError(f"effective_date {obj['effective_date']!r} is not YYYY-MM-DD")

    record = FeedRecord(
        person_id=PersonId(person_id),
        full_name=obj["full_name"],
        role=role,
        sub_role=sub_role,
        department=obj["department"],
        event=kind,
        effective_date=effective_date,
        reason=reason,
    )
    try:
        record.to_event()
    except InvalidEvent as e:
        raise ValueError(str(e))
    return record


def parse_feed(data):
    """Parse a UTF-8 JSON-lines feed into records, in file order."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedLine(1 + data[:e.start].count(b"\n"), "invalid UTF-8")

    records = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(_parse_line(json.loads(line)))
        except json.JSONDecodeError as e:
            raise MalformedLine(line_number, f"invalid JSON ({e.msg})")
        except ValueError as e:
            raise MalformedLine(line_number, str(e))

    logger.debug("feed_parsed", records=len(records))
    return records


def _hint_applied(identity, record, event):
    """The hint would change nothing and the identity already carries the record's role."""
    try:
        successor = apply_event(identity, event)
    except UndefinedTransition:
        successor = None
    if successor is not None and successor != identity:
        return False
    return (identity.role, identity.sub_role) == (record.role, record.sub_role)


def _record_deltas(identity, record):
    event = record.to_event()
    hint = None
    if event is not None and not _hint_applied(identity, record, event):
        hint = Update(record.person_id, event)
    transfer = None
    hinted_transfer = event is not None and event.kind is EventKind.TRANSFER
    if not hinted_transfer and record.department != identity.department:
        transfer = Update(record.person_id, LifecycleEvent(EventKind.TRANSFER, record.effective_date,
                                                           department=record.department))

    if identity.status is Status.TERMINATED:
        # a tombstone only moves department once a hint has revived it
        if hint is None:
            return [NoChange(record.person_id)]
        deltas = [hint, transfer]
    else:
        deltas = [transfer, hint]
    return [d for d in deltas if d is not None] or [NoChange(record.person_id)]


def diff_feed(identities, records):
    """Derive the deltas a batch implies against a store snapshot, sorted by person_id.

    Identities missing from the batch are left alone: only an explicit
    termination hint ends an identity. A hinted record that also names a new
    department yields a Transfer as well, ordered so both transitions are
    defined.
    """
    seen = set()
    for record in records:
        if record.person_id in seen:
            raise DuplicateInBatch(record.person_id)
        seen.add(record.person_id)

    deltas = []
    for record in sorted(records, key=lambda r: r.person_id):
        identity = identities.get(record.person_id)
        if identity is None:
            deltas.append(Create(record))
            continue
        deltas.extend(_record_deltas(identity, record))
    return deltas
