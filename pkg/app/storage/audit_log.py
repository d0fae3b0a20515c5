"""Append-only audit log.

One JSON object per line. Sequence numbers are gap-free and resume from
whatever is already on disk. Writes are write-ahead: callers open a
`pending` entry before touching a resource, so an action that cannot be
audited is never performed.
"""

import json
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum

import structlog

from app.clock import SystemClock
from app.errors import LogUnavailable

logger = structlog.get_logger(__name__)

SYSTEM_ACTOR = "system"


class AuditCategory(Enum):
    WORKFLOW = "Workflow"
    RESOURCE_MUTATION = "ResourceMutation"
    AUTH_ATTEMPT = "AuthAttempt"
    ADMIN_ACTION = "AdminAction"
    RECONCILIATION = "Reconciliation"


class AuditOutcome(Enum):
    ALLOWED = "Allowed"
    DENIED = "Denied"
    SUCCESS = "Success"
    FAILURE = "Failure"
    PARTIAL = "Partial"


@dataclass(frozen=True)
class AuditEvent:
    sequence: int
    timestamp: str
    actor: str
    category: AuditCategory
    action: str
    target: str
    outcome: AuditOutcome
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "seq": self.sequence,
            "ts": self.timestamp,
            "actor": self.actor,
            "category": self.category.value,
            "action": self.action,
            "target": self.target,
            "outcome": self.outcome.value,
            "detail": self.detail,
        }

    def to_line(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        return cls(
            sequence=data["seq"],
            timestamp=data["ts"],
            actor=data["actor"],
            category=AuditCategory(data["category"]),
            action=data["action"],
            target=data["target"],
            outcome=AuditOutcome(data["outcome"]),
            detail=data.get("detail", {}),
        )


class PendingEntry:
    """An opened write-ahead slot; `commit` writes the event with its final outcome."""

    def __init__(self, log, handle, actor, category, action, target):
        self._log = log
        self._handle = handle
        self.actor = actor
        self.category = category
        self.action = action
        self.target = target
        self.event = None

    def commit(self, outcome, detail=None):
        if self.event is None:
            self.event = self._log._append(self._handle, self.actor, self.category,
                                           self.action, self.target, outcome, detail or {})
        return self.event


class AuditLog:
    """Serialized single-writer audit log. `path=None` keeps events in memory only."""

    def __init__(self, path=None, clock=None):
        self.path = path
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        self._events = []
        self._next_sequence = 1
        if path and os.path.exists(path):
            self._events = read_events(path)
            if self._events:
                self._next_sequence = self._events[-1].sequence + 1
            logger.debug("audit_log_resumed", path=path, next_sequence=self._next_sequence)

    @property
    def events(self):
        with self._lock:
            return list(self._events)

    def _open(self):
        if self.path is None:
            return None
        try:
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            return open(self.path, "a", encoding="utf-8")
        except OSError as e:
            logger.error("audit_log_unavailable", path=self.path, error=str(e))
            raise LogUnavailable(f"audit log {self.path} unavailable: {e}")

    def _append(self, handle, actor, category, action, target, outcome, detail):
        with self._lock:
            event = AuditEvent(
                sequence=self._next_sequence,
                timestamp=self.clock.now().isoformat(),
                actor=actor,
                category=category,
                action=action,
                target=target,
                outcome=outcome,
                detail=detail,
            )
            if handle is not None:
                try:
                    handle.write(event.to_line() + "\n")
                    handle.flush()
                    os.fsync(handle.fileno())
                except OSError as e:
                    raise LogUnavailable(f"audit log write failed: {e}")
            self._events.append(event)
            self._next_sequence += 1
            return event

    @contextmanager
    def pending(self, actor, category, action, target):
        """Hold an open handle for the duration of one audited action.

        Raises LogUnavailable before the body runs if the log cannot be opened.
        The writer lock is taken only at commit, which is when the sequence
        number is assigned, so concurrent actions on distinct targets overlap.
        If the body neither commits nor raises, nothing is written.
        """
        handle = self._open()
        try:
            yield PendingEntry(self, handle, actor, category, action, target)
        finally:
            if handle is not None:
                handle.close()

    def record(self, actor, category, action, target, outcome, detail=None):
        with self.pending(actor, category, action, target) as entry:
            return entry.commit(outcome, detail)


def read_events(path):
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                events.append(AuditEvent.from_dict(json.loads(line)))
    return events
