"""Resource actions and the per-resource retry queue.

Delivery is at-least-once: a failed action waits here and is retried in
FIFO order per resource. Resource verbs are idempotent, so a retry that
repeats an already-applied change is harmless.
"""

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import structlog

from app.identity.models import ResourceId

logger = structlog.get_logger(__name__)


class ActionVerb(Enum):
    CREATE_ACCOUNT = "CreateAccount"
    SUSPEND_ACCOUNT = "SuspendAccount"
    RESTORE_ACCOUNT = "RestoreAccount"
    DELETE_ACCOUNT = "DeleteAccount"
    SET_ATTRIBUTES = "SetAttributes"
    SET_PASSWORD = "SetPassword"
    STORE_CERTIFICATE = "StoreCertificate"


class ActionStatus(Enum):
    PENDING = "Pending"
    DONE = "Done"
    FAILED = "Failed"
    MANUAL_INTERVENTION = "ManualIntervention"


@dataclass
class ResourceAction:
    resource: ResourceId
    verb: ActionVerb
    person_id: str
    attributes: dict = field(default_factory=dict)
    attempt: int = 0
    status: ActionStatus = ActionStatus.PENDING
    cause: str | None = None

    @property
    def key(self):
        return self.person_id, self.resource

    def to_dict(self):
        return {
            "resource": self.resource.value,
            "verb": self.verb.value,
            "person_id": self.person_id,
            "attributes": dict(sorted(self.attributes.items())),
            "attempt": self.attempt,
            "status": self.status.value,
            "cause": self.cause,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            resource=ResourceId(data["resource"]),
            verb=ActionVerb(data["verb"]),
            person_id=data["person_id"],
            attributes=dict(data.get("attributes", {})),
            attempt=data.get("attempt", 0),
            status=ActionStatus(data.get("status", ActionStatus.PENDING.value)),
            cause=data.get("cause"),
        )


class RetryQueue:
    """FIFO queues keyed by resource. Any thread may enqueue; one drainer at a time."""

    def __init__(self):
        self._queues = {resource: deque() for resource in ResourceId}
        self._manual = []
        self._lock = threading.Lock()

    def enqueue(self, action):
        with self._lock:
            self._queues[action.resource].append(action)
        logger.info("action_queued", resource=action.resource.value, verb=action.verb.value,
                    person_id=action.person_id, attempt=action.attempt)

    def has_pending(self, person_id, resource):
        with self._lock:
            return any(a.person_id == person_id for a in self._queues[resource])

    def peek(self, resource):
        with self._lock:
            queue = self._queues[resource]
            return queue[0] if queue else None

    def pop(self, resource):
        with self._lock:
            return self._queues[resource].popleft()

    def flag_manual_intervention(self, action):
        action.status = ActionStatus.MANUAL_INTERVENTION
        with self._lock:
            self._manual.append(action)
        logger.warning("action_needs_manual_intervention", resource=action.resource.value,
                       verb=action.verb.value, person_id=action.person_id, cause=action.cause)

    def manual_intervention(self):
        with self._lock:
            return list(self._manual)

    def pending(self):
        """All queued actions, resource by resource in canonical order."""
        with self._lock:
            return [action for resource in ResourceId for action in self._queues[resource]]

    def __len__(self):
        with self._lock:
            return sum(len(q) for q in self._queues.values())

    # --- snapshot support ---

    def to_dict(self):
        return {
            "pending": [action.to_dict() for action in self.pending()],
            "manual_intervention": [action.to_dict() for action in self.manual_intervention()],
        }

    @classmethod
    def from_dict(cls, data):
        queue = cls()
        for item in data.get("pending", []):
            action = ResourceAction.from_dict(item)
            queue._queues[action.resource].append(action)
        queue._manual = [ResourceAction.from_dict(item) for item in data.get("manual_intervention", [])]
        return queue
