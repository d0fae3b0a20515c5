import threading
from types import MappingProxyType

import structlog

from app.errors import DuplicateIdentity, UnknownIdentity

logger = structlog.get_logger(__name__)


class IdentityStore:
    def __init__(self, identities=None):
        # Key: person_id, Value: Identity. Identities are immutable; updates swap the value.
        self._identities = {}
        self._lock = threading.Lock()
        for identity in identities or []:
            self._identities[identity.person_id] = identity

    def add_identity(self, identity):
        """Store a new identity; person ids are unique across the store."""
        with self._lock:
            if identity.person_id in self._identities:
                raise DuplicateIdentity(identity.person_id)
            self._identities[identity.person_id] = identity
        logger.debug("identity_added", person_id=identity.person_id)

    def replace_identity(self, identity):
        """Swap in the successor of an existing identity."""
        with self._lock:
            if identity.person_id not in self._identities:
                raise UnknownIdentity(identity.person_id)
            self._identities[identity.person_id] = identity

    def get_identity(self, person_id):
        with self._lock:
            identity = self._identities.get(person_id)
        if identity is None:
            raise UnknownIdentity(person_id)
        return identity

    def find_identity(self, person_id):
        with self._lock:
            return self._identities.get(person_id)

    def __contains__(self, person_id):
        with self._lock:
            return person_id in self._identities

    def __len__(self):
        with self._lock:
            return len(self._identities)

    def snapshot(self):
        """A consistent point-in-time, read-only view keyed by person_id."""
        with self._lock:
            return MappingProxyType(dict(sorted(self._identities.items())))
