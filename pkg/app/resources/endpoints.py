"""Simulated managed resources.

Every endpoint exposes the same administration verbs. Mutations go through
one gate: the resource must be reachable, the channel secure and the
connection privileged. Every verb is idempotent.
"""

import random
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType

import structlog

from app.errors import (
    AccountNotFound, AttributeConflict, InsecureChannel, PrivilegeRequired, ResourceDown,
)
from app.identity.models import ResourceId

logger = structlog.get_logger(__name__)


class AccountState(Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"


class FaultKind(Enum):
    HEALTHY = "healthy"
    DOWN = "down"
    INTERMITTENT = "intermittent"
    RANDOM = "random"


@dataclass(frozen=True)
class FaultMode:
    kind: FaultKind = FaultKind.HEALTHY
    fail_every_nth: int = 0
    rate: float = 0.0

    @classmethod
    def parse(cls, text):
        """'healthy' | 'down' | 'intermittent:<n>' | 'random:<rate>'"""
        name, _, arg = text.partition(":")
        kind = FaultKind(name)
        if kind is FaultKind.INTERMITTENT:
            n = int(arg)
            if n < 1:
                raise ValueError("intermittent needs n >= 1")
            return cls(kind, fail_every_nth=n)
        if kind is FaultKind.RANDOM:
            rate = float(arg)
            if not 0.0 <= rate <= 1.0:
                raise ValueError("random rate must be within [0, 1]")
            return cls(kind, rate=rate)
        if arg:
            raise ValueError(f"fault mode {name!r} takes no argument")
        return cls(kind)

    def __str__(self):
        if self.kind is FaultKind.INTERMITTENT:
            return f"intermittent:{self.fail_every_nth}"
        if self.kind is FaultKind.RANDOM:
            return f"random:{self.rate}"
        return self.kind.value


HEALTHY = FaultMode()


@dataclass(frozen=True)
class Connection:
    privileged: bool = True
    channel_secure: bool = True


@dataclass(frozen=True)
class Account:
    person_id: str
    resource: ResourceId
    state: AccountState = AccountState.ACTIVE
    attributes: MappingProxyType = field(default_factory=dict)
    # registry only
    stored_certificate: object = None
    password_hash: bytes | None = None

    def __post_init__(self):
        object.__setattr__(self, "attributes", MappingProxyType(dict(self.attributes)))

    def __eq__(self, other):
        if not isinstance(other, Account):
            return NotImplemented
        return (self.person_id, self.resource, self.state, dict(self.attributes),
                self.stored_certificate, self.password_hash) == (
            other.person_id, other.resource, other.state, dict(other.attributes),
            other.stored_certificate, other.password_hash)

    __hash__ = None


class ResourceEndpoint:
    """One managed resource holding at most one account per person."""

    def __init__(self, resource_id, connection=None, fault_mode=HEALTHY, seed=0):
        self.id = resource_id
        self.connection = connection or Connection()
        self._accounts = {}
        self._lock = threading.RLock()
        self._fault_mode = fault_mode
        self._mutation_calls = 0
        self._rng = random.Random(f"{seed}:{resource_id.value}")

    # --- faults ---

    @property
    def fault_mode(self):
        return self._fault_mode

    def inject_fault(self, mode):
        with self._lock:
            self._fault_mode = mode
            self._mutation_calls = 0
        logger.info("fault_injected", resource=self.id.value, mode=str(mode))
        return {"resource": self.id.value, "fault_mode": str(mode)}

    def reseed(self, seed):
        with self._lock:
            self._rng = random.Random(f"{seed}:{self.id.value}")

    def _check_reachable_for_mutation(self):
        mode = self._fault_mode
        self._mutation_calls += 1
        if mode.kind is FaultKind.DOWN:
            raise ResourceDown(self.id)
        if mode.kind is FaultKind.INTERMITTENT and (self._mutation_calls - 1) % mode.fail_every_nth == 0:
            raise ResourceDown(self.id)
        if mode.kind is FaultKind.RANDOM and self._rng.random() < mode.rate:
            raise ResourceDown(self.id)

    def _gate(self):
        self._check_reachable_for_mutation()
        if not self.connection.channel_secure:
            raise InsecureChannel(self.id)
        if not self.connection.privileged:
            raise PrivilegeRequired(self.id)

    # --- reads ---

    def list_accounts(self):
        with self._lock:
            if self._fault_mode.kind is FaultKind.DOWN:
                raise ResourceDown(self.id)
            return [self._accounts[pid] for pid in sorted(self._accounts)]

    def get_account(self, person_id):
        with self._lock:
            if self._fault_mode.kind is FaultKind.DOWN:
                raise ResourceDown(self.id)
            return self._accounts.get(person_id)

    # --- mutations ---

    def create_account(self, person_id, attributes):
        with self._lock:
            self._gate()
            existing = self._accounts.get(person_id)
            if existing is not None:
                if dict(existing.attributes) == dict(attributes):
                    return existing
                raise AttributeConflict(self.id, person_id, dict(existing.attributes))
            account = Account(person_id=person_id, resource=self.id, attributes=attributes)
            self._accounts[person_id] = account
            return account

    def suspend_account(self, person_id):
        with self._lock:
            self._gate()
            account = self._accounts.get(person_id)
            if account is None or account.state is AccountState.SUSPENDED:
                return account
            account = replace(account, state=AccountState.SUSPENDED)
            self._accounts[person_id] = account
            return account

    def restore_account(self, person_id):
        with self._lock:
            self._gate()
            account = self._accounts.get(person_id)
            if account is None:
                raise AccountNotFound(self.id, person_id)
            if account.state is not AccountState.ACTIVE:
                account = replace(account, state=AccountState.ACTIVE)
                self._accounts[person_id] = account
            return account

    def delete_account(self, person_id):
        with self._lock:
            self._gate()
            return self._accounts.pop(person_id, None)

    def set_attributes(self, person_id, attributes):
        with self._lock:
            self._gate()
            account = self._accounts.get(person_id)
            if account is None:
                raise AccountNotFound(self.id, person_id)
            merged = {**account.attributes, **attributes}
            if merged != dict(account.attributes):
                account = replace(account, attributes=merged)
                self._accounts[person_id] = account
            return account

    def set_password(self, person_id, password_hash):
        with self._lock:
            self._gate()
            account = self._accounts.get(person_id)
            if account is None:
                raise AccountNotFound(self.id, person_id)
            account = replace(account, password_hash=password_hash)
            self._accounts[person_id] = account
            return account

    def store_certificate(self, person_id, certificate):
        with self._lock:
            self._gate()
            account = self._accounts.get(person_id)
            if account is None:
                raise AccountNotFound(self.id, person_id)
            account = replace(account, stored_certificate=certificate)
            self._accounts[person_id] = account
            return account

    # --- snapshot support ---

    def load_accounts(self, accounts):
        """Replace the account table wholesale (snapshot restore, bypasses the gate)."""
        with self._lock:
            self._accounts = {account.person_id: account for account in accounts}

    def export_accounts(self):
        """Every account in person_id order, regardless of fault mode (snapshot save)."""
        with self._lock:
            return [self._accounts[pid] for pid in sorted(self._accounts)]

    def restore_fault_state(self, mode, mutation_calls):
        with self._lock:
            self._fault_mode = mode
            self._mutation_calls = mutation_calls

    @property
    def mutation_calls(self):
        return self._mutation_calls


class ResourceFleet:
    """The five managed resources, addressable by ResourceId."""

    def __init__(self, endpoints):
        self._endpoints = {endpoint.id: endpoint for endpoint in endpoints}

    @classmethod
    def build(cls, connection=None, seed=0):
        return cls(ResourceEndpoint(resource, connection=connection, seed=seed) for resource in ResourceId)

    def __getitem__(self, resource_id):
        return self._endpoints[resource_id]

    def __iter__(self):
        return iter(self._endpoints[r] for r in ResourceId if r in self._endpoints)

    @property
    def registry(self):
        return self._endpoints[ResourceId.ACCESS_REGISTRY]

    def reseed(self, seed):
        for endpoint in self:
            endpoint.reseed(seed)

    def heal_all(self):
        for endpoint in self:
            endpoint.inject_fault(HEALTHY)
