"""Drift detection: desired account state recomputed from scratch versus what the resources hold."""

from dataclasses import dataclass

import structlog

from app.errors import ResourceDown
from app.identity.models import RESOURCE_ORDER
from app.provisioning.matrix import DesiredState, desired_state
from app.resources.endpoints import AccountState

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class StateMismatch:
    person_id: str
    resource: object
    expected: AccountState
    actual: AccountState

    def to_dict(self):
        return {"person_id": self.person_id, "resource": self.resource.value,
                "expected": self.expected.value, "actual": self.actual.value}


def _pair_key(pair):
    return pair[0], RESOURCE_ORDER[pair[1]]


@dataclass(frozen=True)
class DriftReport:
    missing: frozenset = frozenset()
    orphaned: frozenset = frozenset()
    state_mismatch: frozenset = frozenset()
    unreachable: frozenset = frozenset()

    @property
    def is_empty(self):
        return not (self.missing or self.orphaned or self.state_mismatch)

    @property
    def partial(self):
        return bool(self.unreachable)

    def to_dict(self):
        return {
            "missing": [[pid, r.value] for pid, r in sorted(self.missing, key=_pair_key)],
            "orphaned": [[pid, r.value] for pid, r in sorted(self.orphaned, key=_pair_key)],
            "state_mismatch": [m.to_dict() for m in sorted(
                self.state_mismatch, key=lambda m: (m.person_id, RESOURCE_ORDER[m.resource]))],
            "unreachable": [r.value for r in sorted(self.unreachable, key=RESOURCE_ORDER.get)],
            "partial": self.partial,
        }

    def summary(self):
        return {
            "missing": len(self.missing),
            "orphaned": len(self.orphaned),
            "state_mismatch": len(self.state_mismatch),
            "unreachable": [r.value for r in sorted(self.unreachable, key=RESOURCE_ORDER.get)],
        }


def compute_drift(identities, matrix, fleet, today, grace_days=0):
    """Compare every identity's desired state with every reachable resource's account table.

    Read-only. Unreachable resources are listed and skipped, which marks the
    report partial.
    """
    desired = {pid: desired_state(identity, matrix, today, grace_days)
               for pid, identity in identities.items()}
    missing, orphaned, mismatched, unreachable = set(), set(), set(), set()

    for endpoint in fleet:
        try:
            accounts = {account.person_id: account for account in endpoint.list_accounts()}
        except ResourceDown:
            logger.warning("reconcile_resource_unreachable", resource=endpoint.id.value)
            unreachable.add(endpoint.id)
            continue

        for pid, states in desired.items():
            want = states[endpoint.id]
            account = accounts.get(pid)
            if want is DesiredState.REQUIRED_ACTIVE:
                if account is None:
                    missing.add((pid, endpoint.id))
                elif account.state is AccountState.SUSPENDED:
                    mismatched.add(StateMismatch(pid, endpoint.id, AccountState.ACTIVE, AccountState.SUSPENDED))
            elif want is DesiredState.SUSPENDED_IF_PRESENT:
                if account is not None and account.state is AccountState.ACTIVE:
                    mismatched.add(StateMismatch(pid, endpoint.id, AccountState.SUSPENDED, AccountState.ACTIVE))
            elif account is not None:
                orphaned.add((pid, endpoint.id))

        for pid in accounts.keys() - desired.keys():
            orphaned.add((pid, endpoint.id))

    return DriftReport(
        missing=frozenset(missing),
        orphaned=frozenset(orphaned),
        state_mismatch=frozenset(mismatched),
        unreachable=frozenset(unreachable),
    )
