"""The provisioning engine: provision, update and deprovision workflows plus reconciliation.

Events for one person are serialized; distinct people may run concurrently.
Every resource attempt is audited exactly once, write-ahead. A failing
resource never aborts a workflow: its action is captured, queued and
retried later.
"""

import threading
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum

import bcrypt
import structlog

import config
from app.auth.certificates import Certificate
from app.clock import SystemClock
from app.errors import (
    AttributeConflict, DuplicateIdentity, EngineBusy, IdFabricError, LogUnavailable, NotTerminated,
    ResourceDown, ResourceError,
)
from app.feeds.feed_parser import Create, NoChange, Update
from app.identity.lifecycle import apply_event
from app.identity.models import RESOURCE_ORDER, ResourceId, Status, new_identity
from app.provisioning.matrix import active_resources, diff_entitlements, sorted_resources
from app.provisioning.reconciler import compute_drift
from app.provisioning.retry_queue import ActionStatus, ActionVerb, ResourceAction, RetryQueue
from app.resources.endpoints import AccountState
from app.storage.audit_log import SYSTEM_ACTOR, AuditCategory, AuditOutcome

logger = structlog.get_logger(__name__)

# account attributes a Transfer (or rename) pushes to existing accounts
PROPAGATED_ATTRIBUTES = ("full_name", "department")


class WorkKind(Enum):
    PROVISION = "Provision"
    UPDATE = "Update"
    DEPROVISION = "Deprovision"
    CORRECT = "Correct"


class WorkOutcome(Enum):
    SUCCESS = "Success"
    PARTIAL_SUCCESS = "PartialSuccess"
    DENIED = "Denied"


_AUDIT_OUTCOME = {
    WorkOutcome.SUCCESS: AuditOutcome.SUCCESS,
    WorkOutcome.PARTIAL_SUCCESS: AuditOutcome.PARTIAL,
    WorkOutcome.DENIED: AuditOutcome.DENIED,
}


@dataclass
class WorkOrder:
    person_id: str | None
    kind: WorkKind
    actions: list = field(default_factory=list)
    origin_event: object = None
    outcome: WorkOutcome | None = None
    approval: str | None = None

    @property
    def queued(self):
        return [a for a in self.actions if a.status is ActionStatus.PENDING]

    @property
    def failed(self):
        return [a for a in self.actions if a.status is ActionStatus.FAILED]

    def to_dict(self):
        return {
            "person_id": self.person_id,
            "kind": self.kind.value,
            "outcome": self.outcome.value if self.outcome else None,
            "approval": self.approval,
            "event": self.origin_event.to_dict() if self.origin_event is not None else None,
            "actions": [action.to_dict() for action in self.actions],
        }


@dataclass(frozen=True)
class ApprovalDecision:
    approved: bool
    marker: str


def auto_approve(work_order):
    return ApprovalDecision(approved=True, marker="auto")


class ProvisioningEngine:
    def __init__(self, store, matrix, fleet, audit, retry_queue=None, clock=None,
                 max_attempts=config.RETRY_MAX_ATTEMPTS, grace_days=config.DELETION_GRACE_DAYS,
                 email_domain=config.EMAIL_DOMAIN, approval_hook=auto_approve,
                 bcrypt_rounds=config.BCRYPT_ROUNDS):
        self.store = store
        self.matrix = matrix
        self.fleet = fleet
        self.audit = audit
        self.retry_queue = retry_queue if retry_queue is not None else RetryQueue()
        self.clock = clock or SystemClock()
        self.max_attempts = max_attempts
        self.grace_days = grace_days
        self.email_domain = email_domain
        self.approval_hook = approval_hook
        self.bcrypt_rounds = bcrypt_rounds

        self._person_locks = defaultdict(threading.RLock)
        self._person_locks_guard = threading.Lock()
        # held by reconcile for its whole run; workflows take it briefly to register
        self._quiesce = threading.Lock()
        self._in_flight = 0
        self._drain_lock = threading.Lock()

    # --- serialization ---

    def _person_lock(self, person_id):
        with self._person_locks_guard:
            return self._person_locks[person_id]

    @contextmanager
    def _workflow(self, person_id):
        with self._quiesce:
            self._in_flight += 1
        try:
            if person_id is None:
                yield
            else:
                with self._person_lock(person_id):
                    yield
        finally:
            with self._quiesce:
                self._in_flight -= 1

    @property
    def in_flight(self):
        return self._in_flight

    # --- dispatch ---

    def _perform(self, action):
        endpoint = self.fleet[action.resource]
        pid = action.person_id
        if action.verb is ActionVerb.CREATE_ACCOUNT:
            endpoint.create_account(pid, action.attributes)
        elif action.verb is ActionVerb.SUSPEND_ACCOUNT:
            endpoint.suspend_account(pid)
        elif action.verb is ActionVerb.RESTORE_ACCOUNT:
            endpoint.restore_account(pid)
        elif action.verb is ActionVerb.DELETE_ACCOUNT:
            endpoint.delete_account(pid)
        elif action.verb is ActionVerb.SET_ATTRIBUTES:
            endpoint.set_attributes(pid, action.attributes)
        elif action.verb is ActionVerb.SET_PASSWORD:
            endpoint.set_password(pid, action.attributes["password_hash"].encode())
        elif action.verb is ActionVerb.STORE_CERTIFICATE:
            endpoint.store_certificate(pid, Certificate.from_dict(action.attributes["certificate"]))

    def _audit_detail(self, action):
        detail = {"attempt": action.attempt}
        if action.verb is ActionVerb.SET_PASSWORD:
            return detail
        if action.attributes:
            detail["attributes"] = dict(sorted(action.attributes.items()))
        return detail

    def _attempt(self, action, actor):
        """One audited call against the resource. Returns the ResourceError, or None on success."""
        target = f"{action.resource.value}/{action.person_id}"
        with self.audit.pending(actor, AuditCategory.RESOURCE_MUTATION, action.verb.value, target) as entry:
            action.attempt += 1
            try:
                self._perform(action)
            except ResourceError as e:
                action.status = ActionStatus.FAILED
                action.cause = str(e)
                entry.commit(AuditOutcome.FAILURE,
                             {**self._audit_detail(action), "cause": str(e), "retryable": e.retryable})
                logger.info("resource_action_failed", resource=action.resource.value,
                            verb=action.verb.value, person_id=action.person_id,
                            attempt=action.attempt, cause=str(e))
                return e
            action.status = ActionStatus.DONE
            action.cause = None
            entry.commit(AuditOutcome.SUCCESS, self._audit_detail(action))
        return None

    def _resolve_conflict(self, action, error, actor):
        """An existing account with other attributes is brought in line instead of recreated."""
        follow_up = ResourceAction(action.resource, ActionVerb.SET_ATTRIBUTES, action.person_id,
                                   attributes=dict(action.attributes))
        logger.info("attribute_conflict_resolving", resource=action.resource.value,
                    person_id=action.person_id)
        self._execute(follow_up, actor)
        if follow_up.status is ActionStatus.DONE:
            action.status = ActionStatus.DONE
            action.cause = "resolved by SetAttributes"
        return follow_up

    def _execute(self, action, actor, extra=None):
        """Dispatch one action, or queue it behind earlier actions for the same account."""
        if self.retry_queue.has_pending(action.person_id, action.resource):
            action.status = ActionStatus.PENDING
            self.retry_queue.enqueue(action)
            return
        error = self._attempt(action, actor)
        if error is None:
            return
        if error.retryable:
            action.status = ActionStatus.PENDING
            self.retry_queue.enqueue(action)
        elif isinstance(error, AttributeConflict):
            follow_up = self._resolve_conflict(action, error, actor)
            if extra is not None:
                extra.append(follow_up)

    def _dispatch(self, order, actor):
        follow_ups = []
        for action in list(order.actions):
            self._execute(action, actor, follow_ups)
        order.actions.extend(follow_ups)
        if any(a.status is not ActionStatus.DONE for a in order.actions):
            order.outcome = WorkOutcome.PARTIAL_SUCCESS
        else:
            order.outcome = WorkOutcome.SUCCESS

    def _approve(self, order):
        decision = self.approval_hook(order)
        order.approval = decision.marker
        if not decision.approved:
            for action in order.actions:
                action.status = ActionStatus.FAILED
                action.cause = "rejected by approval hook"
            order.actions = []
            order.outcome = WorkOutcome.DENIED
        return decision.approved

    def _finish(self, order, action_name, actor):
        target = order.person_id if order.person_id is not None else "fleet"
        self.audit.record(actor, AuditCategory.WORKFLOW, action_name, target,
                          _AUDIT_OUTCOME[order.outcome], {
                              "approval": order.approval,
                              "actions": len(order.actions),
                              "queued": len(order.queued),
                              "failed": len(order.failed),
                          })
        logger.info("workflow_completed", workflow=action_name, person_id=order.person_id,
                    outcome=order.outcome.value, actions=len(order.actions))
        return order

    # --- planning ---

    def _read_account(self, resource, person_id):
        """The account as the resource reports it; `ResourceDown` reads as unknown."""
        try:
            return self.fleet[resource].get_account(person_id), True
        except ResourceDown:
            return None, False

    def _plan_removal(self, person_id, verb):
        """Suspend or delete every account the person may hold, registry last."""
        actions = []
        for resource in sorted_resources(ResourceId, registry_first=False):
            account, known = self._read_account(resource, person_id)
            if known and account is None:
                continue
            if known and verb is ActionVerb.SUSPEND_ACCOUNT and account.state is AccountState.SUSPENDED:
                continue
            actions.append(ResourceAction(resource, verb, person_id))
        return actions

    def _plan_update(self, old, new):
        if new.status is Status.TERMINATED:
            verb = ActionVerb.SUSPEND_ACCOUNT if self.grace_days > 0 else ActionVerb.DELETE_ACCOUNT
            return self._plan_removal(new.person_id, verb)

        pid = new.person_id
        old_active = active_resources(old, self.matrix)
        new_active = active_resources(new, self.matrix)
        to_provision, to_deprovision = diff_entitlements(old_active, new_active)
        attributes = new.account_attributes(self.email_domain)

        actions = [ResourceAction(r, ActionVerb.SUSPEND_ACCOUNT, pid)
                   for r in sorted_resources(to_deprovision, registry_first=False)]

        for resource in sorted_resources(to_provision):
            account, known = self._read_account(resource, pid)
            if account is None:
                actions.append(ResourceAction(resource, ActionVerb.CREATE_ACCOUNT, pid, attributes=dict(attributes)))
                if not known:
                    # the account may exist suspended; restore is a no-op on a fresh one
                    actions.append(ResourceAction(resource, ActionVerb.RESTORE_ACCOUNT, pid))
                continue
            if account.state is AccountState.SUSPENDED:
                actions.append(ResourceAction(resource, ActionVerb.RESTORE_ACCOUNT, pid))
            if dict(account.attributes) != attributes:
                actions.append(ResourceAction(resource, ActionVerb.SET_ATTRIBUTES, pid, attributes=dict(attributes)))

        changed = {name: attributes[name] for name in PROPAGATED_ATTRIBUTES
                   if getattr(old, name) != getattr(new, name)}
        if changed:
            for resource in sorted_resources(old_active & new_active):
                actions.append(ResourceAction(resource, ActionVerb.SET_ATTRIBUTES, pid, attributes=dict(changed)))
        return actions

    # --- workflows ---

    def provision_workflow(self, record, actor=SYSTEM_ACTOR):
        """Create the identity for a new feed record and its entitled accounts, registry first."""
        pid = record.person_id
        with self._workflow(pid):
            identity = new_identity(pid, record.full_name, record.role, record.sub_role, record.department)
            if identity.person_id in self.store:
                raise DuplicateIdentity(pid)
            attributes = identity.account_attributes(self.email_domain)
            order = WorkOrder(pid, WorkKind.PROVISION, origin_event=record.to_event())
            order.actions = [ResourceAction(r, ActionVerb.CREATE_ACCOUNT, pid, attributes=dict(attributes))
                             for r in sorted_resources(active_resources(identity, self.matrix))]
            if not self._approve(order):
                return self._finish(order, "provision", actor)
            self.store.add_identity(identity)
            self._dispatch(order, actor)
            return self._finish(order, "provision", actor)

    def update_workflow(self, delta, actor=SYSTEM_ACTOR):
        """Apply a lifecycle event and move the person's accounts to the new entitlements."""
        pid = delta.person_id
        with self._workflow(pid):
            identity = self.store.get_identity(pid)
            successor = apply_event(identity, delta.event)
            kind = WorkKind.UPDATE
            if successor.status is Status.TERMINATED and self.grace_days == 0:
                kind = WorkKind.DEPROVISION
            order = WorkOrder(pid, kind, origin_event=delta.event)
            order.actions = self._plan_update(identity, successor)
            name = f"update:{delta.event.kind.value}"
            if not self._approve(order):
                return self._finish(order, name, actor)
            self.store.replace_identity(successor)
            self._dispatch(order, actor)
            return self._finish(order, name, actor)

    def deprovision_workflow(self, person_id, actor=SYSTEM_ACTOR):
        """Delete every account a terminated person still holds. The identity stays as a tombstone."""
        with self._workflow(person_id):
            identity = self.store.get_identity(person_id)
            if identity.status is not Status.TERMINATED:
                raise NotTerminated(person_id)
            order = WorkOrder(person_id, WorkKind.DEPROVISION)
            order.actions = self._plan_removal(person_id, ActionVerb.DELETE_ACCOUNT)
            if not self._approve(order):
                return self._finish(order, "deprovision", actor)
            self._dispatch(order, actor)
            return self._finish(order, "deprovision", actor)

    def process_delta(self, delta, actor=SYSTEM_ACTOR):
        """Route one feed delta to its workflow. NoChange runs nothing and returns None."""
        if isinstance(delta, Create):
            return self.provision_workflow(delta.record, actor)
        if isinstance(delta, Update):
            return self.update_workflow(delta, actor)
        return None

    def apply_deltas(self, deltas, actor=SYSTEM_ACTOR):
        """Run a batch one record at a time. Returns (orders, failures).

        A delta that raises is audited as a failed workflow and the person's
        remaining deltas are skipped; everyone else still runs. Only an
        unavailable audit log stops the batch.
        """
        orders, failures = [], []
        failed = set()
        for delta in deltas:
            if isinstance(delta, NoChange) or delta.person_id in failed:
                continue
            try:
                orders.append(self.process_delta(delta, actor))
            except LogUnavailable:
                raise
            except IdFabricError as e:
                failed.add(delta.person_id)
                failures.append(self._record_failure(delta, e, actor))
        return orders, failures

    def _record_failure(self, delta, error, actor):
        name = "provision" if isinstance(delta, Create) else f"update:{delta.event.kind.value}"
        detail = {"error": type(error).__name__, "cause": str(error)}
        self.audit.record(actor, AuditCategory.WORKFLOW, name, delta.person_id, AuditOutcome.FAILURE, detail)
        logger.warning("workflow_failed", workflow=name, person_id=delta.person_id, error=detail["error"])
        return {"person_id": delta.person_id, "workflow": name, **detail}

    def set_password(self, person_id, password, actor=SYSTEM_ACTOR):
        with self._workflow(person_id):
            self.store.get_identity(person_id)
            hashed = bcrypt.hashpw(password.encode(), bcrypt.gensalt(rounds=self.bcrypt_rounds))
            order = WorkOrder(person_id, WorkKind.UPDATE)
            order.actions = [ResourceAction(ResourceId.ACCESS_REGISTRY, ActionVerb.SET_PASSWORD, person_id,
                                            attributes={"password_hash": hashed.decode()})]
            if not self._approve(order):
                return self._finish(order, "set_password", actor)
            self._dispatch(order, actor)
            return self._finish(order, "set_password", actor)

    def store_certificate(self, person_id, certificate, actor=SYSTEM_ACTOR):
        """Record an issued certificate on the person's registry account."""
        with self._workflow(person_id):
            self.store.get_identity(person_id)
            order = WorkOrder(person_id, WorkKind.UPDATE)
            order.actions = [ResourceAction(ResourceId.ACCESS_REGISTRY, ActionVerb.STORE_CERTIFICATE, person_id,
                                            attributes={"certificate": certificate.to_dict()})]
            if not self._approve(order):
                return self._finish(order, "store_certificate", actor)
            self._dispatch(order, actor)
            return self._finish(order, "store_certificate", actor)

    def purge_terminated(self, actor=SYSTEM_ACTOR):
        """Deprovision terminated identities whose deletion grace period has elapsed."""
        today = self.clock.today()
        orders = []
        for pid, identity in self.store.snapshot().items():
            if identity.status is not Status.TERMINATED:
                continue
            if identity.terminated_on and today < identity.terminated_on + timedelta(days=self.grace_days):
                continue
            if not self._plan_removal(pid, ActionVerb.DELETE_ACCOUNT):
                continue
            orders.append(self.deprovision_workflow(pid, actor))
        return orders

    # --- retries ---

    def drain_retries(self, actor=SYSTEM_ACTOR):
        """Retry queued actions FIFO per resource. Returns how many completed.

        A resource's queue stops at its first still-failing action. An action
        that reaches the attempt limit leaves the queue flagged for manual
        intervention.
        """
        completed = 0
        with self._workflow(None), self._drain_lock:
            for resource in ResourceId:
                while True:
                    action = self.retry_queue.peek(resource)
                    if action is None:
                        break
                    with self._person_lock(action.person_id):
                        error = self._attempt(action, actor)
                    if error is None:
                        self.retry_queue.pop(resource)
                        completed += 1
                        continue
                    if not error.retryable:
                        self.retry_queue.pop(resource)
                        if isinstance(error, AttributeConflict):
                            self._resolve_conflict(action, error, actor)
                        continue
                    if action.attempt >= self.max_attempts:
                        self.retry_queue.pop(resource)
                        self.retry_queue.flag_manual_intervention(action)
                        continue
                    action.status = ActionStatus.PENDING
                    break
        if completed:
            logger.info("retries_drained", completed=completed, remaining=len(self.retry_queue))
        return completed

    # --- reconciliation ---

    def reconcile(self, actor=SYSTEM_ACTOR):
        """Read-only drift report. Refuses to run while any workflow is in flight."""
        with self._quiesce:
            if self._in_flight:
                raise EngineBusy(self._in_flight)
            report = compute_drift(self.store.snapshot(), self.matrix, self.fleet,
                                   self.clock.today(), self.grace_days)
            outcome = AuditOutcome.PARTIAL if report.partial else AuditOutcome.SUCCESS
            self.audit.record(actor, AuditCategory.RECONCILIATION, "reconcile", "fleet", outcome,
                              report.summary())
        logger.info("reconcile_completed", **report.summary())
        return report

    def apply_corrections(self, report, actor=SYSTEM_ACTOR):
        """Issue the actions that move every drifted account toward its desired state."""
        with self._workflow(None):
            order = WorkOrder(None, WorkKind.CORRECT)
            identities = self.store.snapshot()
            for pid, resource in sorted(report.orphaned, key=lambda p: (p[0], -RESOURCE_ORDER[p[1]])):
                order.actions.append(ResourceAction(resource, ActionVerb.DELETE_ACCOUNT, pid))
            for mismatch in sorted(report.state_mismatch,
                                   key=lambda m: (m.person_id, RESOURCE_ORDER[m.resource])):
                verb = (ActionVerb.RESTORE_ACCOUNT if mismatch.expected is AccountState.ACTIVE
                        else ActionVerb.SUSPEND_ACCOUNT)
                order.actions.append(ResourceAction(mismatch.resource, verb, mismatch.person_id))
            for pid, resource in sorted(report.missing, key=lambda p: (p[0], RESOURCE_ORDER[p[1]])):
                attributes = identities[pid].account_attributes(self.email_domain)
                order.actions.append(ResourceAction(resource, ActionVerb.CREATE_ACCOUNT, pid,
                                                    attributes=dict(attributes)))
            if not self._approve(order):
                return self._finish(order, "apply_corrections", actor)
            self._dispatch(order, actor)
            return self._finish(order, "apply_corrections", actor)
