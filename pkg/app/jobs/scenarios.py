"""Named end-to-end scenarios.

Each scenario drives a fabric through feed batches the way an operator
would, then checks where the accounts ended up. Scenarios expect a fabric
on a ManualClock (they advance time between batches) and are usually run in
a non-persistent one.
"""

import json
import random

import structlog

from app.errors import ScenarioFailed, UndefinedTransition, UnknownScenario
from app.identity.lifecycle import apply_event
from app.identity.models import (
    HIREABLE_ROLES, EventKind, LifecycleEvent, ResourceId, Role, Status, SubRole, WithdrawalReason,
)
from app.provisioning.matrix import DesiredState, desired_state
from app.resources.endpoints import AccountState, FaultKind, FaultMode
from app.storage.audit_log import AuditCategory

logger = structlog.get_logger(__name__)

R = ResourceId
SCENARIOS = {}

DEPARTMENTS = ("Biology", "Chemistry", "Finance", "History", "Mathematics", "Registrar")


def scenario(name):
    def register(fn):
        SCENARIOS[name] = fn
        return fn
    return register


# --- helpers ---

def feed_line(person_id, full_name, role, sub_role, department, event, effective_date):
    return {
        "person_id": person_id,
        "full_name": full_name,
        "role": role,
        "sub_role": sub_role,
        "department": department,
        "event": event,
        "effective_date": effective_date.isoformat(),
    }


def feed_batch(lines):
    return "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines).encode("utf-8")


def account_states(fabric, person_id):
    """resource name -> account state name, or None where the person has no account."""
    states = {}
    for endpoint in fabric.fleet:
        account = next((a for a in endpoint.export_accounts() if a.person_id == person_id), None)
        states[endpoint.id.value] = account.state.value if account else None
    return states


def oracle_mismatches(fabric):
    """Recompute every account's desired state from scratch and list what disagrees."""
    today = fabric.clock.today()
    grace_days = fabric.config.deletion_grace_days
    identities = fabric.store.snapshot()
    problems = []
    for endpoint in fabric.fleet:
        accounts = {a.person_id: a for a in endpoint.export_accounts()}
        for pid in sorted(set(accounts) - set(identities)):
            problems.append(f"{endpoint.id.value}/{pid}: account without identity")
        for pid, identity in identities.items():
            want = desired_state(identity, fabric.matrix, today, grace_days)[endpoint.id]
            account = accounts.get(pid)
            if want is DesiredState.REQUIRED_ACTIVE and (account is None or account.state is not AccountState.ACTIVE):
                problems.append(f"{endpoint.id.value}/{pid}: expected active account")
            elif want is DesiredState.ABSENT and account is not None:
                problems.append(f"{endpoint.id.value}/{pid}: expected no account")
            elif (want is DesiredState.SUSPENDED_IF_PRESENT and account is not None
                  and account.state is AccountState.ACTIVE):
                problems.append(f"{endpoint.id.value}/{pid}: expected suspended or absent")
    return problems


def _summary(fabric, name, person_ids, failures, **extra):
    report = fabric.compliance_report()
    if report.findings:
        failures.append(f"{len(report.findings)} compliance findings")
    failures.extend(oracle_mismatches(fabric))
    if failures:
        raise ScenarioFailed(name, failures)
    identities = fabric.store.snapshot()
    return {
        "scenario": name,
        "ok": True,
        "identities": {pid: identities[pid].to_dict() for pid in person_ids},
        "accounts": {pid: account_states(fabric, pid) for pid in person_ids},
        "findings": len(report.findings),
        "pending_retries": len(fabric.retry_queue),
        **extra,
    }


def _step(fabric, pid, name, role, sub_role, department, event):
    fabric.apply_feed(feed_batch([feed_line(pid, name, role, sub_role, department, event, fabric.clock.today())]))
    fabric.clock.advance(days=30)


def _expect_states(failures, fabric, pid, expected, label):
    actual = account_states(fabric, pid)
    for resource, allowed in expected.items():
        if actual[resource.value] not in allowed:
            failures.append(f"{label}: {resource.value} is {actual[resource.value]}, expected one of {sorted(map(str, allowed))}")


ACTIVE = {"active"}
SUSPENDED = {"suspended"}
SUSPENDED_OR_ABSENT = {"suspended", None}
ABSENT = {None}


# --- scenarios ---

@scenario("student-full-lifecycle")
def student_full_lifecycle(fabric, seed=0):
    """Application, Matriculation, Enrollment, Graduation. Ends as Alumni on the registry and portal."""
    pid, name, dept = "stu-0001", "Avery Quinn", "Biology"
    failures = []
    _step(fabric, pid, name, "student", "prospect", dept, "application")
    fabric.attach_pii(pid, {"ssn": "219-09-9999", "date_of_birth": "2004-04-17"})
    _step(fabric, pid, name, "student", "active", dept, "matriculation")
    _expect_states(failures, fabric, pid, {r: ACTIVE for r in (
        R.ACCESS_REGISTRY, R.UNIX_HOSTS, R.STUDENT_PORTAL, R.LEARNING_PLATFORM)}, "matriculated")
    _step(fabric, pid, name, "student", "active", dept, "enrollment")
    _step(fabric, pid, name, "student", "alumni", dept, "graduation")

    identity = fabric.store.get_identity(pid)
    if identity.sub_role is not SubRole.ALUMNI:
        failures.append(f"sub_role is {identity.sub_role}, expected alumni")
    _expect_states(failures, fabric, pid, {
        R.ACCESS_REGISTRY: ACTIVE,
        R.STUDENT_PORTAL: ACTIVE,
        R.UNIX_HOSTS: SUSPENDED_OR_ABSENT,
        R.LEARNING_PLATFORM: SUSPENDED_OR_ABSENT,
        R.DIRECTORY_MAIL: ABSENT,
    }, "graduated")
    return _summary(fabric, "student-full-lifecycle", [pid], failures)


@scenario("student-withdrawal")
def student_withdrawal(fabric, seed=0):
    """A matriculated student withdraws; every account is suspended, none deleted."""
    pid, name, dept = "stu-0002", "Rowan Ellis", "History"
    failures = []
    _step(fabric, pid, name, "student", "prospect", dept, "application")
    fabric.attach_pii(pid, {"ssn": "078-05-1121"})
    _step(fabric, pid, name, "student", "active", dept, "matriculation")
    _step(fabric, pid, name, "student", "inactive", dept, "withdrawal:financial")

    identity = fabric.store.get_identity(pid)
    if identity.status is not Status.SUSPENDED:
        failures.append(f"status is {identity.status.value}, expected suspended")
    states = account_states(fabric, pid)
    present = {r: s for r, s in states.items() if s is not None}
    if not present:
        failures.append("withdrawn student has no accounts left")
    failures.extend(f"{r} is {s}, expected suspended" for r, s in present.items() if s != "suspended")
    return _summary(fabric, "student-withdrawal", [pid], failures)


@scenario("employee-leave")
def employee_leave(fabric, seed=0):
    """Hire, leave of absence (everything suspended), return (everything restored)."""
    pid, name, dept = "emp-0001", "Jordan Reyes", "Registrar"
    failures = []
    employee_resources = (R.ACCESS_REGISTRY, R.DIRECTORY_MAIL, R.UNIX_HOSTS)
    _step(fabric, pid, name, "employee", "individual_contributor", dept, "hire")
    fabric.attach_pii(pid, {"ssn": "219-09-9998", "bank_account": "000123456789"})
    _step(fabric, pid, name, "employee", "individual_contributor", dept, "leave_of_absence")
    _expect_states(failures, fabric, pid, {r: SUSPENDED for r in employee_resources}, "on leave")
    _step(fabric, pid, name, "employee", "individual_contributor", dept, "return_from_leave")
    _expect_states(failures, fabric, pid, {
        **{r: ACTIVE for r in employee_resources},
        R.STUDENT_PORTAL: ABSENT,
        R.LEARNING_PLATFORM: ABSENT,
    }, "returned")
    return _summary(fabric, "employee-leave", [pid], failures)


@scenario("employee-termination")
def employee_termination(fabric, seed=0):
    """A manager transfers, is terminated, and keeps no account once the grace period ends."""
    pid, name = "emp-0002", "Morgan Lee"
    failures = []
    _step(fabric, pid, name, "employee", "management", "Finance", None)
    fabric.attach_pii(pid, {"ssn": "219-09-9997"})
    _step(fabric, pid, name, "employee", "management", "Audit", None)
    departments = {fabric.fleet[r].get_account(pid).attributes.get("department")
                   for r in (R.ACCESS_REGISTRY, R.DIRECTORY_MAIL, R.UNIX_HOSTS, R.STUDENT_PORTAL)}
    if departments != {"Audit"}:
        failures.append(f"transfer left departments {sorted(map(str, departments))}")
    _step(fabric, pid, name, "employee", "management", "Audit", "termination")

    fabric.clock.advance(days=fabric.config.deletion_grace_days + 1)
    fabric.engine.purge_terminated()
    if fabric.store.get_identity(pid).status is not Status.TERMINATED:
        failures.append("identity is not terminated")
    _expect_states(failures, fabric, pid, {r: ABSENT for r in ResourceId}, "purged")
    return _summary(fabric, "employee-termination", [pid], failures)


# --- randomized churn ---

_CREATION_ROWS = (
    ("student", "prospect", "application"),
    ("student", "active", None),
    ("employee", "management", None),
    ("employee", "individual_contributor", "hire"),
    ("faculty", None, None),
    ("contractor", None, None),
)

_CHURN_EVENTS = (
    EventKind.APPLICATION, EventKind.MATRICULATION, EventKind.WITHDRAWAL, EventKind.GRADUATION,
    EventKind.ALUMNI_TRANSITION, EventKind.HIRE, EventKind.TRANSFER, EventKind.LEAVE_OF_ABSENCE,
    EventKind.RETURN_FROM_LEAVE, EventKind.TERMINATION,
)


def _random_event(kind, identity, rng, effective_date):
    if kind is EventKind.WITHDRAWAL:
        return LifecycleEvent(kind, effective_date, reason=rng.choice(list(WithdrawalReason)))
    if kind is EventKind.TRANSFER:
        department = rng.choice([d for d in DEPARTMENTS if d != identity.department])
        return LifecycleEvent(kind, effective_date, department=department)
    if kind is EventKind.HIRE:
        role = rng.choice(sorted(HIREABLE_ROLES, key=lambda r: r.value))
        sub_role = rng.choice([SubRole.MANAGEMENT, SubRole.INDIVIDUAL_CONTRIBUTOR]) if role is Role.EMPLOYEE else None
        return LifecycleEvent(kind, effective_date, role=role, sub_role=sub_role)
    return LifecycleEvent(kind, effective_date)


def _event_line(identity, event, successor):
    hint = event.kind.value
    if event.kind is EventKind.WITHDRAWAL:
        hint = f"{hint}:{event.reason.value}"
    return feed_line(identity.person_id, identity.full_name, successor.role.value,
                     successor.sub_role.value if successor.sub_role else None,
                     successor.department, hint, event.effective_date)


def _pick_event(identity, rng, effective_date):
    """A random lifecycle event that is defined for `identity` and changes it, as a feed line."""
    options = []
    for kind in _CHURN_EVENTS:
        event = _random_event(kind, identity, rng, effective_date)
        try:
            successor = apply_event(identity, event)
        except UndefinedTransition:
            continue
        if successor != identity:
            options.append((event, successor))
    if not options:
        return None
    event, successor = rng.choice(options)
    return _event_line(identity, event, successor)


def _mutation_calls(fabric):
    return sum(endpoint.mutation_calls for endpoint in fabric.fleet)


def drain_until_quiet(fabric, max_rounds=100):
    """Drain retries until the queue is empty or stops shrinking."""
    for _ in range(max_rounds):
        before = len(fabric.retry_queue)
        if not before:
            return 0
        fabric.engine.drain_retries()
        if len(fabric.retry_queue) >= before:
            break
    return len(fabric.retry_queue)


def churn(fabric, seed=0, identities=50, events=200, fault_rate=0.1, batch_size=10):
    """Random lifecycle churn under random faults, then heal, drain and correct.

    Returns the run's statistics. The caller decides what counts as failure;
    `random_churn` applies the standard checks.
    """
    rng = random.Random(f"{seed}:random-churn")
    fabric.fleet.reseed(f"{seed}:faults")
    for endpoint in fabric.fleet:
        endpoint.inject_fault(FaultMode(FaultKind.RANDOM, rate=fault_rate))

    people = [f"churn-{i:04d}" for i in range(identities)]
    lines = []
    for pid in people:
        role, sub_role, hint = rng.choice(_CREATION_ROWS)
        lines.append(feed_line(pid, f"Person {pid[-4:]}", role, sub_role, rng.choice(DEPARTMENTS),
                               hint, fabric.clock.today()))
    fabric.apply_feed(feed_batch(lines))
    for pid in people[::10]:
        fabric.attach_pii(pid, {"ssn": f"900-{rng.randrange(10, 99)}-{rng.randrange(1000, 9999)}"})

    applied = 0
    while applied < events:
        fabric.clock.advance(days=1)
        batch = []
        for pid in rng.sample(people, min(batch_size, len(people))):
            line = _pick_event(fabric.store.get_identity(pid), rng, fabric.clock.today())
            if line is not None:
                batch.append(line)
        if not batch:
            continue
        fabric.apply_feed(feed_batch(batch))
        applied += len(batch)

    calls = _mutation_calls(fabric)
    fabric.fleet.heal_all()
    drain_until_quiet(fabric)
    fabric.engine.purge_terminated()
    first = fabric.engine.reconcile()
    fabric.engine.apply_corrections(first)
    drain_until_quiet(fabric)
    final = fabric.engine.reconcile()
    calls += _mutation_calls(fabric)

    events_logged = fabric.audit.events
    mutation_events = sum(e.category is AuditCategory.RESOURCE_MUTATION for e in events_logged)
    sequences = [e.sequence for e in events_logged]
    return {
        "people": people,
        "events_applied": applied,
        "drift_before_fix": first.summary(),
        "drift_after_fix": final.summary(),
        "drift_empty": final.is_empty,
        "manual_intervention": len(fabric.retry_queue.manual_intervention()),
        "mutation_calls": calls,
        "mutation_events": mutation_events,
        "gap_free": sequences == list(range(sequences[0], sequences[0] + len(sequences))) if sequences else True,
    }


@scenario("random-churn")
def random_churn(fabric, seed=0):
    """Fifty identities, two hundred events, ten percent faults; must reconcile to zero drift."""
    stats = churn(fabric, seed)
    people = stats.pop("people")
    failures = []
    if not stats["drift_empty"]:
        failures.append(f"drift remains after correction: {stats['drift_after_fix']}")
    if stats["mutation_calls"] != stats["mutation_events"]:
        failures.append(f"{stats['mutation_calls']} resource calls but {stats['mutation_events']} audit events")
    if not stats["gap_free"]:
        failures.append("audit sequence has gaps")
    summary = _summary(fabric, "random-churn", [], failures, **stats)
    summary["identities"] = len(people)
    return summary


def list_scenarios():
    return {name: (fn.__doc__ or "").strip().splitlines()[0] for name, fn in sorted(SCENARIOS.items())}


def run_scenario(name, fabric, seed=0):
    fn = SCENARIOS.get(name)
    if fn is None:
        raise UnknownScenario(name)
    logger.info("scenario_started", scenario=name, seed=seed)
    result = fn(fabric, seed)
    logger.info("scenario_completed", scenario=name, findings=result["findings"])
    return result
