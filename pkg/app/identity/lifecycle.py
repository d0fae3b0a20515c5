"""The identity lifecycle state machine.

`apply_event` is pure: it never mutates its input and the same
(identity, event) pair always yields the same successor.
"""

from dataclasses import dataclass, replace
from enum import Enum

from app.errors import UndefinedTransition
from app.identity.models import EventKind, Role, Status, SubRole, is_valid_pair

LEAVE_ROLES = frozenset({Role.EMPLOYEE, Role.FACULTY})


class ViolationCode(Enum):
    EMPTY_PERSON_ID = "EmptyPersonId"
    INVALID_ROLE_SUB_ROLE_PAIR = "InvalidRoleSubRolePair"
    TERMINATED_WITHOUT_DATE = "TerminatedWithoutDate"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    message: str


def _undefined(identity, event):
    return UndefinedTransition(identity.role, identity.sub_role, identity.status, event.kind)


def apply_event(identity, event):
    """Return the identity that results from `event`, or raise UndefinedTransition."""
    kind = event.kind
    role, sub_role, status = identity.role, identity.sub_role, identity.status
    student = role is Role.STUDENT

    if kind is EventKind.APPLICATION:
        if status is not Status.TERMINATED:
            raise _undefined(identity, event)
        return replace(identity, role=Role.STUDENT, sub_role=SubRole.PROSPECT,
                       status=Status.ACTIVE, terminated_on=None)

    if kind is EventKind.HIRE:
        if status is not Status.TERMINATED:
            raise _undefined(identity, event)
        return replace(identity, role=event.hire_role, sub_role=event.hire_sub_role,
                       status=Status.ACTIVE, terminated_on=None)

    if status is Status.TERMINATED:
        raise _undefined(identity, event)

    if kind is EventKind.MATRICULATION:
        if student and sub_role is SubRole.PROSPECT and status is Status.ACTIVE:
            return replace(identity, sub_role=SubRole.ACTIVE)
    elif kind is EventKind.ENROLLMENT:
        if student and sub_role is SubRole.ACTIVE and status is Status.ACTIVE:
            return identity
    elif kind is EventKind.WITHDRAWAL:
        # the reason only matters to the audit record
        if student and sub_role is SubRole.ACTIVE and status is Status.ACTIVE:
            return replace(identity, sub_role=SubRole.INACTIVE, status=Status.SUSPENDED)
    elif kind is EventKind.GRADUATION:
        if student and sub_role is SubRole.ACTIVE and status is Status.ACTIVE:
            return replace(identity, sub_role=SubRole.ALUMNI)
    elif kind is EventKind.ALUMNI_TRANSITION:
        if student and sub_role is SubRole.INACTIVE:
            return replace(identity, sub_role=SubRole.ALUMNI, status=Status.ACTIVE)
    elif kind is EventKind.TRANSFER:
        return replace(identity, department=event.department)
    elif kind is EventKind.LEAVE_OF_ABSENCE:
        if role in LEAVE_ROLES and status is Status.ACTIVE:
            return replace(identity, status=Status.SUSPENDED)
    elif kind is EventKind.RETURN_FROM_LEAVE:
        if role in LEAVE_ROLES and status is Status.SUSPENDED:
            return replace(identity, status=Status.ACTIVE)
    elif kind is EventKind.TERMINATION:
        return replace(identity, status=Status.TERMINATED, terminated_on=event.effective_date)

    raise _undefined(identity, event)


def validate_identity(identity):
    """Return every invariant the identity breaks; an empty list means well-formed."""
    violations = []
    if not identity.person_id or not str(identity.person_id).strip():
        violations.append(Violation(ViolationCode.EMPTY_PERSON_ID, "person_id is empty"))
    if not is_valid_pair(identity.role, identity.sub_role):
        sub = identity.sub_role.value if identity.sub_role else None
        violations.append(Violation(
            ViolationCode.INVALID_ROLE_SUB_ROLE_PAIR,
            f"{identity.role.value} cannot carry sub-role {sub}",
        ))
    if identity.status is Status.TERMINATED and identity.terminated_on is None:
        violations.append(Violation(
            ViolationCode.TERMINATED_WITHOUT_DATE, "terminated identity has no termination date"
        ))
    return violations
