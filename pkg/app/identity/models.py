"""Identity domain types.

Everything here is an immutable value. Enum values are the lowercase names
used on the wire (feed lines, matrix config, snapshot file).
"""

from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Mapping, NewType

from app.errors import InvalidEvent

PersonId = NewType("PersonId", str)


class Role(Enum):
    EMPLOYEE = "employee"
    STUDENT = "student"
    FACULTY = "faculty"
    CONTRACTOR = "contractor"


class SubRole(Enum):
    MANAGEMENT = "management"
    INDIVIDUAL_CONTRIBUTOR = "individual_contributor"
    PROSPECT = "prospect"
    ACTIVE = "active"
    INACTIVE = "inactive"
    ALUMNI = "alumni"


class Status(Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    TERMINATED = "terminated"


class ResourceId(Enum):
    # Declaration order is the canonical order everywhere (reports, snapshot, queues).
    ACCESS_REGISTRY = "access_registry"
    DIRECTORY_MAIL = "directory_mail"
    UNIX_HOSTS = "unix_hosts"
    STUDENT_PORTAL = "student_portal"
    LEARNING_PLATFORM = "learning_platform"


RESOURCE_ORDER = {resource: index for index, resource in enumerate(ResourceId)}


class EventKind(Enum):
    APPLICATION = "application"
    MATRICULATION = "matriculation"
    ENROLLMENT = "enrollment"
    WITHDRAWAL = "withdrawal"
    GRADUATION = "graduation"
    ALUMNI_TRANSITION = "alumni_transition"
    HIRE = "hire"
    TRANSFER = "transfer"
    LEAVE_OF_ABSENCE = "leave_of_absence"
    RETURN_FROM_LEAVE = "return_from_leave"
    TERMINATION = "termination"


class WithdrawalReason(Enum):
    ACADEMIC = "academic"
    FINANCIAL = "financial"
    VOLUNTARY = "voluntary"


# role -> sub-roles it admits; None means the role carries no sub-role
SUB_ROLES_BY_ROLE = {
    Role.EMPLOYEE: frozenset({SubRole.MANAGEMENT, SubRole.INDIVIDUAL_CONTRIBUTOR}),
    Role.STUDENT: frozenset({SubRole.PROSPECT, SubRole.ACTIVE, SubRole.INACTIVE, SubRole.ALUMNI}),
    Role.FACULTY: None,
    Role.CONTRACTOR: None,
}

HIREABLE_ROLES = frozenset({Role.EMPLOYEE, Role.FACULTY, Role.CONTRACTOR})


def is_valid_pair(role, sub_role):
    allowed = SUB_ROLES_BY_ROLE[role]
    if allowed is None:
        return sub_role is None
    return sub_role in allowed


@dataclass(frozen=True)
class LifecycleEvent:
    kind: EventKind
    effective_date: date
    reason: WithdrawalReason | None = None
    department: str | None = None
    # Hire payload: role/sub-role of the (re)hired identity
    role: Role | None = None
    sub_role: SubRole | None = None

    def __post_init__(self):
        if self.kind is EventKind.WITHDRAWAL and self.reason is None:
            raise InvalidEvent("withdrawal requires a reason")
        if self.kind is not EventKind.WITHDRAWAL and self.reason is not None:
            raise InvalidEvent(f"{self.kind.value} does not take a reason")
        if self.kind is EventKind.TRANSFER and not (self.department or "").strip():
            raise InvalidEvent("transfer requires a non-empty department")
        if self.kind is EventKind.HIRE:
            role = self.role or Role.EMPLOYEE
            if role not in HIREABLE_ROLES:
                raise InvalidEvent(f"cannot hire into role {role.value}")
            if not is_valid_pair(role, self.hire_sub_role):
                raise InvalidEvent(f"invalid hire pair {role.value}/{self.sub_role}")
        elif self.role is not None or self.sub_role is not None:
            raise InvalidEvent(f"{self.kind.value} does not take a role")

    @property
    def hire_role(self):
        return self.role or Role.EMPLOYEE

    @property
    def hire_sub_role(self):
        if self.sub_role is not None:
            return self.sub_role
        if self.hire_role is Role.EMPLOYEE:
            return SubRole.INDIVIDUAL_CONTRIBUTOR
        return None

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "effective_date": self.effective_date.isoformat(),
            "reason": self.reason.value if self.reason else None,
            "department": self.department,
            "role": self.role.value if self.role else None,
            "sub_role": self.sub_role.value if self.sub_role else None,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            kind=EventKind(data["kind"]),
            effective_date=date.fromisoformat(data["effective_date"]),
            reason=WithdrawalReason(data["reason"]) if data.get("reason") else None,
            department=data.get("department"),
            role=Role(data["role"]) if data.get("role") else None,
            sub_role=SubRole(data["sub_role"]) if data.get("sub_role") else None,
        )


@dataclass(frozen=True)
class PiiField:
    value: str
    sensitive: bool = True


@dataclass(frozen=True)
class Identity:
    person_id: PersonId
    full_name: str
    role: Role
    sub_role: SubRole | None
    department: str
    status: Status = Status.ACTIVE
    pii_fields: Mapping[str, PiiField] = field(default_factory=dict)
    terminated_on: date | None = None

    def account_attributes(self, email_domain):
        """Attributes every managed account of this identity carries."""
        return {
            "uid": self.person_id,
            "full_name": self.full_name,
            "department": self.department,
            "email": f"{self.person_id}@{email_domain}",
        }

    def to_dict(self):
        # pii_fields are serialized by the snapshot writer, which protects sensitive values
        return {
            "person_id": self.person_id,
            "full_name": self.full_name,
            "role": self.role.value,
            "sub_role": self.sub_role.value if self.sub_role else None,
            "department": self.department,
            "status": self.status.value,
            "terminated_on": self.terminated_on.isoformat() if self.terminated_on else None,
        }


def new_identity(person_id, full_name, role, sub_role, department, pii_fields=None):
    """Validated constructor: rejects bad person ids and role/sub-role pairs."""
    if not person_id or not str(person_id).strip():
        raise InvalidEvent("person_id must be non-empty")
    if not is_valid_pair(role, sub_role):
        sub = sub_role.value if sub_role else None
        raise InvalidEvent(f"invalid role/sub_role pair {role.value}/{sub}")
    return Identity(
        person_id=PersonId(person_id),
        full_name=full_name,
        role=role,
        sub_role=sub_role,
        department=department,
        status=Status.ACTIVE,
        pii_fields=dict(pii_fields or {}),
    )
