"""Provisioning matrix: which managed resources each role and sub-role is entitled to.

Effective entitlements are the union of the role's base row and its sub-role
row, with three restricted sub-roles:

  * Student/Inactive and Student/Prospect get their sub-row only (empty by default);
  * Student/Alumni get their sub-row plus the registry from the base row.
"""

import json
from dataclasses import dataclass
from datetime import timedelta
from enum import Enum
from types import MappingProxyType

from app.errors import DuplicateRow, MalformedLine, UnknownResource, UnknownRole
from app.identity.models import RESOURCE_ORDER, ResourceId, Role, Status, SubRole, is_valid_pair

R = ResourceId

# restricted (role, sub_role) -> base resources it keeps
RESTRICTED_SUB_ROWS = MappingProxyType({
    (Role.STUDENT, SubRole.INACTIVE): frozenset(),
    (Role.STUDENT, SubRole.PROSPECT): frozenset(),
    (Role.STUDENT, SubRole.ALUMNI): frozenset({R.ACCESS_REGISTRY}),
})


class DesiredState(Enum):
    REQUIRED_ACTIVE = "required_active"
    SUSPENDED_IF_PRESENT = "suspended_if_present"
    ABSENT = "absent"


@dataclass(frozen=True)
class ProvisioningMatrix:
    base_rows: MappingProxyType
    sub_rows: MappingProxyType

    def __post_init__(self):
        object.__setattr__(self, "base_rows", MappingProxyType(
            {role: frozenset(res) for role, res in dict(self.base_rows).items()}))
        object.__setattr__(self, "sub_rows", MappingProxyType(
            {key: frozenset(res) for key, res in dict(self.sub_rows).items()}))

    def __eq__(self, other):
        if not isinstance(other, ProvisioningMatrix):
            return NotImplemented
        return dict(self.base_rows) == dict(other.base_rows) and dict(self.sub_rows) == dict(other.sub_rows)

    def __hash__(self):
        return hash((frozenset(self.base_rows.items()), frozenset(self.sub_rows.items())))


@dataclass(frozen=True)
class EntitlementSet:
    person_id: str | None
    resources: frozenset
    # (row label, resources the row contributed)
    rule_trace: tuple


def default_matrix():
    return ProvisioningMatrix(
        base_rows={
            Role.EMPLOYEE: {R.ACCESS_REGISTRY, R.DIRECTORY_MAIL, R.UNIX_HOSTS},
            Role.STUDENT: {R.ACCESS_REGISTRY, R.UNIX_HOSTS, R.LEARNING_PLATFORM},
            Role.FACULTY: {R.ACCESS_REGISTRY, R.UNIX_HOSTS, R.LEARNING_PLATFORM},
            Role.CONTRACTOR: {R.ACCESS_REGISTRY, R.DIRECTORY_MAIL},
        },
        sub_rows={
            (Role.EMPLOYEE, SubRole.MANAGEMENT): {R.ACCESS_REGISTRY, R.DIRECTORY_MAIL, R.UNIX_HOSTS, R.STUDENT_PORTAL},
            (Role.EMPLOYEE, SubRole.INDIVIDUAL_CONTRIBUTOR): {R.ACCESS_REGISTRY, R.DIRECTORY_MAIL, R.UNIX_HOSTS},
            (Role.STUDENT, SubRole.ACTIVE): {R.STUDENT_PORTAL, R.LEARNING_PLATFORM},
            (Role.STUDENT, SubRole.INACTIVE): set(),
            (Role.STUDENT, SubRole.ALUMNI): {R.STUDENT_PORTAL},
            (Role.STUDENT, SubRole.PROSPECT): set(),
        },
    )


def _row_label(role, sub_role=None):
    return role.value if sub_role is None else f"{role.value}/{sub_role.value}"


def entitlements_for(matrix, role, sub_role, person_id=None):
    if role not in matrix.base_rows:
        raise UnknownRole(role.value)

    base = matrix.base_rows[role]
    sub = matrix.sub_rows.get((role, sub_role), frozenset()) if sub_role else frozenset()
    restricted = RESTRICTED_SUB_ROWS.get((role, sub_role))

    if restricted is not None:
        kept = base & restricted
        trace = [(_row_label(role, sub_role), sub)]
        if kept:
            trace.append((f"{_row_label(role)} (retained)", kept))
        resources = sub | kept
    else:
        trace = [(_row_label(role), base)]
        if sub_role is not None:
            trace.append((_row_label(role, sub_role), sub))
        resources = base | sub

    return EntitlementSet(person_id=person_id, resources=frozenset(resources), rule_trace=tuple(trace))


def diff_entitlements(old, new):
    """(to_provision, to_deprovision) taking `old` to `new`."""
    old, new = frozenset(old), frozenset(new)
    return new - old, old - new


def sorted_resources(resources, registry_first=True):
    ordered = sorted(resources, key=RESOURCE_ORDER.get)
    return ordered if registry_first else list(reversed(ordered))


def desired_state(identity, matrix, today, grace_days=0):
    """Map every resource to the state the identity's accounts should be in.

    Non-terminated identities keep revoked accounts suspended rather than
    deleted; terminated identities keep them suspended until the grace period
    ends, after which nothing may remain.
    """
    if identity.status is Status.TERMINATED:
        in_grace = (identity.terminated_on is not None
                    and today < identity.terminated_on + timedelta(days=grace_days))
        state = DesiredState.SUSPENDED_IF_PRESENT if in_grace else DesiredState.ABSENT
        return {resource: state for resource in ResourceId}

    entitled = frozenset()
    if identity.status is Status.ACTIVE:
        entitled = entitlements_for(matrix, identity.role, identity.sub_role, identity.person_id).resources
    return {
        resource: DesiredState.REQUIRED_ACTIVE if resource in entitled else DesiredState.SUSPENDED_IF_PRESENT
        for resource in ResourceId
    }


def active_resources(identity, matrix):
    """Resources on which the identity should currently hold an Active account."""
    if identity.status is not Status.ACTIVE:
        return frozenset()
    return entitlements_for(matrix, identity.role, identity.sub_role, identity.person_id).resources


# --- config file ---

def _parse_resources(names):
    resources = set()
    for name in names:
        try:
            resources.add(ResourceId(name))
        except ValueError:
            raise UnknownResource(name)
    return resources


def load_matrix(text):
    """Build a matrix from JSON-lines rows: {"role", "sub_role", "resources"}."""
    base_rows, sub_rows = {}, {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_number, f"invalid JSON ({e.msg})")
        if not isinstance(row, dict) or "role" not in row:
            raise MalformedLine(line_number, "row must be an object with a role")
        try:
            role = Role(row["role"])
        except ValueError:
            raise UnknownRole(row["role"])
        sub_role = None
        if row.get("sub_role") is not None:
            try:
                sub_role = SubRole(row["sub_role"])
            except ValueError:
                raise UnknownRole(f"{row['role']}/{row['sub_role']}")
            if not is_valid_pair(role, sub_role):
                raise UnknownRole(f"{row['role']}/{row['sub_role']}")
        resources = _parse_resources(row.get("resources", []))

        if sub_role is None:
            if role in base_rows:
                raise DuplicateRow(_row_label(role))
            base_rows[role] = resources
        else:
            if (role, sub_role) in sub_rows:
                raise DuplicateRow(_row_label(role, sub_role))
            sub_rows[(role, sub_role)] = resources

    return ProvisioningMatrix(base_rows=base_rows, sub_rows=sub_rows)


def serialize_matrix(matrix):
    lines = []
    for role in Role:
        if role in matrix.base_rows:
            lines.append({"role": role.value, "sub_role": None,
                          "resources": [r.value for r in sorted_resources(matrix.base_rows[role])]})
        for sub_role in SubRole:
            if (role, sub_role) in matrix.sub_rows:
                lines.append({"role": role.value, "sub_role": sub_role.value,
                              "resources": [r.value for r in sorted_resources(matrix.sub_rows[(role, sub_role)])]})
    return "".join(json.dumps(line) + "\n" for line in lines)
