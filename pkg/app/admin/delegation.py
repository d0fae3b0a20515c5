"""Delegated administration of application groups.

Who may do what is one static grant table. Application admins are
additionally confined to their own application. Anything the table does not
grant is denied, including every action on an application without groups.
"""

import threading
from dataclasses import dataclass, field
from enum import Enum

import structlog

from app.errors import (
    InvalidAdminAction, MemberLacksAccount, NotAGroupMember, PermissionDenied, ResourceError, UnknownGroup,
)
from app.identity.models import ResourceId
from app.resources.endpoints import AccountState
from app.storage.audit_log import AuditCategory, AuditOutcome

logger = structlog.get_logger(__name__)

GROUP_APPLICATIONS = (ResourceId.LEARNING_PLATFORM, ResourceId.STUDENT_PORTAL)


class AdminRoleKind(Enum):
    DOMAIN_ADMIN = "DomainAdmin"
    SENIOR_APP_ADMIN = "SeniorAppAdmin"
    APP_ADMIN = "AppAdmin"


@dataclass(frozen=True)
class AdminRole:
    kind: AdminRoleKind
    application: ResourceId | None = None

    def __post_init__(self):
        if (self.kind is AdminRoleKind.APP_ADMIN) != (self.application is not None):
            raise InvalidAdminAction("AppAdmin is scoped to exactly one application; other roles to none")

    @classmethod
    def parse(cls, text):
        """'DomainAdmin' | 'SeniorAppAdmin' | 'AppAdmin:<application>'"""
        name, _, app = text.partition(":")
        try:
            kind = AdminRoleKind(name)
            application = ResourceId(app) if app else None
            return cls(kind, application)
        except ValueError:
            raise InvalidAdminAction(f"unknown admin role {text!r}")

    def __str__(self):
        if self.application is None:
            return self.kind.value
        return f"{self.kind.value}:{self.application.value}"


DOMAIN_ADMIN = AdminRole(AdminRoleKind.DOMAIN_ADMIN)
SENIOR_APP_ADMIN = AdminRole(AdminRoleKind.SENIOR_APP_ADMIN)


def app_admin(application):
    return AdminRole(AdminRoleKind.APP_ADMIN, application)


class AdminActionKind(Enum):
    MANAGE_APPLICATION_GROUPS = "ManageApplicationGroups"
    ADD_MEMBER = "AddMember"
    MODIFY_ACCESS = "ModifyAccess"
    DELETE_MEMBER = "DeleteMember"
    CREATE_VIEW_GROUPS = "CreateViewGroups"
    CREATE_VIEW_SUB_GROUPS = "CreateViewSubGroups"
    ASSIGN_APPLICATION_ADMIN = "AssignApplicationAdmin"
    VIEW_MEMBERS = "ViewMembers"


MEMBER_ACTIONS = frozenset({AdminActionKind.ADD_MEMBER, AdminActionKind.DELETE_MEMBER,
                            AdminActionKind.MODIFY_ACCESS})

A = AdminActionKind
GRANTS = {
    AdminRoleKind.DOMAIN_ADMIN: frozenset({A.MANAGE_APPLICATION_GROUPS, A.CREATE_VIEW_GROUPS,
                                           A.CREATE_VIEW_SUB_GROUPS, A.ASSIGN_APPLICATION_ADMIN}),
    AdminRoleKind.SENIOR_APP_ADMIN: frozenset({A.CREATE_VIEW_GROUPS, A.CREATE_VIEW_SUB_GROUPS, A.VIEW_MEMBERS}),
    AdminRoleKind.APP_ADMIN: frozenset({A.ADD_MEMBER, A.MODIFY_ACCESS, A.DELETE_MEMBER, A.VIEW_MEMBERS}),
}


class AccessLevel(Enum):
    READ = "read"
    WRITE = "write"
    OWNER = "owner"


@dataclass(frozen=True)
class AdminAction:
    kind: AdminActionKind
    application: ResourceId
    group: str | None = None
    member: str | None = None
    sub_group: str | None = None
    access_level: AccessLevel | None = None
    # AssignApplicationAdmin: who becomes the application admin
    grantee: str | None = None

    def __post_init__(self):
        if (self.kind in MEMBER_ACTIONS) != (self.member is not None):
            raise InvalidAdminAction(f"{self.kind.value}: member is required for membership actions only")
        if self.kind is AdminActionKind.MODIFY_ACCESS and self.access_level is None:
            raise InvalidAdminAction("ModifyAccess needs an access level")
        if self.kind is AdminActionKind.ASSIGN_APPLICATION_ADMIN and not self.grantee:
            raise InvalidAdminAction("AssignApplicationAdmin needs a grantee")
        needs_group = self.kind not in (AdminActionKind.ASSIGN_APPLICATION_ADMIN, AdminActionKind.CREATE_VIEW_GROUPS)
        if needs_group and not self.group:
            raise InvalidAdminAction(f"{self.kind.value} needs a group")

    @property
    def target(self):
        parts = [self.application.value]
        if self.group:
            parts.append(self.group)
        if self.member or self.grantee:
            parts.append(self.member or self.grantee)
        return "/".join(parts)


@dataclass(frozen=True)
class PermissionDecision:
    permitted: bool
    trace: tuple

    def __bool__(self):
        return self.permitted


def is_permitted(role, action):
    """Decide from the grant table alone; pure."""
    trace = [f"role {role}", f"action {action.kind.value} on {action.application.value}"]
    if action.application not in GROUP_APPLICATIONS:
        trace.append(f"deny: {action.application.value} has no delegated groups")
        return PermissionDecision(False, tuple(trace))
    if action.kind not in GRANTS[role.kind]:
        trace.append(f"deny: {role.kind.value} is not granted {action.kind.value}")
        return PermissionDecision(False, tuple(trace))
    if role.kind is AdminRoleKind.APP_ADMIN and role.application is not action.application:
        trace.append(f"deny: application admin scoped to {role.application.value}")
        return PermissionDecision(False, tuple(trace))
    trace.append("allow")
    return PermissionDecision(True, tuple(trace))


@dataclass
class Group:
    members: set = field(default_factory=set)
    sub_groups: set = field(default_factory=set)
    access: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "members": sorted(self.members),
            "sub_groups": sorted(self.sub_groups),
            "access": {pid: self.access[pid].value for pid in sorted(self.access)},
        }


class GroupTable:
    """Groups on the group-bearing applications, plus who holds which admin role."""

    def __init__(self, domain_admins=()):
        self._groups = {}
        self._roles = {}
        self._lock = threading.RLock()
        for person_id in domain_admins:
            self.assign(person_id, DOMAIN_ADMIN)

    # --- admin roles ---

    def assign(self, person_id, role):
        with self._lock:
            self._roles.setdefault(person_id, set()).add(role)

    def holds(self, person_id, role):
        with self._lock:
            return role in self._roles.get(person_id, set())

    def roles_of(self, person_id):
        with self._lock:
            return sorted(self._roles.get(person_id, set()), key=str)

    # --- groups ---

    def _get(self, application, name):
        group = self._groups.get((application, name))
        if group is None:
            raise UnknownGroup(application, name)
        return group

    def require_group(self, application, name):
        with self._lock:
            return self._get(application, name)

    def create_group(self, application, name):
        with self._lock:
            return self._groups.setdefault((application, name), Group())

    def dissolve_group(self, application, name):
        with self._lock:
            self._get(application, name)
            del self._groups[(application, name)]

    def group_names(self, application):
        with self._lock:
            return sorted(name for app, name in self._groups if app is application)

    def add_sub_group(self, application, name, sub_group):
        with self._lock:
            group = self._get(application, name)
            group.sub_groups.add(sub_group)
            return sorted(group.sub_groups)

    def sub_groups(self, application, name):
        with self._lock:
            return sorted(self._get(application, name).sub_groups)

    def add_member(self, application, name, person_id, access_level=AccessLevel.READ):
        with self._lock:
            group = self._get(application, name)
            group.members.add(person_id)
            group.access.setdefault(person_id, access_level)

    def remove_member(self, application, name, person_id):
        with self._lock:
            group = self._get(application, name)
            group.members.discard(person_id)
            group.access.pop(person_id, None)

    def set_access(self, application, name, person_id, access_level):
        with self._lock:
            group = self._get(application, name)
            if person_id not in group.members:
                raise NotAGroupMember(application, name, person_id)
            group.access[person_id] = access_level

    def members(self, application, name):
        with self._lock:
            group = self._get(application, name)
            return {pid: group.access[pid].value for pid in sorted(group.members)}

    def memberships(self):
        """(application, group, person_id) for every membership."""
        with self._lock:
            return sorted(
                ((app, name, pid) for (app, name), group in self._groups.items() for pid in group.members),
                key=lambda m: (m[0].value, m[1], m[2]),
            )

    # --- snapshot support ---

    def to_dict(self):
        with self._lock:
            return {
                "groups": [
                    {"application": app.value, "name": name, **self._groups[(app, name)].to_dict()}
                    for app, name in sorted(self._groups, key=lambda k: (k[0].value, k[1]))
                ],
                "admin_roles": {pid: sorted(str(r) for r in roles)
                                for pid, roles in sorted(self._roles.items())},
            }

    @classmethod
    def from_dict(cls, data):
        table = cls()
        for item in data.get("groups", []):
            key = (ResourceId(item["application"]), item["name"])
            table._groups[key] = Group(
                members=set(item["members"]),
                sub_groups=set(item["sub_groups"]),
                access={pid: AccessLevel(level) for pid, level in item["access"].items()},
            )
        for pid, roles in data.get("admin_roles", {}).items():
            for role in roles:
                table.assign(pid, AdminRole.parse(role))
        return table


def _require_active_account(fleet, application, person_id):
    account = fleet[application].get_account(person_id)
    if account is None or account.state is not AccountState.ACTIVE:
        raise MemberLacksAccount(application, person_id)


def _apply(action, groups, fleet):
    app, name, kind = action.application, action.group, action.kind
    if kind is AdminActionKind.MANAGE_APPLICATION_GROUPS:
        groups.dissolve_group(app, name)
        return {"dissolved": name}
    if kind is AdminActionKind.CREATE_VIEW_GROUPS:
        if name:
            groups.create_group(app, name)
        return {"groups": groups.group_names(app)}
    if kind is AdminActionKind.CREATE_VIEW_SUB_GROUPS:
        if action.sub_group:
            return {"sub_groups": groups.add_sub_group(app, name, action.sub_group)}
        return {"sub_groups": groups.sub_groups(app, name)}
    if kind is AdminActionKind.ADD_MEMBER:
        groups.require_group(app, name)
        _require_active_account(fleet, app, action.member)
        groups.add_member(app, name, action.member, action.access_level or AccessLevel.READ)
        return {"members": groups.members(app, name)}
    if kind is AdminActionKind.DELETE_MEMBER:
        groups.remove_member(app, name, action.member)
        return {"members": groups.members(app, name)}
    if kind is AdminActionKind.MODIFY_ACCESS:
        groups.set_access(app, name, action.member, action.access_level)
        return {"members": groups.members(app, name)}
    if kind is AdminActionKind.ASSIGN_APPLICATION_ADMIN:
        groups.assign(action.grantee, app_admin(app))
        return {"assigned": str(app_admin(app)), "grantee": action.grantee}
    return {"members": groups.members(app, name)}


def perform_admin_action(session, role, action, groups, *, sessions, fleet, audit):
    """Check session, role holding and the grant table, then apply and audit the action.

    Denials and failures are audited before they are raised. The change runs
    inside a write-ahead audit entry, so a log that cannot be opened leaves
    the group table untouched.
    """
    actor = session.person_id if session is not None else "unknown"
    base_detail = {"role": str(role)}

    def deny(reason):
        audit.record(actor, AuditCategory.ADMIN_ACTION, action.kind.value, action.target,
                     AuditOutcome.DENIED, {**base_detail, "reason": reason})
        logger.info("admin_action_denied", actor=actor, action=action.kind.value, reason=reason)
        raise PermissionDenied(reason)

    if not sessions.is_valid(session):
        deny("session invalid")
    if not groups.holds(actor, role):
        deny(f"{actor} does not hold {role}")
    decision = is_permitted(role, action)
    if not decision:
        deny(decision.trace[-1])

    with audit.pending(actor, AuditCategory.ADMIN_ACTION, action.kind.value, action.target) as entry:
        try:
            result = _apply(action, groups, fleet)
        except (UnknownGroup, MemberLacksAccount, NotAGroupMember, ResourceError) as e:
            entry.commit(AuditOutcome.FAILURE, {**base_detail, "error": str(e)})
            logger.info("admin_action_failed", actor=actor, action=action.kind.value, error=type(e).__name__)
            raise
        entry.commit(AuditOutcome.ALLOWED, {**base_detail, "trace": list(decision.trace)})
    logger.info("admin_action_performed", actor=actor, action=action.kind.value, target=action.target)
    return result
