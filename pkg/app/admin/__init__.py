# Makes 'admin' a sub-package of 'app'.
from .delegation import (
    DOMAIN_ADMIN, GROUP_APPLICATIONS, SENIOR_APP_ADMIN, AccessLevel, AdminAction, AdminActionKind,
    AdminRole, AdminRoleKind, GroupTable, PermissionDecision, app_admin, is_permitted,
    perform_admin_action,
)
