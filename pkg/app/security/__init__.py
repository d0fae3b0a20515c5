# Makes 'security' a sub-package of 'app'.
from .filters import (
    SEARCHABLE_ATTRIBUTES, And, Equals, Or, Presence, build_search_filter, escape_filter_value,
    render, search_registry, unescape_filter_value,
)
from .guard import (
    AccessControlList, AccessDecision, AclEntry, DenyReason, ObjectReferenceMap, ProtectedField,
    check_object_access, html_escape, protect_field, scan_for_plaintext, unprotect_field,
)
