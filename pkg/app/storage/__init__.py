# Makes 'storage' a sub-package of 'app'.
from .data_store import IdentityStore
from .audit_log import SYSTEM_ACTOR, AuditCategory, AuditEvent, AuditLog, AuditOutcome, read_events
