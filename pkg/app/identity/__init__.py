# Makes 'identity' a sub-package of 'app'.
from .models import (
    EventKind, Identity, LifecycleEvent, PersonId, PiiField, ResourceId, Role, Status,
    SubRole, WithdrawalReason, new_identity,
)
from .lifecycle import Violation, ViolationCode, apply_event, validate_identity
