# Makes 'provisioning' a sub-package of 'app'.
from .matrix import (
    DesiredState, EntitlementSet, ProvisioningMatrix, active_resources, default_matrix,
    desired_state, diff_entitlements, entitlements_for, load_matrix, serialize_matrix,
)
from .retry_queue import ActionStatus, ActionVerb, ResourceAction, RetryQueue
from .reconciler import DriftReport, StateMismatch, compute_drift
from .engine import (
    ApprovalDecision, ProvisioningEngine, WorkKind, WorkOrder, WorkOutcome, auto_approve,
)
