# Makes 'resources' a sub-package of 'app'.
from .endpoints import (
    HEALTHY, Account, AccountState, Connection, FaultKind, FaultMode, ResourceEndpoint,
    ResourceFleet,
)
