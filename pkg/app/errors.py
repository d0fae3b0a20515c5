"""Exception hierarchy shared by every idfabric module.

Each error carries the CLI exit code it maps to, so the command layer can
turn any failure into a single diagnostic line and a status.
"""

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_VIOLATION = 3


class IdFabricError(Exception):
    exit_code = EXIT_VIOLATION


# --- configuration / parsing ---

class ConfigError(IdFabricError):
    exit_code = EXIT_USAGE


class MalformedLine(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, line_number, cause):
        self.line_number = line_number
        self.cause = cause
        super().__init__(f"line {line_number}: {cause}")


class DuplicateInBatch(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, person_id):
        self.person_id = person_id
        super().__init__(f"person_id {person_id!r} appears more than once in the batch")


class UnknownRole(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown role {name!r}")


class UnknownResource(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown resource {name!r}")


class DuplicateRow(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, row):
        self.row = row
        super().__init__(f"matrix row {row} defined more than once")


# --- identity lifecycle ---

class InvalidEvent(IdFabricError):
    pass


class UndefinedTransition(IdFabricError):
    def __init__(self, role, sub_role, status, kind):
        self.role = role
        self.sub_role = sub_role
        self.status = status
        self.kind = kind
        sub = sub_role.value if sub_role else "-"
        super().__init__(
            f"no transition for {kind.value} from {role.value}/{sub} ({status.value})"
        )


# --- store / engine ---

class DuplicateIdentity(IdFabricError):
    def __init__(self, person_id):
        self.person_id = person_id
        super().__init__(f"identity {person_id!r} already exists")


class UnknownIdentity(IdFabricError):
    def __init__(self, person_id):
        self.person_id = person_id
        super().__init__(f"unknown identity {person_id!r}")


class NotTerminated(IdFabricError):
    def __init__(self, person_id):
        self.person_id = person_id
        super().__init__(f"identity {person_id!r} is not terminated")


class StoreUnavailable(IdFabricError):
    exit_code = EXIT_PARTIAL


class EngineBusy(IdFabricError):
    exit_code = EXIT_PARTIAL

    def __init__(self, in_flight):
        self.in_flight = in_flight
        super().__init__(f"engine not quiesced: {in_flight} workflow(s) in flight")


class LogUnavailable(IdFabricError):
    exit_code = EXIT_PARTIAL


# --- resources ---

class ResourceError(IdFabricError):
    """A managed resource refused or failed a call."""

    exit_code = EXIT_PARTIAL
    retryable = True

    def __init__(self, resource, message):
        self.resource = resource
        super().__init__(f"{resource.value}: {message}")


class ResourceDown(ResourceError):
    def __init__(self, resource):
        super().__init__(resource, "resource down")


class InsecureChannel(ResourceError):
    def __init__(self, resource):
        super().__init__(resource, "mutation refused over an insecure channel")


class PrivilegeRequired(ResourceError):
    def __init__(self, resource):
        super().__init__(resource, "mutation requires a privileged connection")


class AttributeConflict(ResourceError):
    retryable = False

    def __init__(self, resource, person_id, existing):
        self.person_id = person_id
        self.existing = existing
        super().__init__(resource, f"account {person_id!r} exists with different attributes")


class AccountNotFound(ResourceError):
    retryable = False

    def __init__(self, resource, person_id):
        self.person_id = person_id
        super().__init__(resource, f"no account for {person_id!r}")


# --- authn ---

class UnknownSerial(IdFabricError):
    def __init__(self, issuer, serial):
        self.issuer = issuer
        self.serial = serial
        super().__init__(f"serial {serial} was never issued by {issuer!r}")


# --- admin ---

class PermissionDenied(IdFabricError):
    exit_code = EXIT_PARTIAL

    def __init__(self, reason):
        self.reason = reason
        super().__init__(f"permission denied: {reason}")


class UnknownGroup(IdFabricError):
    def __init__(self, application, group):
        self.application = application
        self.group = group
        super().__init__(f"unknown group {group!r} on {application.value}")


class MemberLacksAccount(IdFabricError):
    def __init__(self, application, person_id):
        self.application = application
        self.person_id = person_id
        super().__init__(f"{person_id!r} has no active account on {application.value}")


class InvalidAdminAction(IdFabricError):
    exit_code = EXIT_USAGE


class NotAGroupMember(IdFabricError):
    def __init__(self, application, group, person_id):
        self.application = application
        self.group = group
        self.person_id = person_id
        super().__init__(f"{person_id!r} is not a member of {group!r} on {application.value}")


# --- guard ---

class UnknownAttribute(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, attribute):
        self.attribute = attribute
        super().__init__(f"attribute {attribute!r} is not searchable")


class FilterSyntaxError(IdFabricError):
    exit_code = EXIT_USAGE


class AuthenticationFailure(IdFabricError):
    """Ciphertext could not be authenticated under the given key."""



# --- scenarios ---

class UnknownScenario(IdFabricError):
    exit_code = EXIT_USAGE

    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown scenario {name!r}")


class ScenarioFailed(IdFabricError):
    """A scenario finished in a state its expectations rule out."""

    def __init__(self, name, failures):
        self.name = name
        self.failures = list(failures)
        super().__init__(f"scenario {name} failed: {'; '.join(self.failures)}")


class UsageError(IdFabricError):
    """Bad command line."""

    exit_code = EXIT_USAGE
