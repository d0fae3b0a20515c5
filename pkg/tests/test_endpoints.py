import pytest

from app.errors import (
    AccountNotFound, AttributeConflict, InsecureChannel, PrivilegeRequired, ResourceDown,
)
from app.identity.models import ResourceId
from app.resources.endpoints import (
    AccountState, Connection, FaultKind, FaultMode, ResourceEndpoint, ResourceFleet,
)

ATTRS = {"uid": "p1", "full_name": "Pat", "department": "IT", "email": "p1@example.edu"}


@pytest.fixture
def endpoint():
    return ResourceEndpoint(ResourceId.UNIX_HOSTS)


def test_create_is_idempotent_with_equal_attributes(endpoint):
    first = endpoint.create_account("p1", ATTRS)
    second = endpoint.create_account("p1", dict(ATTRS))
    assert first == second
    assert first.state is AccountState.ACTIVE
    assert len(endpoint.list_accounts()) == 1


def test_create_with_other_attributes_conflicts(endpoint):
    endpoint.create_account("p1", ATTRS)
    with pytest.raises(AttributeConflict) as info:
        endpoint.create_account("p1", {**ATTRS, "department": "HR"})
    assert info.value.existing == ATTRS
    assert not info.value.retryable


def test_suspend_restore_delete(endpoint):
    endpoint.create_account("p1", ATTRS)
    assert endpoint.suspend_account("p1").state is AccountState.SUSPENDED
    assert endpoint.suspend_account("p1").state is AccountState.SUSPENDED
    assert endpoint.restore_account("p1").state is AccountState.ACTIVE
    assert endpoint.restore_account("p1").state is AccountState.ACTIVE
    endpoint.delete_account("p1")
    assert endpoint.delete_account("p1") is None
    assert endpoint.get_account("p1") is None


def test_verbs_on_absent_accounts(endpoint):
    assert endpoint.suspend_account("ghost") is None
    with pytest.raises(AccountNotFound):
        endpoint.restore_account("ghost")
    with pytest.raises(AccountNotFound):
        endpoint.set_attributes("ghost", {"department": "X"})


def test_set_attributes_merges(endpoint):
    endpoint.create_account("p1", ATTRS)
    account = endpoint.set_attributes("p1", {"department": "Registrar"})
    assert account.attributes["department"] == "Registrar"
    assert account.attributes["full_name"] == "Pat"


def test_every_verb_applied_twice_equals_once():
    verbs = [
        lambda e: e.create_account("p1", ATTRS),
        lambda e: e.suspend_account("p1"),
        lambda e: e.restore_account("p1"),
        lambda e: e.set_attributes("p1", {"department": "Registrar"}),
        lambda e: e.set_password("p1", b"$2b$04$hash"),
        lambda e: e.delete_account("p1"),
    ]
    for verb in verbs:
        once = ResourceEndpoint(ResourceId.ACCESS_REGISTRY)
        twice = ResourceEndpoint(ResourceId.ACCESS_REGISTRY)
        for e in (once, twice):
            e.create_account("p1", ATTRS)
        verb(once)
        verb(twice)
        verb(twice)
        assert once.export_accounts() == twice.export_accounts()


def test_mutations_need_a_secure_privileged_connection():
    insecure = ResourceEndpoint(ResourceId.DIRECTORY_MAIL, Connection(privileged=True, channel_secure=False))
    with pytest.raises(InsecureChannel):
        insecure.create_account("p1", ATTRS)
    unprivileged = ResourceEndpoint(ResourceId.DIRECTORY_MAIL, Connection(privileged=False, channel_secure=True))
    with pytest.raises(PrivilegeRequired):
        unprivileged.create_account("p1", ATTRS)
    assert unprivileged.list_accounts() == []


def test_down_fails_reads_and_writes(endpoint):
    endpoint.inject_fault(FaultMode(FaultKind.DOWN))
    with pytest.raises(ResourceDown):
        endpoint.create_account("p1", ATTRS)
    with pytest.raises(ResourceDown):
        endpoint.list_accounts()
    with pytest.raises(ResourceDown):
        endpoint.get_account("p1")


def test_intermittent_fails_every_nth_mutation(endpoint):
    endpoint.inject_fault(FaultMode.parse("intermittent:3"))
    outcomes = []
    for i in range(7):
        try:
            endpoint.create_account(f"p{i}", {"uid": f"p{i}"})
            outcomes.append("ok")
        except ResourceDown:
            outcomes.append("down")
    assert outcomes == ["down", "ok", "ok", "down", "ok", "ok", "down"]
    assert endpoint.mutation_calls == 7
    assert len(endpoint.list_accounts()) == 4


def test_random_faults_are_seeded():
    def run(seed):
        e = ResourceEndpoint(ResourceId.UNIX_HOSTS, seed=seed)
        e.inject_fault(FaultMode.parse("random:0.5"))
        results = []
        for i in range(50):
            try:
                e.suspend_account(f"p{i}")
                results.append(True)
            except ResourceDown:
                results.append(False)
        return results

    assert run(4) == run(4)
    assert True in run(4) and False in run(4)


@pytest.mark.parametrize("text", ["healthy", "down", "intermittent:2", "random:0.1"])
def test_fault_mode_text_round_trip(text):
    assert str(FaultMode.parse(text)) == text


@pytest.mark.parametrize("text", ["sideways", "intermittent:0", "random:2", "down:1"])
def test_bad_fault_modes(text):
    with pytest.raises(ValueError):
        FaultMode.parse(text)


def test_fleet_is_in_canonical_order():
    fleet = ResourceFleet.build()
    assert [e.id for e in fleet] == list(ResourceId)
    assert fleet.registry.id is ResourceId.ACCESS_REGISTRY
    fleet[ResourceId.UNIX_HOSTS].inject_fault(FaultMode(FaultKind.DOWN))
    fleet.heal_all()
    assert all(e.fault_mode.kind is FaultKind.HEALTHY for e in fleet)
