import json
import random
from datetime import date

import pytest

from app.errors import DuplicateRow, UnknownResource, UnknownRole
from app.identity.models import Identity, ResourceId, Role, Status, SubRole
from app.provisioning.matrix import (
    DesiredState, ProvisioningMatrix, default_matrix, desired_state, diff_entitlements,
    entitlements_for, load_matrix, serialize_matrix,
)

AR = ResourceId.ACCESS_REGISTRY
DM = ResourceId.DIRECTORY_MAIL
UH = ResourceId.UNIX_HOSTS
SP = ResourceId.STUDENT_PORTAL
LP = ResourceId.LEARNING_PLATFORM

# role -> (AR, DM, UH, SP, LP) marks of the base table
BASE_TABLE = {
    Role.EMPLOYEE:   (1, 1, 1, 0, 0),
    Role.STUDENT:    (1, 0, 1, 0, 1),
    Role.FACULTY:    (1, 0, 1, 0, 1),
    Role.CONTRACTOR: (1, 1, 0, 0, 0),
}

# (role, sub_role) -> marks of the sub-role table
SUB_TABLE = {
    (Role.EMPLOYEE, SubRole.MANAGEMENT):             (1, 1, 1, 1, 0),
    (Role.EMPLOYEE, SubRole.INDIVIDUAL_CONTRIBUTOR): (1, 1, 1, 0, 0),
    (Role.STUDENT, SubRole.ACTIVE):                  (0, 0, 0, 1, 1),
    (Role.STUDENT, SubRole.INACTIVE):                (0, 0, 0, 0, 0),
    (Role.STUDENT, SubRole.ALUMNI):                  (0, 0, 0, 1, 0),
    (Role.STUDENT, SubRole.PROSPECT):                (0, 0, 0, 0, 0),
}

COLUMNS = (AR, DM, UH, SP, LP)


@pytest.mark.parametrize("role", list(BASE_TABLE))
@pytest.mark.parametrize("column", range(len(COLUMNS)))
def test_base_rows_reproduce_every_cell(role, column):
    marked = COLUMNS[column] in default_matrix().base_rows[role]
    assert marked == bool(BASE_TABLE[role][column])


@pytest.mark.parametrize("key", list(SUB_TABLE))
@pytest.mark.parametrize("column", range(len(COLUMNS)))
def test_sub_rows_reproduce_every_cell(key, column):
    marked = COLUMNS[column] in default_matrix().sub_rows[key]
    assert marked == bool(SUB_TABLE[key][column])


def test_default_matrix_has_no_other_rows():
    matrix = default_matrix()
    assert set(matrix.base_rows) == set(BASE_TABLE)
    assert set(matrix.sub_rows) == set(SUB_TABLE)


@pytest.mark.parametrize("role,sub_role,expected", [
    (Role.EMPLOYEE, SubRole.INDIVIDUAL_CONTRIBUTOR, {AR, DM, UH}),
    (Role.EMPLOYEE, SubRole.MANAGEMENT, {AR, DM, UH, SP}),
    (Role.STUDENT, SubRole.ACTIVE, {AR, UH, LP, SP}),
    (Role.STUDENT, SubRole.ALUMNI, {AR, SP}),
    (Role.STUDENT, SubRole.INACTIVE, set()),
    (Role.STUDENT, SubRole.PROSPECT, set()),
    (Role.FACULTY, None, {AR, UH, LP}),
    (Role.CONTRACTOR, None, {AR, DM}),
])
def test_effective_entitlements(role, sub_role, expected):
    entitlements = entitlements_for(default_matrix(), role, sub_role, "p1")
    assert entitlements.resources == frozenset(expected)
    assert entitlements.person_id == "p1"
    contributed = frozenset().union(*(resources for _, resources in entitlements.rule_trace))
    assert contributed == entitlements.resources


def test_rule_trace_names_both_rows():
    trace = entitlements_for(default_matrix(), Role.STUDENT, SubRole.ACTIVE).rule_trace
    assert [label for label, _ in trace] == ["student", "student/active"]


def test_missing_role_is_unknown():
    matrix = ProvisioningMatrix(base_rows={Role.EMPLOYEE: {AR}}, sub_rows={})
    with pytest.raises(UnknownRole):
        entitlements_for(matrix, Role.STUDENT, SubRole.ACTIVE)


def test_diff_entitlements():
    assert diff_entitlements(set(), {AR}) == ({AR}, set())
    assert diff_entitlements({AR, DM}, {AR, DM}) == (set(), set())
    active = entitlements_for(default_matrix(), Role.STUDENT, SubRole.ACTIVE).resources
    alumni = entitlements_for(default_matrix(), Role.STUDENT, SubRole.ALUMNI).resources
    provision, deprovision = diff_entitlements(active, alumni)
    assert provision == set()
    assert deprovision == {LP, UH}


def test_diff_entitlements_reproduces_target():
    rng = random.Random(3)
    for _ in range(500):
        old = {r for r in ResourceId if rng.random() < 0.5}
        new = {r for r in ResourceId if rng.random() < 0.5}
        provision, deprovision = diff_entitlements(old, new)
        assert not provision & deprovision
        assert (set(old) - deprovision) | provision == new


def test_adding_marks_never_removes_resources():
    rng = random.Random(8)
    base = default_matrix()
    overrides = {(Role.STUDENT, SubRole.INACTIVE), (Role.STUDENT, SubRole.PROSPECT)}
    for _ in range(100):
        base_rows = {role: set(res) for role, res in base.base_rows.items()}
        sub_rows = {key: set(res) for key, res in base.sub_rows.items()}
        if rng.random() < 0.5:
            base_rows[rng.choice(list(base_rows))].add(rng.choice(list(ResourceId)))
        else:
            sub_rows[rng.choice(list(sub_rows))].add(rng.choice(list(ResourceId)))
        grown = ProvisioningMatrix(base_rows, sub_rows)
        for role, sub_role in list(SUB_TABLE) + [(Role.FACULTY, None), (Role.CONTRACTOR, None)]:
            before = entitlements_for(base, role, sub_role).resources
            after = entitlements_for(grown, role, sub_role).resources
            assert before <= after
            if (role, sub_role) in overrides:
                assert after == grown.sub_rows[(role, sub_role)]


def test_serialize_round_trip():
    matrix = default_matrix()
    assert load_matrix(serialize_matrix(matrix)) == matrix


def test_unknown_resource_in_config():
    text = json.dumps({"role": "employee", "sub_role": None, "resources": ["FooApp"]})
    with pytest.raises(UnknownResource) as info:
        load_matrix(text)
    assert info.value.name == "FooApp"


def test_duplicate_row_in_config():
    row = json.dumps({"role": "employee", "sub_role": None, "resources": ["access_registry"]})
    with pytest.raises(DuplicateRow):
        load_matrix(row + "\n" + row + "\n")


def test_unknown_role_in_config():
    with pytest.raises(UnknownRole):
        load_matrix(json.dumps({"role": "janitor", "resources": []}))


def _identity(role, sub_role, status=Status.ACTIVE, terminated_on=None):
    return Identity("p1", "P", role, sub_role, "X", status, terminated_on=terminated_on)


def test_desired_state_for_withdrawn_student_is_suspension_everywhere():
    states = desired_state(_identity(Role.STUDENT, SubRole.INACTIVE, Status.SUSPENDED),
                           default_matrix(), date(2026, 1, 1))
    assert set(states.values()) == {DesiredState.SUSPENDED_IF_PRESENT}


def test_desired_state_for_prospect_has_nothing_required():
    states = desired_state(_identity(Role.STUDENT, SubRole.PROSPECT), default_matrix(), date(2026, 1, 1))
    assert DesiredState.REQUIRED_ACTIVE not in states.values()


def test_desired_state_for_terminated_respects_grace():
    terminated = _identity(Role.EMPLOYEE, SubRole.MANAGEMENT, Status.TERMINATED, date(2026, 1, 1))
    matrix = default_matrix()
    in_grace = desired_state(terminated, matrix, date(2026, 1, 5), grace_days=7)
    assert set(in_grace.values()) == {DesiredState.SUSPENDED_IF_PRESENT}
    after = desired_state(terminated, matrix, date(2026, 1, 8), grace_days=7)
    assert set(after.values()) == {DesiredState.ABSENT}
    assert set(desired_state(terminated, matrix, date(2026, 1, 1)).values()) == {DesiredState.ABSENT}
