import json

import pytest

from app.cli.commands import run

CLOCK = "2026-03-02T09:00:00+00:00"


def write_config(directory):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "idfabric.json"
    path.write_text(json.dumps({
        "snapshot_path": str(directory / "snapshot.json"),
        "audit_log_path": str(directory / "audit.jsonl"),
        "bcrypt_rounds": 4,
        "field_key": "cli-test-key",
        "domain_admins": ["adm-0001"],
    }))
    return path


def write_feed(directory, *records):
    path = directory / "feed.jsonl"
    lines = []
    for person_id, role, sub_role, event in records:
        lines.append(json.dumps({
            "person_id": person_id, "full_name": f"Person {person_id}", "role": role, "sub_role": sub_role,
            "department": "Finance", "event": event, "effective_date": "2026-03-02",
        }))
    path.write_text("".join(line + "\n" for line in lines))
    return path


@pytest.fixture
def cli(tmp_path, capsys):
    config = write_config(tmp_path)

    def invoke(*args, seed=None):
        capsys.readouterr()
        argv = ["--config", str(config), "--clock", CLOCK]
        if seed is not None:
            argv += ["--seed", str(seed)]
        code = run(argv + list(args))
        return code, capsys.readouterr().out
    return invoke


@pytest.fixture
def hired(cli, tmp_path):
    feed = write_feed(tmp_path, ("e1", "employee", "management", "hire"), ("s1", "student", "active", None))
    code, out = cli("feed", "apply", str(feed))
    assert code == 0, out
    return cli


def test_empty_feed_is_a_clean_run(cli, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, out = cli("feed", "apply", str(empty))
    assert code == 0
    assert out.startswith("0 records")


def test_malformed_feed_is_a_usage_error(cli, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    assert cli("feed", "apply", str(bad))[0] == 2


def test_identity_show_json(hired):
    code, out = hired("--json", "identity", "show", "e1")
    assert code == 0
    payload = json.loads(out)
    assert payload["identity"]["role"] == "employee"
    assert payload["accounts"]["access_registry"] == "active"
    assert "access_registry" in payload["entitlements"]


def test_unknown_identity_is_a_violation(hired):
    assert hired("identity", "show", "nobody")[0] == 3


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["fault", "unix_hosts", "sideways"],
    ["fault", "mainframe", "down"],
    ["event", "apply", "e1", "promotion"],
    ["admin", "check", "Janitor", "AddMember"],
])
def test_bad_usage_exits_2(cli, argv):
    assert cli(*argv)[0] == 2


def test_event_apply_and_pii(hired):
    assert hired("event", "apply", "e1", "transfer", "--department", "Audit")[0] == 0
    assert json.loads(hired("--json", "identity", "show", "e1")[1])["identity"]["department"] == "Audit"
    assert hired("identity", "set-pii", "e1", "ssn", "219-09-9999")[0] == 0
    payload = json.loads(hired("--json", "identity", "show", "e1")[1])
    assert payload["pii_fields"]["ssn"] == {"sensitive": True, "value": "***"}


def test_clean_compliance_report(hired):
    code, out = hired("report", "compliance")
    assert code == 0
    assert out.strip().endswith("0 findings")


def test_reconcile_and_faults(hired):
    assert hired("reconcile")[0] == 0
    assert hired("fault", "unix_hosts", "down")[0] == 0
    code, out = hired("--json", "reconcile")
    assert code == 1
    assert json.loads(out)["drift"]["unreachable"] == ["unix_hosts"]
    assert hired("fault", "unix_hosts", "healthy")[0] == 0
    assert hired("reconcile", "--fix")[0] == 0


def test_certificate_flow_and_revocation(hired):
    code, out = hired("--json", "authn", "issue", "e1")
    assert code == 0
    issued = json.loads(out)
    serial = issued["certificate"]["serial"]
    assert hired("authn", "test", "prod", "e1", issued["proof"])[0] == 0
    assert hired("authn", "test", "prod", "e1", "wrong-proof")[0] == 1
    assert hired("revoke", str(serial), "--reason", "keyCompromise")[0] == 0
    code, out = hired("--json", "authn", "test", "prod", "e1", issued["proof"])
    assert code == 1
    assert json.loads(out)["denial"] == "Revoked"
    assert hired("authn", "test", "nonprod", "e1", issued["proof"])[0] == 0


def test_password_lockout_persists_across_runs(hired):
    assert hired("authn", "set-password", "e1", "s3cret-Passphrase")[0] == 0
    assert hired("authn", "test", "password", "e1", "s3cret-Passphrase")[0] == 0
    for _ in range(5):
        assert hired("authn", "test", "password", "e1", "wrong")[0] == 1
    code, out = hired("authn", "test", "password", "e1", "s3cret-Passphrase")
    assert code == 1
    assert "LockedOut" in out


def test_admin_check(cli):
    assert cli("admin", "check", "AppAdmin:learning_platform", "AddMember")[0] == 0
    assert cli("admin", "check", "DomainAdmin", "AddMember", "learning_platform")[0] == 1
    code, out = cli("--json", "admin", "check", "SeniorAppAdmin", "ViewMembers", "student_portal")
    assert json.loads(out)["permitted"] is True


def test_admin_do_with_an_authenticated_session(cli, tmp_path):
    feed = write_feed(tmp_path, ("adm-0001", "employee", "management", "hire"))
    assert cli("feed", "apply", str(feed))[0] == 0
    assert cli("authn", "set-password", "adm-0001", "admin-Passphrase")[0] == 0
    code, out = cli("--json", "authn", "test", "password", "adm-0001", "admin-Passphrase")
    assert code == 0
    session = json.dumps(json.loads(out)["session"])

    code, out = cli("--json", "admin", "do", "DomainAdmin", "CreateViewGroups", "learning_platform",
                    "--session", session, "--group", "biology-101")
    assert code == 0
    assert json.loads(out) == {"groups": ["biology-101"]}
    assert cli("admin", "do", "DomainAdmin", "AddMember", "learning_platform", "--session", session,
               "--group", "biology-101", "--member", "adm-0001")[0] == 1
    assert cli("admin", "do", "DomainAdmin", "CreateViewGroups", "learning_platform",
               "--session", "not-json", "--group", "g1")[0] == 2


def test_scenario_run_and_list(cli):
    code, out = cli("scenario", "run", "student-full-lifecycle")
    assert code == 0
    assert out.startswith("scenario student-full-lifecycle: ok")
    assert cli("scenario", "run", "nope")[0] == 2
    code, out = cli("--json", "scenario", "list")
    assert "random-churn" in json.loads(out)


def test_seeded_runs_are_deterministic(tmp_path, capsys):
    snapshots = []
    for run_dir in ("one", "two"):
        directory = tmp_path / run_dir
        config = str(write_config(directory))
        feed = write_feed(directory, ("e1", "employee", "management", "hire"))
        base = ["--config", config, "--clock", CLOCK, "--seed", "5"]
        assert run(base + ["feed", "apply", str(feed)]) == 0
        assert run(base + ["authn", "issue", "e1"]) == 0
        snapshots.append((directory / "snapshot.json").read_bytes())
    capsys.readouterr()
    assert snapshots[0] == snapshots[1]


def test_report_audit(hired):
    code, out = hired("--json", "report", "audit")
    assert code == 0
    rows = json.loads(out)["summary"]
    assert {"category", "outcome", "count"} <= set(rows[0])


def test_feed_batch_isolates_failing_record(cli, tmp_path):
    def record(person_id, department, event):
        return json.dumps({
            "person_id": person_id, "full_name": f"Person {person_id}", "role": "employee",
            "sub_role": "individual_contributor", "department": department, "event": event,
            "effective_date": "2026-03-02",
        })

    first = tmp_path / "first.jsonl"
    first.write_text(record("zz-emp", "Finance", "hire") + "\n")
    assert cli("feed", "apply", str(first))[0] == 0

    second = tmp_path / "second.jsonl"
    second.write_text(record("aa-new", "Finance", "hire") + "\n" + record("zz-emp", "Audit", "matriculation") + "\n")
    code, out = cli("--json", "feed", "apply", str(second))
    assert code == 1
    [failure] = json.loads(out)["failed"]
    assert (failure["person_id"], failure["workflow"]) == ("zz-emp", "update:matriculation")

    assert json.loads(cli("--json", "identity", "show", "aa-new")[1])["identity"]["person_id"] == "aa-new"
    snapshot = json.loads((tmp_path / "snapshot.json").read_text())
    persisted = {identity["person_id"] for identity in snapshot["identities"]}
    audit = [json.loads(line) for line in (tmp_path / "audit.jsonl").read_text().splitlines()]
    mutated = {event["target"].split("/")[1] for event in audit
               if event["category"] == "ResourceMutation" and event["outcome"] == "Success"}
    assert mutated <= persisted
    assert any(event["category"] == "Workflow" and event["outcome"] == "Failure" and event["target"] == "zz-emp"
               for event in audit)
