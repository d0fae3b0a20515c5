"""Operator command line.

Every subcommand loads the fabric from the snapshot, does its work and, if it
changed anything, saves the snapshot back. `run` never raises: failures
become one diagnostic line on stderr and an exit code.
"""

import argparse
import json
import sys
from contextlib import contextmanager
from datetime import date, datetime

import structlog

from app.admin.delegation import (
    AccessLevel, AdminAction, AdminActionKind, AdminRole, GROUP_APPLICATIONS, MEMBER_ACTIONS,
    is_permitted, perform_admin_action,
)
from app.auth.certificates import Certificate
from app.clock import ManualClock
from app.errors import EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, IdFabricError, UsageError
from app.fabric import Fabric
from app.feeds.feed_parser import Update
from app.identity.lifecycle import validate_identity
from app.identity.models import EventKind, LifecycleEvent, ResourceId, Role, SubRole, WithdrawalReason
from app.jobs.scenarios import account_states, list_scenarios, run_scenario
from app.log import configure_logging
from app.provisioning.matrix import entitlements_for
from app.reports.compliance import audit_summary, findings_frame, render_html
from app.resources.endpoints import FaultMode
from config import load_cli_config

logger = structlog.get_logger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- plumbing ---

def _enum(enum_cls, raw, what):
    try:
        return enum_cls(raw)
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise UsageError(f"unknown {what} {raw!r} (choose from {choices})")


def _clock(args):
    if not args.clock:
        return None
    try:
        return ManualClock(datetime.fromisoformat(args.clock))
    except ValueError:
        raise UsageError(f"--clock {args.clock!r} is not an ISO timestamp")


@contextmanager
def _fabric(args, save=True):
    cli_config = load_cli_config(args.config)
    fabric = Fabric.open(cli_config, clock=_clock(args), seed=args.seed)
    try:
        yield fabric
    finally:
        # audited mutations reach the snapshot even when the command fails
        if save:
            fabric.save()


def _emit(args, payload, text):
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    else:
        print(text)


def _read_bytes(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}")


# --- feed / events ---

def cmd_feed_apply(args):
    with _fabric(args) as fabric:
        result = fabric.apply_feed(_read_bytes(args.file))
    text = (f"{result['records']} records, {len(result['orders'])} workflows, "
            f"{result['unchanged']} unchanged, {len(result['failed'])} failed, "
            f"{result['pending_retries']} retries pending")
    for failure in result["failed"]:
        text += f"\n  failed {failure['person_id']} {failure['workflow']}: {failure['cause']}"
    _emit(args, result, text)
    return EXIT_PARTIAL if result["pending_retries"] or result["failed"] else EXIT_OK


def _event_from_args(args, today):
    kind = _enum(EventKind, args.event, "event")
    effective = today
    if args.date:
        try:
            effective = date.fromisoformat(args.date)
        except ValueError:
            raise UsageError(f"--date {args.date!r} is not YYYY-MM-DD")
    return LifecycleEvent(
        kind,
        effective,
        reason=_enum(WithdrawalReason, args.reason, "reason") if args.reason else None,
        department=args.department,
        role=_enum(Role, args.role, "role") if args.role else None,
        sub_role=_enum(SubRole, args.sub_role, "sub_role") if args.sub_role else None,
    )


def cmd_event_apply(args):
    with _fabric(args) as fabric:
        event = _event_from_args(args, fabric.clock.today())
        order = fabric.engine.update_workflow(Update(args.person_id, event))
    _emit(args, order.to_dict(),
          f"{order.kind.value} {args.person_id}: {order.outcome.value}, "
          f"{len(order.actions)} actions, {len(order.queued)} queued")
    return EXIT_PARTIAL if order.queued else EXIT_OK


# --- reconciliation / retries ---

def cmd_reconcile(args):
    with _fabric(args) as fabric:
        report = fabric.engine.reconcile()
        corrected = False
        if args.fix and not report.is_empty:
            fabric.engine.purge_terminated()
            fabric.engine.apply_corrections(report)
            fabric.engine.drain_retries()
            report = fabric.engine.reconcile()
            corrected = True
    summary = report.summary()
    text = ", ".join(f"{key} {value}" for key, value in summary.items())
    _emit(args, {"drift": report.to_dict(), "corrected": corrected}, text)
    return EXIT_OK if report.is_empty and not report.partial else EXIT_PARTIAL


def cmd_retries_drain(args):
    with _fabric(args) as fabric:
        completed = fabric.engine.drain_retries()
        pending = len(fabric.retry_queue)
        flagged = [action.to_dict() for action in fabric.retry_queue.manual_intervention()]
    _emit(args, {"completed": completed, "pending": pending, "manual_intervention": flagged},
          f"{completed} completed, {pending} pending, {len(flagged)} need manual intervention")
    return EXIT_PARTIAL if pending else EXIT_OK


def cmd_fault(args):
    resource = _enum(ResourceId, args.resource, "resource")
    try:
        mode = FaultMode.parse(args.mode)
    except ValueError as e:
        raise UsageError(f"bad fault mode {args.mode!r}: {e}")
    with _fabric(args) as fabric:
        result = fabric.inject_fault(resource, mode)
    _emit(args, result, f"{result['resource']}: {result['fault_mode']}")
    return EXIT_OK


# --- identities ---

def _pii_view(identity):
    return {name: {"sensitive": f.sensitive, "value": "***" if f.sensitive else f.value}
            for name, f in sorted(identity.pii_fields.items())}


def cmd_identity_show(args):
    with _fabric(args, save=False) as fabric:
        identity = fabric.store.get_identity(args.person_id)
        entitlements = entitlements_for(fabric.matrix, identity.role, identity.sub_role, identity.person_id)
        payload = {
            "identity": identity.to_dict(),
            "pii_fields": _pii_view(identity),
            "entitlements": sorted(r.value for r in entitlements.resources),
            "rule_trace": [[label, sorted(r.value for r in resources)]
                           for label, resources in entitlements.rule_trace],
            "accounts": account_states(fabric, args.person_id),
            "violations": [v.message for v in validate_identity(identity)],
        }
    sub = identity.sub_role.value if identity.sub_role else "-"
    lines = [f"{identity.person_id} {identity.full_name} ({identity.role.value}/{sub}, "
             f"{identity.department}, {identity.status.value})"]
    lines += [f"  {resource}: {state or 'absent'}" for resource, state in payload["accounts"].items()]
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_identity_set_pii(args):
    with _fabric(args) as fabric:
        fabric.attach_pii(args.person_id, {args.name: args.value}, sensitive=not args.public)
    _emit(args, {"person_id": args.person_id, "field": args.name, "sensitive": not args.public},
          f"{args.person_id}: {args.name} recorded")
    return EXIT_OK


# --- authentication ---

def cmd_authn_issue(args):
    with _fabric(args) as fabric:
        certificate, proof, order = fabric.issue_certificate(args.person_id)
    payload = {"certificate": certificate.to_dict(), "proof": proof, "outcome": order.outcome.value}
    _emit(args, payload, f"serial {certificate.serial} issued to {args.person_id}\nproof {proof}")
    return EXIT_PARTIAL if order.queued else EXIT_OK


def cmd_authn_set_password(args):
    with _fabric(args) as fabric:
        order = fabric.engine.set_password(args.person_id, args.password)
    _emit(args, {"person_id": args.person_id, "outcome": order.outcome.value},
          f"{args.person_id}: password {order.outcome.value}")
    return EXIT_PARTIAL if order.queued else EXIT_OK


def _presented_certificate(args, fabric):
    if args.cert:
        try:
            data = json.loads(_read_bytes(args.cert))
            # the JSON printed by `authn issue` wraps the certificate
            return Certificate.from_dict(data.get("certificate", data))
        except (KeyError, ValueError) as e:
            raise UsageError(f"{args.cert} is not a certificate: {e}")
    account = fabric.fleet.registry.get_account(args.person_id)
    if account is None or account.stored_certificate is None:
        raise UsageError(f"no certificate stored for {args.person_id}; pass --cert")
    return account.stored_certificate


def cmd_authn_test(args):
    with _fabric(args) as fabric:
        flow = args.flow
        if flow == "cert":
            flow = "prod" if fabric.config.environment == "production" else "nonprod"
        if flow == "password":
            result = fabric.authenticator.authenticate_password(args.person_id, args.secret)
        elif flow == "prod":
            result = fabric.authenticator.authenticate_production(_presented_certificate(args, fabric), args.secret)
        else:
            result = fabric.authenticator.authenticate_nonproduction(_presented_certificate(args, fabric), args.secret)
    text = f"{args.person_id}: " + ("authenticated" if result.ok else f"denied ({result.denial.value})")
    _emit(args, result.to_dict(), text)
    return EXIT_OK if result.ok else EXIT_PARTIAL


def cmd_revoke(args):
    with _fabric(args) as fabric:
        published = fabric.revoke(args.serial, args.reason)
    _emit(args, published.to_dict(), f"serial {args.serial} revoked (list version {published.version})")
    return EXIT_OK


# --- delegated administration ---

def _admin_action(args, kind, application):
    return AdminAction(
        kind,
        application,
        group=args.group,
        member=args.member,
        sub_group=args.sub_group,
        access_level=_enum(AccessLevel, args.access, "access level") if args.access else None,
        grantee=args.grantee,
    )


def _check_action(kind, application):
    """A well-formed action of `kind`, for asking the grant table alone."""
    return AdminAction(
        kind,
        application,
        group="example",
        member="example" if kind in MEMBER_ACTIONS else None,
        access_level=AccessLevel.READ if kind is AdminActionKind.MODIFY_ACCESS else None,
        grantee="example" if kind is AdminActionKind.ASSIGN_APPLICATION_ADMIN else None,
    )


def cmd_admin_check(args):
    role = AdminRole.parse(args.role)
    kind = _enum(AdminActionKind, args.action, "admin action")
    application = _enum(ResourceId, args.application, "application") if args.application else (
        role.application or GROUP_APPLICATIONS[0])
    decision = is_permitted(role, _check_action(kind, application))
    _emit(args, {"permitted": decision.permitted, "trace": list(decision.trace)},
          ("permitted" if decision else "denied") + ": " + "; ".join(decision.trace))
    return EXIT_OK if decision else EXIT_PARTIAL


def cmd_admin_do(args):
    role = AdminRole.parse(args.role)
    kind = _enum(AdminActionKind, args.action, "admin action")
    application = _enum(ResourceId, args.application, "application")
    action = _admin_action(args, kind, application)
    try:
        token = json.loads(args.session)
    except json.JSONDecodeError:
        raise UsageError("--session must be the JSON session token an authentication printed")
    with _fabric(args) as fabric:
        session = fabric.sessions.validate_client_token(token)
        result = perform_admin_action(session, role, action, fabric.groups, sessions=fabric.sessions,
                                      fleet=fabric.fleet, audit=fabric.audit)
    _emit(args, result, json.dumps(result, sort_keys=True))
    return EXIT_OK


# --- reports ---

def cmd_report_compliance(args):
    with _fabric(args, save=False) as fabric:
        report = fabric.compliance_report()
    if args.format == "csv":
        body = findings_frame(report.findings).to_csv(index=False)
    elif args.format == "html":
        body = render_html(report.findings)
    else:
        lines = [f"{f.severity.value:<6} {f.rule_id.value:<19} {f.subject}: {f.description}" for f in report.findings]
        if report.partial:
            lines.append("unreachable: " + ", ".join(sorted(r.value for r in report.unreachable)))
        body = "\n".join(lines + [f"{len(report.findings)} findings"])
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(body if body.endswith("\n") else body + "\n")
    _emit(args, report.to_dict(), body.rstrip("\n") if not args.output else f"{len(report.findings)} findings")
    return EXIT_PARTIAL if report.findings or report.partial else EXIT_OK


def cmd_report_audit(args):
    with _fabric(args, save=False) as fabric:
        summary = audit_summary(fabric.audit.events)
    rows = [{**row, "count": int(row["count"])} for row in summary.to_dict(orient="records")]
    _emit(args, {"summary": rows},
          summary.to_string(index=False) if not summary.empty else "no audit events")
    return EXIT_OK


# --- scenarios ---

def cmd_scenario_list(args):
    scenarios = list_scenarios()
    _emit(args, scenarios, "\n".join(f"{name:<24} {summary}" for name, summary in scenarios.items()))
    return EXIT_OK


def cmd_scenario_run(args):
    cli_config = load_cli_config(args.config)
    clock = _clock(args) or ManualClock()
    fabric = Fabric(cli_config, clock=clock, seed=args.seed if args.seed is not None else 0,
                    persistent=args.save)
    result = run_scenario(args.name, fabric, seed=args.seed or 0)
    if args.save:
        fabric.save()
    lines = [f"scenario {args.name}: ok"]
    for pid, states in result.get("accounts", {}).items():
        lines.append(f"  {pid}: " + ", ".join(f"{r}={s or 'absent'}" for r, s in states.items()))
    _emit(args, result, "\n".join(lines))
    return EXIT_OK


# --- parser ---

def build_parser():
    parser = _ArgumentParser(prog="idfabric", description="Identity lifecycle and provisioning engine")
    parser.add_argument("--config", help="flat JSON config file (default: $IDFABRIC_CONFIG)")
    parser.add_argument("--json", action="store_true", help="print one JSON object")
    parser.add_argument("--seed", type=int, help="seed for fault schedules and tokens")
    parser.add_argument("--clock", help="fixed ISO timestamp to run at")
    parser.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    feed = sub.add_parser("feed").add_subparsers(dest="feed_command", required=True)
    p = feed.add_parser("apply", help="apply an authoritative-source feed batch")
    p.add_argument("file")
    p.set_defaults(func=cmd_feed_apply)

    p = sub.add_parser("reconcile", help="report drift between identities and resources")
    p.add_argument("--fix", action="store_true", help="correct the drift and report again")
    p.set_defaults(func=cmd_reconcile)

    identity = sub.add_parser("identity").add_subparsers(dest="identity_command", required=True)
    p = identity.add_parser("show")
    p.add_argument("person_id")
    p.set_defaults(func=cmd_identity_show)
    p = identity.add_parser("set-pii")
    p.add_argument("person_id")
    p.add_argument("name")
    p.add_argument("value")
    p.add_argument("--public", action="store_true", help="store the field as non-sensitive")
    p.set_defaults(func=cmd_identity_set_pii)

    event = sub.add_parser("event").add_subparsers(dest="event_command", required=True)
    p = event.add_parser("apply")
    p.add_argument("person_id")
    p.add_argument("event")
    p.add_argument("--date")
    p.add_argument("--department")
    p.add_argument("--reason")
    p.add_argument("--role")
    p.add_argument("--sub-role", dest="sub_role")
    p.set_defaults(func=cmd_event_apply)

    authn = sub.add_parser("authn").add_subparsers(dest="authn_command", required=True)
    p = authn.add_parser("test")
    p.add_argument("flow", choices=["prod", "nonprod", "cert", "password"])
    p.add_argument("person_id")
    p.add_argument("secret", help="proof token, or password for the password flow")
    p.add_argument("--cert", help="certificate JSON to present instead of the stored one")
    p.set_defaults(func=cmd_authn_test)
    p = authn.add_parser("issue")
    p.add_argument("person_id")
    p.set_defaults(func=cmd_authn_issue)
    p = authn.add_parser("set-password")
    p.add_argument("person_id")
    p.add_argument("password")
    p.set_defaults(func=cmd_authn_set_password)

    p = sub.add_parser("revoke", help="publish a revocation")
    p.add_argument("serial", type=int)
    p.add_argument("--reason", default="unspecified")
    p.set_defaults(func=cmd_revoke)

    admin = sub.add_parser("admin").add_subparsers(dest="admin_command", required=True)
    p = admin.add_parser("check", help="ask the grant table")
    p.add_argument("role")
    p.add_argument("action")
    p.add_argument("application", nargs="?")
    p.set_defaults(func=cmd_admin_check)
    p = admin.add_parser("do", help="perform a delegated admin action")
    p.add_argument("role")
    p.add_argument("action")
    p.add_argument("application")
    p.add_argument("--session", required=True, help="session token JSON from an authentication")
    p.add_argument("--group")
    p.add_argument("--member")
    p.add_argument("--sub-group", dest="sub_group")
    p.add_argument("--access")
    p.add_argument("--grantee")
    p.set_defaults(func=cmd_admin_do)

    p = sub.add_parser("fault", help="set a resource's fault mode")
    p.add_argument("resource")
    p.add_argument("mode", help="healthy | down | intermittent:<n> | random:<rate>")
    p.set_defaults(func=cmd_fault)

    report = sub.add_parser("report").add_subparsers(dest="report_command", required=True)
    p = report.add_parser("compliance")
    p.add_argument("--format", choices=["text", "csv", "html"], default="text")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report_compliance)
    p = report.add_parser("audit")
    p.set_defaults(func=cmd_report_audit)

    scenario = sub.add_parser("scenario").add_subparsers(dest="scenario_command", required=True)
    p = scenario.add_parser("run")
    p.add_argument("name")
    p.add_argument("--save", action="store_true",
                   help="write the end state to the configured snapshot and audit log")
    p.set_defaults(func=cmd_scenario_run)
    p = scenario.add_parser("list")
    p.set_defaults(func=cmd_scenario_list)

    p = sub.add_parser("retries").add_subparsers(dest="retries_command", required=True).add_parser("drain")
    p.set_defaults(func=cmd_retries_drain)
    return parser


def run(argv=None):
    """Run one command; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    configure_logging(args.verbose)
    try:
        return args.func(args)
    except IdFabricError as e:
        logger.debug("command_failed", command=args.command, error=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
