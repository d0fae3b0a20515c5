"""Compliance reporting over the store, the resources and the snapshot file.

Everything here only reads. Findings cite the store rows or account rows
that triggered them.
"""

from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import pandas as pd
import structlog

from app.errors import ResourceDown
from app.identity.models import RESOURCE_ORDER
from app.provisioning.matrix import active_resources
from app.provisioning.reconciler import compute_drift
from app.security.guard import html_escape, scan_for_plaintext
from app.storage.audit_log import read_events

logger = structlog.get_logger(__name__)


class RuleId(Enum):
    PCI_UNIQUE_ID = "PCI-UNIQUE-ID"
    FERPA_NEED_TO_KNOW = "FERPA-NEED-TO-KNOW"
    ORPHAN_ACCOUNT = "ORPHAN-ACCOUNT"
    MATRIX_DRIFT = "MATRIX-DRIFT"
    PLAINTEXT_PII = "PLAINTEXT-PII"


class Severity(Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass(frozen=True)
class ComplianceFinding:
    rule_id: RuleId
    subject: str
    description: str
    severity: Severity
    evidence: tuple = ()

    def to_dict(self):
        return {
            "rule_id": self.rule_id.value,
            "subject": self.subject,
            "description": self.description,
            "severity": self.severity.value,
            "evidence": list(self.evidence),
        }


@dataclass(frozen=True)
class ComplianceReport:
    findings: tuple
    unreachable: frozenset = frozenset()

    @property
    def partial(self):
        return bool(self.unreachable)

    def to_dict(self):
        return {
            "findings": [f.to_dict() for f in self.findings],
            "count": len(self.findings),
            "partial": self.partial,
            "unreachable": sorted(r.value for r in self.unreachable),
        }


def _unique_id_findings(fleet, snapshot_document):
    findings = []
    if snapshot_document is not None:
        counts = defaultdict(int)
        for record in snapshot_document.get("identities", []):
            counts[record["person_id"]] += 1
        for pid, n in sorted(counts.items()):
            if n > 1:
                findings.append(ComplianceFinding(
                    RuleId.PCI_UNIQUE_ID, pid, f"person_id {pid} appears {n} times in the identity store",
                    Severity.HIGH, (f"identities[person_id={pid}] x{n}",)))

    try:
        accounts = fleet.registry.list_accounts()
    except ResourceDown:
        return findings, True
    holders = defaultdict(list)
    for account in accounts:
        holders[account.attributes.get("uid")].append(account.person_id)
    for uid, people in sorted(holders.items(), key=lambda item: str(item[0])):
        if uid is not None and len(people) > 1:
            findings.append(ComplianceFinding(
                RuleId.PCI_UNIQUE_ID, str(uid), f"registry uid {uid} is shared by {len(people)} accounts",
                Severity.HIGH, tuple(f"access_registry/{pid}" for pid in sorted(people))))
    return findings, False


def _need_to_know_findings(identities, groups, matrix):
    findings = []
    for application, group, pid in groups.memberships():
        identity = identities.get(pid)
        if identity is not None and application in active_resources(identity, matrix):
            continue
        why = "unknown identity" if identity is None else "no entitlement on the application"
        findings.append(ComplianceFinding(
            RuleId.FERPA_NEED_TO_KNOW, pid,
            f"{pid} is in group {group} on {application.value} with {why}",
            Severity.HIGH, (f"groups[{application.value}/{group}] member {pid}",)))
    return findings


def _drift_findings(drift):
    findings = []
    for pid, resource in sorted(drift.orphaned, key=lambda p: (p[0], RESOURCE_ORDER[p[1]])):
        findings.append(ComplianceFinding(
            RuleId.ORPHAN_ACCOUNT, pid, f"account on {resource.value} with no entitlement behind it",
            Severity.HIGH, (f"{resource.value}/{pid}",)))
    for pid, resource in sorted(drift.missing, key=lambda p: (p[0], RESOURCE_ORDER[p[1]])):
        findings.append(ComplianceFinding(
            RuleId.MATRIX_DRIFT, pid, f"entitled account on {resource.value} is missing",
            Severity.MEDIUM, (f"{resource.value}/{pid}",)))
    for m in sorted(drift.state_mismatch, key=lambda m: (m.person_id, RESOURCE_ORDER[m.resource])):
        findings.append(ComplianceFinding(
            RuleId.MATRIX_DRIFT, m.person_id,
            f"account on {m.resource.value} is {m.actual.value}, expected {m.expected.value}",
            Severity.MEDIUM, (f"{m.resource.value}/{m.person_id}",)))
    return findings


def _plaintext_findings(identities, snapshot_text):
    if not snapshot_text:
        return []
    findings = []
    for pid, identity in identities.items():
        sensitive = {name: f.value for name, f in identity.pii_fields.items() if f.sensitive}
        leaked = set(scan_for_plaintext(snapshot_text, sensitive.values()))
        for name in sorted(n for n, v in sensitive.items() if v in leaked):
            findings.append(ComplianceFinding(
                RuleId.PLAINTEXT_PII, pid, f"sensitive field {name} of {pid} is stored in plaintext",
                Severity.HIGH, (f"snapshot identities[{pid}].pii_fields.{name}",)))
    return findings


def report_compliance(store, fleet, matrix, groups, today, grace_days=0,
                      snapshot_text=None, snapshot_document=None):
    """Every compliance finding for the current state; run against a quiesced engine."""
    identities = store.snapshot()
    findings, registry_down = _unique_id_findings(fleet, snapshot_document)
    findings += _need_to_know_findings(identities, groups, matrix)
    drift = compute_drift(identities, matrix, fleet, today, grace_days)
    findings += _drift_findings(drift)
    findings += _plaintext_findings(identities, snapshot_text)

    unreachable = set(drift.unreachable)
    if registry_down:
        unreachable.add(fleet.registry.id)
    logger.info("compliance_reported", findings=len(findings), partial=bool(unreachable))
    return ComplianceReport(tuple(findings), frozenset(unreachable))


FINDING_COLUMNS = ["rule_id", "subject", "severity", "description", "evidence"]


def findings_frame(findings):
    rows = [{**f.to_dict(), "evidence": "; ".join(f.evidence)} for f in findings]
    return pd.DataFrame(rows, columns=FINDING_COLUMNS)


def audit_summary(events_or_path):
    """Event counts per category and outcome."""
    events = read_events(events_or_path) if isinstance(events_or_path, str) else list(events_or_path)
    df = pd.DataFrame([e.to_dict() for e in events], columns=["seq", "category", "outcome"])
    if df.empty:
        return pd.DataFrame(columns=["category", "outcome", "count"])
    return (df.groupby(["category", "outcome"]).size()
              .reset_index(name="count")
              .sort_values(["category", "outcome"])
              .reset_index(drop=True))


def render_html(findings):
    rows = "".join(
        "<tr>" + "".join(f"<td>{html_escape(value)}</td>" for value in (
            f.rule_id.value, f.subject, f.severity.value, f.description, "; ".join(f.evidence))) + "</tr>\n"
        for f in findings
    )
    header = "".join(f"<th>{html_escape(c)}</th>" for c in FINDING_COLUMNS)
    return (f"<table class=\"findings\">\n<thead><tr>{header}</tr></thead>\n"
            f"<tbody>\n{rows}</tbody>\n</table>\n<p>{len(findings)} findings</p>\n")
