# Makes 'reports' a sub-package of 'app'.
from .compliance import (
    ComplianceFinding, ComplianceReport, RuleId, Severity, audit_summary, findings_frame,
    render_html, report_compliance,
)
