"""One runtime object holding every component, loaded from and saved to the snapshot file."""

import json
import os
import random
import secrets
from dataclasses import replace

import structlog

from app.admin.delegation import DOMAIN_ADMIN, GroupTable
from app.auth.authenticator import AuthPolicy, Authenticator
from app.auth.certificates import CertificateAuthority, StatusResponder, publish_revocation
from app.auth.sessions import SessionManager
from app.clock import SystemClock
from app.feeds.feed_parser import NoChange, diff_feed, parse_feed
from app.identity.models import PiiField, ResourceId
from app.provisioning.engine import ProvisioningEngine
from app.provisioning.matrix import default_matrix, load_matrix
from app.provisioning.retry_queue import RetryQueue
from app.reports.compliance import report_compliance
from app.resources.endpoints import FaultMode, ResourceFleet
from app.security.guard import ObjectReferenceMap
from app.storage.audit_log import SYSTEM_ACTOR, AuditLog
from app.storage.data_store import IdentityStore
from app.storage.snapshot import (
    account_from_record, account_to_record, identity_from_record, identity_to_record,
    load_snapshot, render_snapshot, save_snapshot,
)

logger = structlog.get_logger(__name__)

ISSUER = "idfabric-ca"


class Fabric:
    """Store, resources, engine, authentication and admin state for one process.

    A non-persistent fabric keeps its audit log in memory and never touches
    the snapshot file; scenarios run in one.
    """

    def __init__(self, cli_config, clock=None, seed=None, matrix=None, persistent=True):
        self.config = cli_config
        self.clock = clock or SystemClock()
        self.seed = seed
        self.persistent = persistent
        self.key = cli_config.encryption_key
        self.matrix = matrix if matrix is not None else self._load_matrix()

        self.audit = AuditLog(cli_config.audit_log_path if persistent else None, self.clock)
        self.store = IdentityStore()
        self.fleet = ResourceFleet.build(seed=self._seed_material("faults"))
        self.retry_queue = RetryQueue()
        self.groups = GroupTable(domain_admins=cli_config.domain_admins)
        token_factory = self._token_factory()
        self.sessions = SessionManager(self.clock, cli_config.session_ttl_seconds, token_factory)
        self.authority = CertificateAuthority(ISSUER, self.clock, token_factory)
        self.responder = StatusResponder([self.authority])
        self.references = ObjectReferenceMap(self.key)
        self._build_services()

    def _build_services(self):
        self.engine = ProvisioningEngine(
            self.store, self.matrix, self.fleet, self.audit,
            retry_queue=self.retry_queue,
            clock=self.clock,
            max_attempts=self.config.retry_max_attempts,
            grace_days=self.config.deletion_grace_days,
            bcrypt_rounds=self.config.bcrypt_rounds,
        )
        self.policy = AuthPolicy(self.config.auth_max_failed_attempts, self.config.auth_lockout_seconds)
        self.authenticator = Authenticator(self.fleet.registry, self.sessions, self.audit,
                                           self.clock, self.responder, self.policy)
        self.authenticator.lockout.replay(self.audit.events)

    def _load_matrix(self):
        path = self.config.matrix_path
        if not path:
            return default_matrix()
        with open(path, "r", encoding="utf-8") as f:
            return load_matrix(f.read())

    def _seed_material(self, purpose):
        # the audit sequence moves on every run, so seeded runs don't repeat earlier draws
        if self.seed is None:
            return secrets.randbits(64)
        return f"{self.seed}:{purpose}:{len(self.audit.events)}"

    def _token_factory(self):
        if self.seed is None:
            return None
        rng = random.Random(self._seed_material("tokens"))
        return lambda: f"{rng.getrandbits(128):032x}"

    # --- persistence ---

    @classmethod
    def open(cls, cli_config, clock=None, seed=None):
        """Load the fabric from the configured snapshot, or start empty if none exists."""
        fabric = cls(cli_config, clock=clock, seed=seed)
        document = load_snapshot(cli_config.snapshot_path)
        if document is not None:
            fabric.restore(document)
            logger.debug("fabric_restored", identities=len(fabric.store))
        return fabric

    def restore(self, document):
        self.store = IdentityStore(identity_from_record(record, self.key) for record in document["identities"])
        for name, state in document["resources"].items():
            endpoint = self.fleet[ResourceId(name)]
            endpoint.load_accounts(account_from_record(endpoint.id, r) for r in state["accounts"])
            endpoint.restore_fault_state(FaultMode.parse(state["fault_mode"]), state["mutation_calls"])
        self.groups = GroupTable.from_dict(document["groups"])
        for person_id in self.config.domain_admins:
            self.groups.assign(person_id, DOMAIN_ADMIN)
        self.sessions.load_list(document["sessions"])
        self.retry_queue = RetryQueue.from_dict(document["retry_queue"])
        authorities = [CertificateAuthority.from_dict(data, self.clock, self.authority.token_factory)
                       for data in document["revocations"]["authorities"]]
        if authorities:
            self.authority = next((a for a in authorities if a.issuer == ISSUER), authorities[0])
            self.responder = StatusResponder(authorities)
        self._build_services()

    def document(self):
        return {
            "identities": [identity_to_record(identity, self.key) for identity in self.store.snapshot().values()],
            "resources": {
                endpoint.id.value: {
                    "fault_mode": str(endpoint.fault_mode),
                    "mutation_calls": endpoint.mutation_calls,
                    "accounts": [account_to_record(a) for a in endpoint.export_accounts()],
                }
                for endpoint in self.fleet
            },
            "groups": self.groups.to_dict(),
            "sessions": self.sessions.to_list(),
            "retry_queue": self.retry_queue.to_dict(),
            "revocations": {
                "authorities": [self.responder.authority(issuer).to_dict()
                                for issuer in sorted(self.responder.known_issuers)],
            },
        }

    def save(self):
        if not self.persistent:
            return render_snapshot(self.document())
        return save_snapshot(self.config.snapshot_path, self.document())

    # --- operations the CLI and scenarios share ---

    def apply_feed(self, data, actor=SYSTEM_ACTOR):
        """Parse and diff a feed batch, run its workflows, drain retries once, purge expired tombstones.

        Records whose workflow fails are audited and reported under `failed`;
        the rest of the batch still applies.
        """
        records = parse_feed(data)
        deltas = diff_feed(self.store.snapshot(), records)
        orders, failures = self.engine.apply_deltas(deltas, actor)
        drained = self.engine.drain_retries(actor)
        purged = self.engine.purge_terminated(actor)
        logger.info("feed_applied", records=len(records), workflows=len(orders), failed=len(failures),
                    drained=drained, pending=len(self.retry_queue))
        return {
            "records": len(records),
            "unchanged": sum(isinstance(d, NoChange) for d in deltas),
            "orders": [order.to_dict() for order in orders + purged],
            "drained": drained,
            "pending_retries": len(self.retry_queue),
            "failed": failures,
        }

    def attach_pii(self, person_id, fields, sensitive=True):
        """Record PII attributes on an identity. Values never leave the store unprotected."""
        identity = self.store.get_identity(person_id)
        pii = dict(identity.pii_fields)
        pii.update({name: PiiField(value, sensitive=sensitive) for name, value in fields.items()})
        self.store.replace_identity(replace(identity, pii_fields=pii))
        logger.info("pii_attached", person_id=person_id, fields=sorted(fields), sensitive=sensitive)

    def issue_certificate(self, person_id, actor=SYSTEM_ACTOR):
        identity = self.store.get_identity(person_id)
        email = identity.account_attributes(self.engine.email_domain)["email"]
        certificate, proof = self.authority.issue(person_id, email)
        order = self.engine.store_certificate(person_id, certificate, actor)
        return certificate, proof, order

    def revoke(self, serial, reason="unspecified"):
        return publish_revocation(self.responder, serial, reason)

    def inject_fault(self, resource, mode):
        return self.fleet[resource].inject_fault(mode)

    def _stored_snapshot(self):
        """(text, document) as they sit at rest, falling back to the in-memory rendering."""
        path = self.config.snapshot_path
        if self.persistent and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
            return text, json.loads(text)
        document = self.document()
        return render_snapshot(document), document

    def compliance_report(self):
        text, document = self._stored_snapshot()
        return report_compliance(self.store, self.fleet, self.matrix, self.groups, self.clock.today(),
                                 self.config.deletion_grace_days, snapshot_text=text,
                                 snapshot_document=document)
