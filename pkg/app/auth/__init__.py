# Makes 'auth' a sub-package of 'app'.
from .certificates import (
    Certificate, CertificateAuthority, CertStatus, RevocationList, RevocationListCache,
    StatusResponder, proof_matches, publish_revocation,
)
from .sessions import Factor, Session, SessionManager
from .authenticator import AuthPolicy, AuthResult, Authenticator, Denial, LockoutTracker, policy_for
