"""Closed error taxonomy.

Every failure the protocol roles can report is one of the classes below.
Each class carries a stable ``code`` string used in event logs, scenario
files and reports. Messages never include key material or plaintext.
"""

from __future__ import annotations


class SudpError(Exception):
    code = "sudp-error"

    def __init__(self, message: str | None = None):
        super().__init__(message or self.code)


# -- primitives ---------------------------------------------------------------


class AuthenticationFailure(SudpError):
    """AEAD open failed; deliberately silent on which input was tampered."""

    code = "aead-failure"


class UnwrapFailure(SudpError):
    code = "unwrap-failure"


class UnregisteredLabel(SudpError):
    code = "unregistered-label"


class KeyRoleMismatch(SudpError):
    code = "key-role-mismatch"


class DecapsulationFailure(SudpError):
    code = "decap-failure"


# -- authenticator ------------------------------------------------------------


class UnknownCid(SudpError):
    code = "unknown-cid"


class GestureDeclined(SudpError):
    code = "gesture-declined"


class MissingPrfOutput(SudpError):
    code = "missing-prf-output"


# -- operation / adapter --------------------------------------------------------


class NonCanonicalOperation(SudpError):
    code = "non-canonical"


class DecodeFailure(SudpError):
    code = "decode-failure"


class AuthorityHeaderPresent(SudpError):
    code = "authority-header-present"


class MalformedUrl(SudpError):
    code = "malformed-url"


class MissingShadow(SudpError):
    code = "missing-shadow"


class ShadowHashMismatch(SudpError):
    code = "shadow-hash-mismatch"


# -- custodian ------------------------------------------------------------------


class PoolExhausted(SudpError):
    code = "pool-exhausted"


class UnknownOrExpiredFreshness(SudpError):
    code = "unknown-or-expired-freshness"


class UnknownCredential(SudpError):
    code = "unknown-credential"


class SignatureInvalid(SudpError):
    code = "signature-invalid"


class PolicyDenied(SudpError):
    code = "policy-denied"


class ExpiredOperation(SudpError):
    code = "expired-operation"


class AlreadyConsumed(SudpError):
    code = "already-consumed"


class DecryptFailure(SudpError):
    code = "decrypt-failure"


class UnknownTarget(SudpError):
    code = "unknown-target"


class MissingRecipient(SudpError):
    code = "missing-recipient"


class MissingOpt(SudpError):
    code = "missing-opt"


class NextSaltMismatch(SudpError):
    code = "next-salt-mismatch"


class MalformedScope(SudpError):
    code = "malformed-scope"


class UnknownCredentialInHandoff(SudpError):
    code = "unknown-credential-in-handoff"


class EnrollmentMaterialMalformed(SudpError):
    code = "enrollment-material-malformed"


class RevokingLastCredential(SudpError):
    code = "revoking-last-credential"


class EnvironmentRejection(SudpError):
    code = "environment-rejection"


class NonConformantRelease(SudpError):
    code = "non-conformant-release"


class CorruptState(SudpError):
    code = "corrupt-state"


class VersionMismatch(SudpError):
    code = "version-mismatch"


class PersistenceFailure(SudpError):
    code = "persistence-failure"


class InjectedCrash(SudpError):
    """Raised by the commit path when a test or scenario injects a crash."""

    code = "injected-crash"


# -- channel ----------------------------------------------------------------------


class PkAuthenticityFailure(SudpError):
    code = "pk-t-authenticity-failure"


class ChannelFailure(SudpError):
    code = "channel-failure"


# -- environment --------------------------------------------------------------


class AuthorityRejected(SudpError):
    code = "authority-rejected"


# -- harness ------------------------------------------------------------------


class ScenarioParseError(SudpError):
    code = "scenario-parse-error"


def all_error_codes() -> dict[str, type[SudpError]]:
    """Map every code in the taxonomy to its class."""
    out: dict[str, type[SudpError]] = {}
    stack = list(SudpError.__subclasses__())
    while stack:
        cls = stack.pop()
        out[cls.code] = cls
        stack.extend(cls.__subclasses__())
    return out
