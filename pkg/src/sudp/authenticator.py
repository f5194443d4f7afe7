"""Software stand-in for a WebAuthn authenticator with the PRF extension.

Each credential holds a P-256 signing key and an HMAC-SHA-256 PRF key.
Neither key ever leaves this module: the public surface returns only
credential ids, verification keys, signatures over caller-chosen
challenges, and PRF outputs over caller-chosen salts, and only after an
approving gesture decision.

WebAuthn's structural assertion checks (rpId hash, origin, UV flag) have no
counterpart here; user verification is the ``GestureDecision`` itself.
"""

from __future__ import annotations

import hmac
import hashlib
import threading
from dataclasses import dataclass
from typing import Callable

import cbor2

from sudp import crypto_profile as cp
from sudp.crypto_profile import KeyRole, SymmetricKey
from sudp.errors import DecodeFailure, GestureDeclined, MissingPrfOutput, UnknownCid

CID_LEN = 16
FIXTURE_VERSION = 1


@dataclass(frozen=True)
class GestureDecision:
    approve: bool


APPROVE = GestureDecision(True)
DECLINE = GestureDecision(False)

# A decision source is shown a rendering and answers approve / decline.
DecisionSource = Callable[[str], GestureDecision]


def always(decision: GestureDecision) -> DecisionSource:
    return lambda _rendering: decision


def scripted(decisions) -> DecisionSource:
    """Replay a fixed sequence of decisions, one per prompt."""
    it = iter(decisions)

    def _next(_rendering: str) -> GestureDecision:
        d = next(it)
        return d if isinstance(d, GestureDecision) else GestureDecision(bool(d))

    return _next


def terminal_prompt(rendering: str) -> GestureDecision:
    print(rendering)
    answer = input("Approve this operation? [y/N] ").strip().lower()
    return GestureDecision(answer in ("y", "yes"))


class _Credential:
    __slots__ = ("cid", "prf_key", "signing_key", "uv_required")

    def __init__(self, cid: bytes, prf_key: bytes, signing_key):
        self.cid = cid
        self.prf_key = bytearray(prf_key)
        self.signing_key = signing_key
        self.uv_required = True


class Authenticator:
    """A credential store with gesture-gated signing and PRF evaluation."""

    def __init__(self, name: str = "authenticator"):
        self.name = name
        self._creds: dict[bytes, _Credential] = {}
        self._lock = threading.RLock()
        # Fault injection: drop the PRF half of an assertion.
        self.fault_drop_prf = False

    def enroll(self) -> tuple[bytes, bytes]:
        with self._lock:
            cid = cp.csprng(CID_LEN)
            while cid in self._creds:
                cid = cp.csprng(CID_LEN)
            cred = _Credential(cid, cp.csprng(32), cp.generate_signing_key())
            self._creds[cid] = cred
            return cid, cp.point_bytes(cred.signing_key)

    def credential_ids(self) -> list[bytes]:
        with self._lock:
            return list(self._creds)

    def public_key(self, cid: bytes) -> bytes:
        return cp.point_bytes(self._get(cid).signing_key)

    def _get(self, cid: bytes) -> _Credential:
        try:
            return self._creds[bytes(cid)]
        except KeyError:
            raise UnknownCid() from None

    @staticmethod
    def _prf(cred: _Credential, salt: bytes) -> SymmetricKey:
        if len(salt) != 32:
            raise ValueError("PRF salt must be 32 bytes")
        return SymmetricKey(hmac.new(cred.prf_key, bytes(salt), hashlib.sha256).digest(), KeyRole.PRF_OUTPUT)

    def _ceremony(self, cid, decision: GestureDecision, challenge, salts) -> tuple:
        with self._lock:
            cred = self._get(cid)
            if not decision.approve:
                raise GestureDeclined()
            sig = cp.sign(cred.signing_key, challenge) if challenge is not None else None
            prfs = tuple(None if self.fault_drop_prf else self._prf(cred, s) for s in salts)
            return sig, prfs

    def gesture(self, cid: bytes, challenge: bytes, prf_salt: bytes, decision: GestureDecision):
        """One user-verified ceremony: ``(signature over challenge, PRF(prf_salt))``."""
        sig, (y,) = self._ceremony(cid, decision, challenge, (prf_salt,))
        return sig, y

    def gesture_with_rotation(self, cid: bytes, challenge: bytes, prf_salt: bytes,
                              next_salt: bytes, decision: GestureDecision):
        """Rotation ceremony: one decision, one signature, PRF on both salts."""
        sig, (y, y_next) = self._ceremony(cid, decision, challenge, (prf_salt, next_salt))
        return sig, y, y_next

    def gesture_prf_only(self, cid: bytes, prf_salt: bytes, decision: GestureDecision) -> SymmetricKey:
        _, (y,) = self._ceremony(cid, decision, None, (prf_salt,))
        if y is None:
            raise MissingPrfOutput()
        return y

    # -- test fixture persistence (outside the security model) ---------------

    def export_fixture(self, key: SymmetricKey) -> bytes:
        """Encrypt the whole store under a harness-supplied key."""
        from cryptography.hazmat.primitives.serialization import (
            Encoding, NoEncryption, PrivateFormat,
        )

        with self._lock:
            creds = [
                [c.cid, bytes(c.prf_key),
                 c.signing_key.private_bytes(Encoding.DER, PrivateFormat.PKCS8, NoEncryption())]
                for c in sorted(self._creds.values(), key=lambda c: c.cid)
            ]
        body = cbor2.dumps({0: FIXTURE_VERSION, 1: self.name, 2: creds}, canonical=True)
        nonce, ct = cp.seal(key, body, b"sudp-authenticator-fixture")
        return cbor2.dumps([FIXTURE_VERSION, nonce, ct])

    @classmethod
    def load_fixture(cls, blob: bytes, key: SymmetricKey) -> "Authenticator":
        from cryptography.hazmat.primitives.serialization import load_der_private_key

        try:
            version, nonce, ct = cbor2.loads(blob)
        except Exception:
            raise DecodeFailure("authenticator fixture") from None
        if version != FIXTURE_VERSION:
            raise DecodeFailure("authenticator fixture version")
        body = cbor2.loads(cp.aead_open(key, nonce, ct, b"sudp-authenticator-fixture"))
        auth = cls(body[1])
        for cid, prf_key, der in body[2]:
            auth._creds[cid] = _Credential(cid, prf_key, load_der_private_key(der, None))
        return auth
