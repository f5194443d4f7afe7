"""The authorizer's trusted client.

It receives a hand-off, shows the rendered operation to a decision source,
and on approval drives one gesture that signs the binding and evaluates the
PRF. The resulting grant goes straight to the custodian, never back through
the requester.
"""

from __future__ import annotations

from typing import Callable

from sudp import crypto_profile as cp
from sudp.authenticator import APPROVE, Authenticator, DecisionSource, always
from sudp.custodian import SetupCredential
from sudp.custodian.events import EventLog
from sudp.errors import GestureDeclined, MissingPrfOutput, UnknownCredentialInHandoff
from sudp.grant import Grant, HandoffTuple, NextSalt
from sudp.operation import NEXT_SALT_KEY, compute_binding, op_hash, render

SALT_LEN = 32


class Authorizer:
    def __init__(self, authenticator: Authenticator, decisions: DecisionSource | None = None):
        self.authenticator = authenticator
        self.devices: list[Authenticator] = [authenticator]
        self.decisions = decisions or always(APPROVE)
        self.events = EventLog()
        self.key_tap: Callable[[str, bytes], None] | None = None

    def add_device(self, authenticator: Authenticator) -> None:
        if authenticator not in self.devices:
            self.devices.append(authenticator)

    def device_for(self, cid: bytes) -> Authenticator:
        for dev in self.devices:
            if cid in dev.credential_ids():
                return dev
        raise UnknownCredentialInHandoff("no local authenticator holds this credential")

    def _tap(self, label: str, material) -> None:
        if self.key_tap is not None:
            self.key_tap(label, bytes(material))

    def _user_key(self, y, cid: bytes):
        if y is None:
            raise MissingPrfOutput()
        try:
            self._tap("y", y)
            u = cp.derive_user_key(y, cid)
        finally:
            y.zeroize()
        self._tap("u", u)
        return u

    def review_and_grant(self, h: HandoffTuple, chosen: bytes,
                         decisions: DecisionSource | None = None) -> Grant:
        source = decisions or self.decisions
        creds = dict(h.creds)
        if chosen not in creds:
            raise UnknownCredentialInHandoff()
        eta = creds[chosen]
        o = h.o
        eta_next = None
        if o.is_rotation_class:
            # committed before rendering so the signature covers it
            eta_next = cp.csprng(SALT_LEN)
            o = o.with_scope(**{NEXT_SALT_KEY: eta_next})

        digest = op_hash(o).hex()
        rendering = render(o)
        self.events.record("rendered", op_hash=digest)
        decision = source(rendering)
        self.events.record("decision", op_hash=digest, approve=decision.approve)
        if not decision.approve:
            raise GestureDeclined()

        beta = compute_binding(h.r, chosen, o).beta
        if eta_next is None:
            sig, y = self.device_for(chosen).gesture(chosen, beta, eta, decision)
            u = self._user_key(y, chosen)
            opt = None
        else:
            sig, y, y_next = self.device_for(chosen).gesture_with_rotation(chosen, beta, eta, eta_next, decision)
            if y_next is None:
                if y is not None:
                    y.zeroize()
                raise MissingPrfOutput()
            u = self._user_key(y, chosen)
            opt = NextSalt(self._user_key(y_next, chosen), eta_next)
        self.events.record("grant", op_hash=digest, beta=beta.hex())
        return Grant(o, h.r, chosen, u, sig, opt)

    def send_grant(self, g: Grant, channel):
        """Deliver over a confidential channel to the custodian; returns its outcome."""
        self.events.record("sent", op_hash=op_hash(g.o).hex())
        return channel.send(g)

    def setup_credential(self, cid: bytes, decisions: DecisionSource | None = None) -> SetupCredential:
        """Phase I material for one credential: its key and a gesture-backed ``u`` source."""
        source = decisions or self.decisions

        def derive_u(eta: bytes):
            y = device.gesture_prf_only(cid, eta, source("setup: enroll credential " + cid.hex()))
            return self._user_key(y, cid)

        device = self.device_for(cid)
        return SetupCredential(cid, device.public_key(cid), derive_u)

    def prepare_enrollment(self, newcomer: Authenticator, cid: bytes,
                           decisions: DecisionSource | None = None) -> dict[str, bytes]:
        """Scope fields for an ``enroll`` operation adding ``cid`` from ``newcomer``."""
        source = decisions or self.decisions
        self.add_device(newcomer)
        eta = cp.csprng(SALT_LEN)
        y = newcomer.gesture_prf_only(cid, eta, source("enroll: new credential " + cid.hex()))
        u = self._user_key(y, cid)
        try:
            return {
                "enroll_cid": bytes(cid),
                "enroll_pk": newcomer.public_key(cid),
                "enroll_eta": eta,
                "enroll_u": bytes(u),
            }
        finally:
            u.zeroize()
