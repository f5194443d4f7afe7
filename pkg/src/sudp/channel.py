"""Grant transports: a trusted in-process channel and the cross-device profile.

Cross-device flow. The custodian offers an ephemeral P-256 key ``pk_t``
signed, together with the freshness token ``r``, by its long-term identity
key. The authorizer checks that signature against the identity provisioned
at registration, runs ECDH with its own ephemeral key and seals the grant::

    k_xd = KDF(ss; r, DS_xd-enc || pk_u || pk_t)
    ad   = H(lp(pk_u) || lp(pk_t) || lp(r))

Envelope: ``{0: 1, 1: pk_u, 2: nonce, 3: ct_g}``. ``r`` is not repeated in
the envelope; both ends already hold it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import cbor2
from cryptography.hazmat.primitives.asymmetric import ec

from sudp import crypto_profile as cp
from sudp.errors import (
    AuthenticationFailure, ChannelFailure, DecodeFailure, PkAuthenticityFailure,
    UnknownOrExpiredFreshness,
)
from sudp.grant import Grant

ENVELOPE_VERSION = 1

Observer = Callable[[str, bytes], None]


@dataclass(frozen=True)
class CustodianIdentity:
    verification_key: bytes


@dataclass(frozen=True)
class XdOffer:
    pk_t: bytes
    sig: bytes

    def encode(self) -> bytes:
        return cbor2.dumps([self.pk_t, self.sig])


@dataclass(frozen=True)
class XdEnvelope:
    pk_u: bytes
    nonce: bytes
    ct_g: bytes

    def encode(self) -> bytes:
        return cbor2.dumps({0: ENVELOPE_VERSION, 1: self.pk_u, 2: self.nonce, 3: self.ct_g}, canonical=True)

    @classmethod
    def decode(cls, data: bytes) -> "XdEnvelope":
        try:
            obj = cbor2.loads(data)
            if obj[0] != ENVELOPE_VERSION:
                raise ValueError("version")
            return cls(bytes(obj[1]), bytes(obj[2]), bytes(obj[3]))
        except Exception:
            raise DecodeFailure("envelope") from None


def offer_message(pk_t: bytes, r: bytes) -> bytes:
    return cp.frame(pk_t, r)


def channel_ad(pk_u: bytes, pk_t: bytes, r: bytes) -> bytes:
    return bytes(cp.hash(cp.frame(pk_u, pk_t, r)))


def xd_seal(g: Grant, offer: XdOffer, identity: CustodianIdentity, r: bytes) -> XdEnvelope:
    """Authorizer side. Refuses outright unless ``pk_t`` is signed for this ``r``."""
    if not cp.verify(identity.verification_key, offer_message(offer.pk_t, r), offer.sig):
        raise PkAuthenticityFailure()
    sk_u = ec.generate_private_key(ec.SECP256R1())
    pk_u = cp.point_bytes(sk_u)
    ss = bytearray(cp.ecdh(sk_u, offer.pk_t))
    del sk_u
    k = cp.derive_channel_key(ss, r, pk_u, offer.pk_t)
    ss[:] = bytes(len(ss))
    try:
        nonce, ct = cp.seal(k, g.encode(), channel_ad(pk_u, offer.pk_t, r))
    finally:
        k.zeroize()
    return XdEnvelope(pk_u, nonce, ct)


def xd_open(env: XdEnvelope, sk_t: ec.EllipticCurvePrivateKey, r: bytes) -> Grant:
    pk_t = cp.point_bytes(sk_t)
    try:
        ss = bytearray(cp.ecdh(sk_t, env.pk_u))
    except Exception:
        raise AuthenticationFailure() from None
    k = cp.derive_channel_key(ss, r, env.pk_u, pk_t)
    ss[:] = bytes(len(ss))
    try:
        data = cp.aead_open(k, env.nonce, env.ct_g, channel_ad(env.pk_u, pk_t, r))
    finally:
        k.zeroize()
    return Grant.decode(data)


class XdResponder:
    """Custodian end of the cross-device channel.

    Holds the long-term identity key and one retained ephemeral secret per
    outstanding token. A retained secret is dropped once its token is spent.
    """

    def __init__(self, custodian, identity_key: ec.EllipticCurvePrivateKey | None = None):
        self.custodian = custodian
        self._identity_key = identity_key or cp.generate_signing_key()
        self._retained: dict[bytes, ec.EllipticCurvePrivateKey] = {}
        self._lock = threading.Lock()

    @property
    def identity(self) -> CustodianIdentity:
        return CustodianIdentity(cp.point_bytes(self._identity_key))

    def offer(self, r: bytes) -> XdOffer:
        if not self.custodian.pool.is_outstanding(r, self.custodian.clock()):
            raise UnknownOrExpiredFreshness()
        sk_t = ec.generate_private_key(ec.SECP256R1())
        pk_t = cp.point_bytes(sk_t)
        with self._lock:
            self._retained[bytes(r)] = sk_t
        return XdOffer(pk_t, cp.sign(self._identity_key, offer_message(pk_t, r)))

    def retained_count(self) -> int:
        return len(self._retained)

    def open(self, envelope: bytes, r: bytes) -> Grant:
        with self._lock:
            sk_t = self._retained.get(bytes(r))
            if sk_t is None or not self.custodian.pool.is_outstanding(r, self.custodian.clock()):
                self._retained.pop(bytes(r), None)
                raise UnknownOrExpiredFreshness()
        return xd_open(XdEnvelope.decode(envelope), sk_t, r)

    def receive(self, envelope: bytes, r: bytes):
        """Open and submit. The token is spent by redemption, so the secret goes too."""
        g = self.open(envelope, r)
        try:
            return self.custodian.submit(g)
        finally:
            with self._lock:
                self._retained.pop(bytes(r), None)
            g.u_star.zeroize()
            if g.opt is not None:
                g.opt.u_next.zeroize()


class BytePipe:
    """In-process pipe; observers see every byte string that crosses it."""

    def __init__(self):
        self.observers: list[Observer] = []

    def carry(self, kind: str, data: bytes) -> bytes:
        for obs in self.observers:
            obs(kind, bytes(data))
        return data


class InProcessChannel:
    """Models the authenticated confidential authorizer-to-custodian link."""

    def __init__(self, custodian, pipe: BytePipe | None = None):
        self.custodian = custodian
        self.pipe = pipe or BytePipe()

    def send(self, g: Grant):
        data = self.pipe.carry("grant", g.encode())
        return self.custodian.submit_bytes(data)


class CrossDeviceChannel:
    """Runs the offer / seal / open exchange over a public, observable pipe."""

    def __init__(self, responder: XdResponder, identity: CustodianIdentity, pipe: BytePipe | None = None,
                 offer_hook: Callable[[XdOffer, bytes], XdOffer] | None = None):
        self.responder = responder
        self.identity = identity
        self.pipe = pipe or BytePipe()
        self.offer_hook = offer_hook
        self.last_envelope: bytes | None = None

    def send(self, g: Grant):
        self.last_envelope = None
        offer = self.responder.offer(g.r)
        self.pipe.carry("offer", offer.encode())
        if self.offer_hook is not None:
            offer = self.offer_hook(offer, g.r)
        envelope = xd_seal(g, offer, self.identity, g.r).encode()
        self.last_envelope = self.pipe.carry("envelope", envelope)
        return self.responder.receive(envelope, g.r)


def replay(channel: CrossDeviceChannel, envelope: bytes, r: bytes):
    """Resubmit a captured envelope, as a network attacker would."""
    if envelope is None:
        raise ChannelFailure("nothing captured")
    return channel.responder.receive(envelope, r)
