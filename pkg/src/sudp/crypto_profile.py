"""Primitive interfaces bound to the concrete standards profile.

========================  =======================================
interface                 realization
========================  =======================================
hash                      SHA-256
kdf                       HKDF-SHA-256, info prefixed by a label
aead                      AES-256-GCM, 12-byte random nonces
wrap / unwrap             AES-KW (RFC 3394), no padding
encap / decap             HPKE base mode, DHKEM(P-256, HKDF-SHA256),
                          HKDF-SHA256, AES-128-GCM, 32-byte export
sign / verify             ECDSA P-256 / SHA-256, raw 64-byte r||s
csprng                    ``secrets.token_bytes`` (OS entropy)
========================  =======================================

Every ``info`` or associated-data argument built by the protocol starts
with one of the :class:`DomainLabel` values. The key-schedule helpers at
the bottom of this module are the only places that reference a label, so
each label is tied to exactly one derivation context.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import secrets
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.keywrap import InvalidUnwrap, aes_key_unwrap, aes_key_wrap
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from sudp.errors import (
    AuthenticationFailure,
    DecapsulationFailure,
    KeyRoleMismatch,
    UnregisteredLabel,
    UnwrapFailure,
)

KEY_LEN = 32
NONCE_LEN = 12
WRAPPED_LEN = 40
SIG_LEN = 64
POINT_LEN = 65

# Version constant mixed into the wrap-key derivation context. It names the
# key-schedule parameters, not the state epoch: peer-map keys must remain
# valid across commits.
KEY_SCHEDULE_VERSION = 1


class DomainLabel(bytes, enum.Enum):
    USER = b"SUDP-v1/user"
    WRAP = b"SUDP-v1/wrap"
    STATE = b"SUDP-v1/state"
    BIND = b"SUDP-v1/bind"
    DELIVER = b"SUDP-v1/deliver"
    DELIVER_AD = b"SUDP-v1/deliver-ad"
    XD_ENC = b"SUDP-v1/xd-enc"


def frame(*parts: bytes) -> bytes:
    """Concatenate ``parts``, each preceded by its 4-byte big-endian length."""
    out = bytearray()
    for p in parts:
        p = bytes(p)
        out += struct.pack(">I", len(p))
        out += p
    return bytes(out)


def encode_uint(n: int) -> bytes:
    return struct.pack(">Q", n)


# -- value types ----------------------------------------------------------------


class Digest(bytes):
    """A 32-byte SHA-256 output."""

    def __new__(cls, value: bytes):
        if len(value) != 32:
            raise ValueError("digest must be 32 bytes")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"Digest({self.hex()[:16]}...)"


class WrappedKey(bytes):
    def __new__(cls, value: bytes):
        if len(value) != WRAPPED_LEN:
            raise ValueError(f"wrapped key must be {WRAPPED_LEN} bytes")
        return super().__new__(cls, value)


class KeyRole(enum.Enum):
    STATE = "state-key"
    WRAP = "wrap-key"
    DELIVERY = "delivery-key"
    CHANNEL = "channel-key"
    INTERMEDIATE = "intermediate"
    PRF_OUTPUT = "prf-output"


class SymmetricKey:
    """32 bytes of key material tagged with the role it plays.

    Material lives in a private ``bytearray`` so that :meth:`zeroize` can
    overwrite it in place. Python offers no guarantee that no other copy
    exists (the C libraries copy internally); zeroization here narrows the
    window, it does not close it.
    """

    __slots__ = ("_buf", "_role")

    def __init__(self, material: bytes | bytearray, role: KeyRole):
        if len(material) != KEY_LEN:
            raise ValueError(f"symmetric key must be {KEY_LEN} bytes")
        if not isinstance(role, KeyRole):
            raise TypeError("role must be a KeyRole")
        object.__setattr__(self, "_buf", bytearray(material))
        object.__setattr__(self, "_role", role)

    def __setattr__(self, name, value):
        raise AttributeError("SymmetricKey is immutable")

    @property
    def role(self) -> KeyRole:
        return self._role

    @property
    def buffer(self) -> bytearray:
        """The live backing buffer (for zeroization bookkeeping)."""
        return self._buf

    def __bytes__(self) -> bytes:
        return bytes(self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymmetricKey):
            return NotImplemented
        return self._role is other._role and hmac.compare_digest(self._buf, other._buf)

    def __hash__(self):
        raise TypeError("SymmetricKey is unhashable")

    def __repr__(self) -> str:
        return f"SymmetricKey(role={self._role.value})"

    def zeroize(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0

    @property
    def zeroized(self) -> bool:
        return not any(self._buf)


def require_role(key: SymmetricKey, role: KeyRole) -> None:
    if key.role is not role:
        raise KeyRoleMismatch(f"expected {role.value} key")


# -- hash, randomness -------------------------------------------------------------


def hash(data: bytes) -> Digest:  # noqa: A001 - the profile's name for H
    return Digest(hashlib.sha256(bytes(data)).digest())


def csprng(n: int) -> bytes:
    if n <= 0:
        raise ValueError("csprng needs n > 0")
    # secrets draws from os.urandom; failures propagate, no fallback.
    return secrets.token_bytes(n)


# -- KDF --------------------------------------------------------------------------


def hkdf(ikm: bytes, salt: bytes | None, info: bytes, length: int = KEY_LEN) -> bytes:
    """Plain HKDF-SHA-256 (a missing salt is the all-zero salt)."""
    return HKDF(algorithm=hashes.SHA256(), length=length, salt=salt, info=info).derive(bytes(ikm))


_FRAMED_LABELS = tuple(frame(lbl.value) for lbl in DomainLabel)


def label_of(info: bytes) -> DomainLabel:
    """Return the label ``info`` starts with, or raise :class:`UnregisteredLabel`."""
    for lbl, prefix in zip(DomainLabel, _FRAMED_LABELS):
        if info.startswith(prefix):
            return lbl
    raise UnregisteredLabel("kdf info does not begin with a registered label")


def kdf(ikm, salt: bytes | None, info: bytes, role: KeyRole) -> SymmetricKey:
    label_of(info)
    return SymmetricKey(hkdf(bytes(ikm), salt, info), role)


# -- AEAD -------------------------------------------------------------------------


def aead_seal(key: SymmetricKey, nonce: bytes, plaintext: bytes, ad: bytes) -> bytes:
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 12 bytes")
    return AESGCM(bytes(key)).encrypt(nonce, bytes(plaintext), ad)


def aead_open(key: SymmetricKey, nonce: bytes, ciphertext: bytes, ad: bytes) -> bytes:
    try:
        return AESGCM(bytes(key)).decrypt(nonce, bytes(ciphertext), ad)
    except (InvalidTag, ValueError):
        raise AuthenticationFailure() from None


def seal(key: SymmetricKey, plaintext: bytes, ad: bytes) -> tuple[bytes, bytes]:
    """Seal under a fresh random nonce; returns ``(nonce, ciphertext)``."""
    nonce = csprng(NONCE_LEN)
    return nonce, aead_seal(key, nonce, plaintext, ad)


# -- key wrap ---------------------------------------------------------------------


def wrap(kek: SymmetricKey, key: SymmetricKey) -> WrappedKey:
    require_role(kek, KeyRole.WRAP)
    return WrappedKey(aes_key_wrap(bytes(kek), bytes(key)))


def unwrap(kek: SymmetricKey, wrapped: bytes, role: KeyRole = KeyRole.STATE) -> SymmetricKey:
    require_role(kek, KeyRole.WRAP)
    try:
        return SymmetricKey(aes_key_unwrap(bytes(kek), bytes(wrapped)), role)
    except (InvalidUnwrap, ValueError):
        raise UnwrapFailure() from None


# -- signatures -------------------------------------------------------------------


def generate_signing_key() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP256R1())


def point_bytes(key) -> bytes:
    """Uncompressed SEC1 encoding of a P-256 public key (or of a private key's public half)."""
    if isinstance(key, ec.EllipticCurvePrivateKey):
        key = key.public_key()
    return key.public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def load_point(data: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), bytes(data))


def sign(sk: ec.EllipticCurvePrivateKey, message: bytes, *, deterministic: bool = False) -> bytes:
    der = sk.sign(bytes(message), ec.ECDSA(hashes.SHA256(), deterministic_signing=deterministic))
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def verify(pk: bytes, message: bytes, sig: bytes) -> bool:
    """ES256 verification over a raw r||s signature. Never raises.

    The final r comparison happens inside OpenSSL's ECDSA verify, which is
    constant time.
    """
    try:
        if len(sig) != SIG_LEN:
            return False
        der = encode_dss_signature(int.from_bytes(sig[:32], "big"), int.from_bytes(sig[32:], "big"))
        load_point(pk).verify(der, bytes(message), ec.ECDSA(hashes.SHA256()))
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# -- ECDH (cross-device channel) ------------------------------------------------------


def ecdh(sk: ec.EllipticCurvePrivateKey, peer_point: bytes) -> bytes:
    """P-256 ECDH; returns the x-coordinate of the shared point."""
    return sk.exchange(ec.ECDH(), load_point(peer_point))


# -- KEM (HPKE) -----------------------------------------------------------------------


def _suite():
    from pyhpke import AEADId, CipherSuite, KDFId, KEMId

    return CipherSuite.new(KEMId.DHKEM_P256_HKDF_SHA256, KDFId.HKDF_SHA256, AEADId.AES128_GCM)


_SUITE = _suite()
KEM_EXPORT_CONTEXT = b""


@dataclass(frozen=True)
class KemKeyPair:
    public: bytes
    _secret: object  # pyhpke private key; never serialized

    @classmethod
    def generate(cls) -> "KemKeyPair":
        return cls.derive(csprng(32))

    @classmethod
    def derive(cls, ikm: bytes) -> "KemKeyPair":
        kp = _SUITE.kem.derive_key_pair(ikm)
        return cls(kp.public_key.to_public_bytes(), kp.private_key)

    def __repr__(self) -> str:
        return f"KemKeyPair(public={self.public[:8].hex()}...)"


def hpke_export(pk: bytes, *, info: bytes = b"", eks=None) -> tuple[bytes, bytes]:
    """HPKE base-mode sender setup plus a 32-byte export. Returns ``(enc, secret)``."""
    pkr = _SUITE.kem.deserialize_public_key(bytes(pk))
    enc, ctx = _SUITE.create_sender_context(pkr, info=info, eks=eks)
    return enc, ctx.export(KEM_EXPORT_CONTEXT, KEY_LEN)


def hpke_import(sk: KemKeyPair, enc: bytes, *, info: bytes = b"") -> bytes:
    try:
        ctx = _SUITE.create_recipient_context(bytes(enc), sk._secret, info=info)
    except Exception:
        raise DecapsulationFailure() from None
    return ctx.export(KEM_EXPORT_CONTEXT, KEY_LEN)


def encap(pk: bytes, op_hash: Digest) -> tuple[SymmetricKey, bytes]:
    """Encapsulate to ``pk``; the delivery key is bound to ``op_hash``."""
    ct_d, shared = hpke_export(pk)
    return derive_delivery_key(shared, op_hash), ct_d


def decap(sk: KemKeyPair, ct_d: bytes, op_hash: Digest) -> SymmetricKey:
    return derive_delivery_key(hpke_import(sk, ct_d), op_hash)


# -- key schedule -----------------------------------------------------------------------
# Each DomainLabel member is referenced by exactly one function below, plus
# the binding preimage in sudp.operation.


def derive_user_key(y: SymmetricKey, cid: bytes) -> SymmetricKey:
    """``u = KDF(y; none, DS_user || cid)``, computed on the authorizer side."""
    require_role(y, KeyRole.PRF_OUTPUT)
    return kdf(y.buffer, None, frame(DomainLabel.USER.value, cid), KeyRole.INTERMEDIATE)


def derive_wrap_key(u: SymmetricKey, eta: bytes, cid: bytes) -> SymmetricKey:
    """``W = KDF(u; eta, DS_wrap || cid || ver)``, computed inside the custodian."""
    require_role(u, KeyRole.INTERMEDIATE)
    info = frame(DomainLabel.WRAP.value, cid, encode_uint(KEY_SCHEDULE_VERSION))
    return kdf(u.buffer, bytes(eta), info, KeyRole.WRAP)


def state_ad(ver: int) -> bytes:
    return frame(DomainLabel.STATE.value, encode_uint(ver))


def derive_delivery_key(shared: bytes, op_hash: Digest) -> SymmetricKey:
    return kdf(shared, None, frame(DomainLabel.DELIVER.value, op_hash), KeyRole.DELIVERY)


def delivery_ad(op_hash: Digest) -> bytes:
    return frame(DomainLabel.DELIVER_AD.value, op_hash)


def derive_channel_key(ss: bytes, r: bytes, pk_u: bytes, pk_t: bytes) -> SymmetricKey:
    return kdf(ss, bytes(r), frame(DomainLabel.XD_ENC.value, pk_u, pk_t), KeyRole.CHANNEL)
