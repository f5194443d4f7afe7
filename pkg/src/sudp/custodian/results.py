"""What consumption releases: a use response, a sealed export, or a commit receipt."""

from __future__ import annotations

from dataclasses import dataclass

import cbor2

from sudp import crypto_profile as cp
from sudp.crypto_profile import Digest, KemKeyPair
from sudp.errors import DecodeFailure
from sudp.operation import Operation, OpType, op_hash

RESULT_VERSION = 1


@dataclass(frozen=True)
class UseResult:
    response: bytes
    op_hash: Digest

    kind = "use-result"

    def encode(self) -> bytes:
        return cbor2.dumps({0: RESULT_VERSION, 1: bytes(self.op_hash), 2: self.response}, canonical=True)


@dataclass(frozen=True)
class DeliveryArtifact:
    """``(ct_d, delta)``: a secret sealed to the recipient and bound to one operation."""

    ct_d: bytes
    nonce: bytes
    delta: bytes

    kind = "delivery-artifact"

    def encode(self) -> bytes:
        return cbor2.dumps({0: RESULT_VERSION, 1: self.ct_d, 2: self.nonce, 3: self.delta}, canonical=True)

    @classmethod
    def decode(cls, data: bytes) -> "DeliveryArtifact":
        try:
            obj = cbor2.loads(data)
            if obj[0] != RESULT_VERSION:
                raise ValueError("version")
            return cls(bytes(obj[1]), bytes(obj[2]), bytes(obj[3]))
        except Exception:
            raise DecodeFailure("delivery artifact") from None


@dataclass(frozen=True)
class CommitReceipt:
    op_type: OpType
    ver: int
    op_hash: Digest

    kind = "commit-receipt"

    def encode(self) -> bytes:
        return cbor2.dumps(
            {0: RESULT_VERSION, 1: int(self.op_type), 2: self.ver, 3: bytes(self.op_hash)}, canonical=True)


def open_delivery(artifact: DeliveryArtifact, recipient: KemKeyPair, o: Operation) -> bytes:
    """Recipient side: recover the exported secret. Fails unless key and operation both match."""
    h = op_hash(o)
    k_d = cp.decap(recipient, artifact.ct_d, h)
    try:
        return cp.aead_open(k_d, artifact.nonce, artifact.delta, cp.delivery_ad(h))
    finally:
        k_d.zeroize()
