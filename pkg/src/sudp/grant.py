"""Grant and hand-off messages and their canonical CBOR encodings.

Hand-off (R -> U, public)::

    {0: 1, 1: <operation bytes>, 2: r, 3: [[cid, eta], ...]}

Grant (U -> T, confidential)::

    {0: 1, 1: <operation bytes>, 2: r, 3: cid, 4: u, 5: sig, 6: [u_next, eta_next] / null}
"""

from __future__ import annotations

from dataclasses import dataclass

import cbor2

from sudp.crypto_profile import KeyRole, SymmetricKey
from sudp.errors import DecodeFailure, NonCanonicalOperation
from sudp.operation import Operation, canonical_serialize, decode_operation

MESSAGE_VERSION = 1
TOKEN_LEN = 32


@dataclass(frozen=True)
class HandoffTuple:
    o: Operation
    r: bytes
    creds: tuple[tuple[bytes, bytes], ...]

    def encode(self) -> bytes:
        return cbor2.dumps(
            {0: MESSAGE_VERSION, 1: canonical_serialize(self.o), 2: self.r,
             3: [[cid, eta] for cid, eta in self.creds]},
            canonical=True,
        )

    @classmethod
    def decode(cls, data: bytes) -> "HandoffTuple":
        try:
            obj = cbor2.loads(data)
            if obj[0] != MESSAGE_VERSION:
                raise ValueError("version")
            return cls(decode_operation(obj[1]), bytes(obj[2]),
                       tuple((bytes(c), bytes(e)) for c, e in obj[3]))
        except (DecodeFailure, NonCanonicalOperation):
            raise
        except Exception:
            raise DecodeFailure("handoff") from None


@dataclass(frozen=True)
class NextSalt:
    """Rotation material: the next salt and the intermediate derived from it."""

    u_next: SymmetricKey
    eta_next: bytes


@dataclass(frozen=True)
class Grant:
    o: Operation
    r: bytes
    cid_star: bytes
    u_star: SymmetricKey
    sigma_star: bytes
    opt: NextSalt | None = None

    def encode(self) -> bytes:
        opt = None if self.opt is None else [bytes(self.opt.u_next), self.opt.eta_next]
        return cbor2.dumps(
            {0: MESSAGE_VERSION, 1: canonical_serialize(self.o), 2: self.r, 3: self.cid_star,
             4: bytes(self.u_star), 5: self.sigma_star, 6: opt},
            canonical=True,
        )

    @classmethod
    def decode(cls, data: bytes) -> "Grant":
        try:
            obj = cbor2.loads(data)
            if obj[0] != MESSAGE_VERSION:
                raise ValueError("version")
            opt = obj[6]
            if opt is not None:
                opt = NextSalt(SymmetricKey(opt[0], KeyRole.INTERMEDIATE), bytes(opt[1]))
            return cls(
                decode_operation(obj[1]), bytes(obj[2]), bytes(obj[3]),
                SymmetricKey(obj[4], KeyRole.INTERMEDIATE), bytes(obj[5]), opt,
            )
        except (DecodeFailure, NonCanonicalOperation):
            raise
        except Exception:
            raise DecodeFailure("grant") from None
