"""Operation descriptors, their canonical encoding, binding and rendering.

Wire layout of a descriptor (deterministic CBOR, RFC 8949 section 4.2.1)::

    {
      0: 1,                                   ; schema version
      1: {0: type, 1: target, 2: [[key, value], ...]},   ; act
      2: {0: redeemer, 1: recipient / null},             ; bind
      3: {0: expiry}                                     ; valid
    }

``type`` is the :class:`OpType` integer, ``target`` and ``redeemer`` are
text, scope keys are text sorted by their UTF-8 bytes and scope values are
byte strings, ``recipient`` is a 65-byte uncompressed P-256 point, and
``expiry`` is an unsigned UNIX timestamp.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import re
import threading
import urllib.parse
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import cbor2

from sudp import crypto_profile as cp
from sudp.crypto_profile import DomainLabel, Digest
from sudp.errors import (
    AuthorityHeaderPresent,
    DecodeFailure,
    MalformedUrl,
    MissingShadow,
    NonCanonicalOperation,
    ShadowHashMismatch,
)

SCHEMA_VERSION = 1
_SCOPE_KEY = re.compile(r"^[a-z][a-z0-9_]{0,63}$")


class OpType(enum.IntEnum):
    USE = 0
    EXPORT = 1
    WRITE = 2
    ROTATE = 3
    ENROLL = 4
    REVOKE = 5

    @property
    def label(self) -> str:
        return self.name.lower()


ROTATION_CLASS = frozenset({OpType.WRITE, OpType.ROTATE, OpType.ENROLL, OpType.REVOKE})

# Scope key under which the authorizer commits the acting credential's next salt.
NEXT_SALT_KEY = "eta_next"


def _check_text(name: str, value: str) -> None:
    if not isinstance(value, str) or not value:
        raise NonCanonicalOperation(f"{name} must be non-empty text")
    if any(not ch.isprintable() for ch in value):
        raise NonCanonicalOperation(f"{name} contains non-printable characters")


@dataclass(frozen=True)
class Operation:
    op_type: OpType
    target: str
    scope: tuple[tuple[str, bytes], ...]
    redeemer: str
    recipient: bytes | None
    expiry: int

    def __post_init__(self):
        if not isinstance(self.op_type, OpType):
            try:
                object.__setattr__(self, "op_type", OpType(self.op_type))
            except ValueError:
                raise NonCanonicalOperation("unknown operation type") from None
        _check_text("target", self.target)
        _check_text("redeemer", self.redeemer)
        keys = []
        for item in self.scope:
            if len(item) != 2:
                raise NonCanonicalOperation("scope entries are (key, value) pairs")
            k, v = item
            if not isinstance(k, str) or not _SCOPE_KEY.match(k):
                raise NonCanonicalOperation(f"bad scope key {k!r}")
            if not isinstance(v, bytes):
                raise NonCanonicalOperation("scope values are byte strings")
            keys.append(k.encode())
        if len(set(keys)) != len(keys):
            raise NonCanonicalOperation("duplicate scope key")
        if keys != sorted(keys):
            raise NonCanonicalOperation("scope keys not sorted")
        if self.recipient is not None:
            if not isinstance(self.recipient, bytes) or len(self.recipient) != cp.POINT_LEN:
                raise NonCanonicalOperation("recipient must be a 65-byte P-256 point")
        if self.op_type is OpType.EXPORT and self.recipient is None:
            raise NonCanonicalOperation("export operations require a recipient")
        if isinstance(self.expiry, bool) or not isinstance(self.expiry, int) or self.expiry < 0:
            raise NonCanonicalOperation("expiry must be a non-negative integer")

    @classmethod
    def build(cls, op_type, target: str, scope: Mapping[str, bytes] | Iterable = (), *,
              redeemer: str, expiry: int, recipient: bytes | None = None) -> "Operation":
        """Construct a descriptor, sorting ``scope`` into canonical order."""
        items = scope.items() if isinstance(scope, Mapping) else scope
        pairs = sorted(((k, bytes(v)) for k, v in items), key=lambda kv: kv[0].encode())
        return cls(OpType(op_type), target, tuple(pairs), redeemer, recipient, int(expiry))

    @property
    def scope_map(self) -> dict[str, bytes]:
        return dict(self.scope)

    @property
    def is_rotation_class(self) -> bool:
        return self.op_type in ROTATION_CLASS

    def with_scope(self, **fields: bytes) -> "Operation":
        merged = self.scope_map
        merged.update(fields)
        pairs = sorted(merged.items(), key=lambda kv: kv[0].encode())
        return replace(self, scope=tuple(pairs))


# -- canonical encoding -------------------------------------------------------------


def _to_cbor_obj(o: Operation) -> dict:
    return {
        0: SCHEMA_VERSION,
        1: {0: int(o.op_type), 1: o.target, 2: [[k, v] for k, v in o.scope]},
        2: {0: o.redeemer, 1: o.recipient},
        3: {0: o.expiry},
    }


def canonical_serialize(o: Operation) -> bytes:
    # Revalidate: frozen dataclasses can still be altered via object.__setattr__.
    Operation(o.op_type, o.target, o.scope, o.redeemer, o.recipient, o.expiry)
    return cbor2.dumps(_to_cbor_obj(o), canonical=True)


def decode_operation(data: bytes) -> Operation:
    """Strict inverse of :func:`canonical_serialize`.

    Any encoding that does not re-serialize to the identical bytes is rejected.
    """
    try:
        obj = cbor2.loads(bytes(data))
        if not isinstance(obj, dict) or set(obj) != {0, 1, 2, 3}:
            raise ValueError("top-level keys")
        if obj[0] != SCHEMA_VERSION:
            raise ValueError("schema version")
        act, bind, valid = obj[1], obj[2], obj[3]
        if set(act) != {0, 1, 2} or set(bind) != {0, 1} or set(valid) != {0}:
            raise ValueError("member keys")
        scope = tuple((k, v) for k, v in act[2])
        o = Operation(act[0], act[1], scope, bind[0], bind[1], valid[0])
    except NonCanonicalOperation:
        raise
    except Exception as exc:
        raise DecodeFailure(f"operation: {type(exc).__name__}") from None
    if canonical_serialize(o) != bytes(data):
        raise NonCanonicalOperation("encoding is not canonical")
    return o


def op_hash(o: Operation) -> Digest:
    return cp.hash(canonical_serialize(o))


# -- binding ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Binding:
    beta: Digest


def compute_binding(r: bytes, cid: bytes, o: Operation) -> Binding:
    """The signed challenge committing freshness, acting credential and operation."""
    preimage = cp.frame(DomainLabel.BIND.value, r, cid, op_hash(o))
    return Binding(cp.hash(preimage))


# -- trusted rendering ------------------------------------------------------------------


def _printable_ascii(v: bytes) -> bool:
    return bool(v) and all(0x20 <= b < 0x7F for b in v)


def _render_bytes(v: bytes, full: bool) -> str:
    if _printable_ascii(v):
        return json.dumps(v.decode("ascii"))
    if full or len(v) <= 8:
        return f"0x{v.hex()} ({len(v)} bytes)"
    return f"0x{v[:8].hex()}... ({len(v)} bytes)"


def recipient_fingerprint(pk: bytes) -> str:
    return "sha256:" + cp.hash(pk).hex()


def render(o: Operation, *, full: bool = False) -> str:
    """Deterministic, field-complete text shown to the authorizer before a gesture.

    Binary scope values are abbreviated to their first 8 bytes plus length
    unless ``full`` is set; text values always appear in full.
    """
    when = _dt.datetime.fromtimestamp(o.expiry, _dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    lines = [
        f"operation (schema v{SCHEMA_VERSION})",
        f"  type: {o.op_type.label}",
        f"  target: {json.dumps(o.target)}",
    ]
    if not o.scope:
        lines.append("  scope: (empty)")
    for k, v in o.scope:
        lines.append(f"  scope.{k}: {_render_bytes(v, full)}")
    lines.append(f"  redeemer: {json.dumps(o.redeemer)}")
    if o.recipient is None:
        lines.append("  recipient: none")
    else:
        fp = recipient_fingerprint(o.recipient)
        lines.append(f"  recipient: {fp if full else fp[:7 + 16] + '...'}")
    lines.append(f"  expiry: {o.expiry} ({when})")
    lines.append(f"  op_hash: {op_hash(o).hex()}")
    return "\n".join(lines) + "\n"


# -- HTTP adapter ---------------------------------------------------------------------

AUTHORITY_HEADERS = frozenset({"authorization", "proxy-authorization", "x-api-key", "cookie"})
HTTP_SCOPE_KEYS = ("body_hash", "host", "method", "path", "scheme")


@dataclass(frozen=True)
class HttpCallTemplate:
    method: str
    url: str
    headers: Mapping[str, str] = field(default_factory=dict)
    body: bytes = b""


@dataclass(frozen=True)
class NativeCall:
    """The native request the custodian presents to the environment."""

    method: str
    scheme: str
    host: str
    path: str
    body: bytes
    authority: bytes | None = None

    def with_authority(self, secret: bytes) -> "NativeCall":
        return replace(self, authority=bytes(secret))


class ShadowStore:
    """Request bodies frozen at proposal time, content-addressed by ``op_hash``."""

    def __init__(self):
        self._lock = threading.Lock()
        self._bodies: dict[bytes, bytes] = {}
        self._expiry: dict[bytes, int] = {}

    def commit(self, key: Digest, body: bytes, expiry: int) -> None:
        with self._lock:
            existing = self._bodies.get(bytes(key))
            if existing is not None:
                if existing != body:
                    raise ShadowHashMismatch("shadow already committed with different body")
                return
            self._bodies[bytes(key)] = bytes(body)
            self._expiry[bytes(key)] = expiry

    def get(self, key: Digest) -> bytes:
        with self._lock:
            try:
                return self._bodies[bytes(key)]
            except KeyError:
                raise MissingShadow() from None

    def prune(self, key: Digest) -> None:
        with self._lock:
            self._bodies.pop(bytes(key), None)
            self._expiry.pop(bytes(key), None)

    def prune_expired(self, now: float) -> int:
        with self._lock:
            dead = [k for k, exp in self._expiry.items() if exp <= now]
            for k in dead:
                del self._bodies[k]
                del self._expiry[k]
            return len(dead)

    def __contains__(self, key) -> bool:
        with self._lock:
            return bytes(key) in self._bodies

    def __len__(self) -> int:
        return len(self._bodies)


def compile_http(template: HttpCallTemplate, target: str, redeemer: str, expiry: int,
                 shadows: ShadowStore) -> Operation:
    """Compile a proposed HTTP call into a ``use`` descriptor and freeze its body."""
    for name in template.headers:
        if name.strip().lower() in AUTHORITY_HEADERS:
            raise AuthorityHeaderPresent(f"template carries an authority header ({name.strip().lower()})")
    try:
        parts = urllib.parse.urlsplit(template.url)
        host = parts.hostname
        port = parts.port
    except ValueError:
        raise MalformedUrl() from None
    if parts.scheme not in ("http", "https") or not host:
        raise MalformedUrl()
    if parts.username or parts.password:
        raise AuthorityHeaderPresent("credentials embedded in URL")
    if port is not None:
        host = f"{host}:{port}"
    path = parts.path or "/"
    if parts.query:
        path = f"{path}?{parts.query}"
    method = template.method.strip().upper()
    if not method.isalpha():
        raise MalformedUrl("bad method")
    body = bytes(template.body)
    o = Operation.build(
        OpType.USE,
        target,
        {
            "method": method.encode(),
            "scheme": parts.scheme.encode(),
            "host": host.lower().encode(),
            "path": path.encode(),
            "body_hash": bytes(cp.hash(body)),
        },
        redeemer=redeemer,
        expiry=expiry,
    )
    shadows.commit(op_hash(o), body, expiry)
    return o


def execution_mapping(o: Operation, shadows: ShadowStore) -> NativeCall:
    """Rebuild the native call from an accepted descriptor and its frozen body.

    The returned call has an empty authority slot; only the custodian fills it.
    """
    scope = o.scope_map
    missing = [k for k in HTTP_SCOPE_KEYS if k not in scope]
    if missing:
        raise NonCanonicalOperation(f"not an HTTP descriptor (missing {', '.join(missing)})")
    body = shadows.get(op_hash(o))
    if cp.hash(body) != scope["body_hash"]:
        raise ShadowHashMismatch()
    return NativeCall(
        method=scope["method"].decode(),
        scheme=scope["scheme"].decode(),
        host=scope["host"].decode(),
        path=scope["path"].decode(),
        body=body,
    )
