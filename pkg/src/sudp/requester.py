"""The requester role: proposes operations, relays hand-offs, receives releases.

Everything the requester sends or receives passes through its
:class:`RequesterTranscript`, which the harness scans for leaked key
material. Adversarial behaviour is injected through hooks so the same code
path serves honest and attack scenarios.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import cbor2

from sudp import crypto_profile as cp
from sudp.grant import HandoffTuple
from sudp.operation import HttpCallTemplate, Operation, canonical_serialize, compile_http

HandoffHook = Callable[[HandoffTuple], HandoffTuple]


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str  # "sent" or "received"
    kind: str
    data: bytes


class RequesterTranscript:
    """Append-only log of every byte sequence the requester sees."""

    def __init__(self):
        self._entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def record(self, direction: str, kind: str, data: bytes) -> None:
        with self._lock:
            self._entries.append(TranscriptEntry(direction, kind, bytes(data)))

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def kinds(self) -> set[str]:
        return {e.kind for e in self._entries}

    def contains(self, needle: bytes) -> bool:
        """True if ``needle`` occurs raw or hex-encoded in any entry."""
        needle = bytes(needle)
        hexed = needle.hex().encode()
        return any(needle in e.data or hexed in e.data.lower() for e in self._entries)

    def digest(self) -> str:
        h = bytearray()
        for e in self._entries:
            h += cp.frame(e.direction.encode(), e.kind.encode(), e.data)
        return cp.hash(bytes(h)).hex()


class Requester:
    def __init__(self, custodian, transcript: RequesterTranscript | None = None,
                 handoff_hook: HandoffHook | None = None):
        self.custodian = custodian
        self.transcript = transcript or RequesterTranscript()
        self.handoff_hook = handoff_hook

    def propose(self, template: HttpCallTemplate, target: str, expiry: int) -> Operation:
        """Compile a tool call into a ``use`` descriptor; the body is frozen at the custodian."""
        self.transcript.record("sent", "proposal-template", cbor2.dumps(
            [template.method, template.url, dict(template.headers), template.body]))
        o = compile_http(template, target, self.custodian.name, expiry, self.custodian.shadows)
        self.transcript.record("sent", "proposal", canonical_serialize(o))
        return o

    def propose_operation(self, o: Operation) -> Operation:
        self.transcript.record("sent", "proposal", canonical_serialize(o))
        return o

    def request_grant(self, o: Operation) -> HandoffTuple:
        r, creds = self.custodian.issue_freshness(o)
        h = HandoffTuple(o, r, tuple(creds))
        self.transcript.record("received", "freshness", cbor2.dumps([r, [list(c) for c in creds]]))
        return h

    def relay_handoff(self, h: HandoffTuple) -> HandoffTuple:
        delivered = self.handoff_hook(h) if self.handoff_hook else h
        self.transcript.record("sent", "handoff", delivered.encode())
        return delivered

    def receive(self, kind: str, data: bytes) -> bytes:
        self.transcript.record("received", kind, data)
        return data
