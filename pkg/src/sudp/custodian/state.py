"""Sealed and protected state, and crash-safe persistence.

Sealed-state file layout (deterministic CBOR)::

    {0: FORMAT_VERSION,
     1: ver,
     2: [nonce, ciphertext],
     3: [[cid, eta, wrapped], ...],   # sorted by cid
     4: [[cid, public_key], ...]}     # sorted by cid

The committed file lives at ``path``; a commit writes ``path + ".staging"``,
fsyncs it, renames it over ``path`` and fsyncs the directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import cbor2

from sudp import crypto_profile as cp
from sudp.crypto_profile import KeyRole, SymmetricKey, WrappedKey
from sudp.errors import CorruptState, PersistenceFailure, VersionMismatch

FORMAT_VERSION = 1
PROTECTED_VERSION = 1
SALT_LEN = 32

COMMIT_STAGES = ("pre-staging", "post-staging", "post-rename", "post-zeroize")
_STAGE_ALIASES = {"staging-write": "post-staging", "rename": "post-rename", "zeroize": "post-zeroize"}


def normalize_stage(name: str) -> str:
    stage = _STAGE_ALIASES.get(name, name)
    if stage not in COMMIT_STAGES:
        raise ValueError(f"unknown commit stage {name!r}")
    return stage


@dataclass(frozen=True)
class Entry:
    cid: bytes
    eta: bytes
    wrapped: WrappedKey


@dataclass(frozen=True)
class SealedState:
    nonce: bytes
    ciphertext: bytes
    entries: tuple[Entry, ...]
    reg: tuple[tuple[bytes, bytes], ...]
    ver: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries, key=lambda e: e.cid)))
        object.__setattr__(self, "reg", tuple(sorted(self.reg)))
        cids = [e.cid for e in self.entries]
        if len(set(cids)) != len(cids):
            raise CorruptState("duplicate credential entry")
        if set(cids) != {c for c, _ in self.reg}:
            raise CorruptState("entries and registry disagree")
        if len(self.nonce) != cp.NONCE_LEN:
            raise CorruptState("bad nonce")

    def entry(self, cid: bytes) -> Entry | None:
        for e in self.entries:
            if e.cid == cid:
                return e
        return None

    @property
    def reg_map(self) -> dict[bytes, bytes]:
        return dict(self.reg)

    @property
    def cids(self) -> list[bytes]:
        return [e.cid for e in self.entries]

    def encode(self) -> bytes:
        return cbor2.dumps(
            {
                0: FORMAT_VERSION,
                1: self.ver,
                2: [self.nonce, self.ciphertext],
                3: [[e.cid, e.eta, bytes(e.wrapped)] for e in self.entries],
                4: [[c, pk] for c, pk in self.reg],
            },
            canonical=True,
        )

    @classmethod
    def decode(cls, data: bytes) -> "SealedState":
        try:
            obj = cbor2.loads(data)
        except Exception:
            raise CorruptState("undecodable state file") from None
        if not isinstance(obj, dict) or 0 not in obj:
            raise CorruptState("not a state document")
        if obj[0] != FORMAT_VERSION:
            raise VersionMismatch(f"state format {obj[0]!r}")
        try:
            nonce, ct = obj[2]
            entries = []
            for cid, eta, wrapped in obj[3]:
                if len(eta) != SALT_LEN:
                    raise ValueError("salt length")
                entries.append(Entry(bytes(cid), bytes(eta), WrappedKey(bytes(wrapped))))
            reg = []
            for cid, pk in obj[4]:
                if len(pk) != cp.POINT_LEN:
                    raise ValueError("public key length")
                reg.append((bytes(cid), bytes(pk)))
            ver = obj[1]
            if isinstance(ver, bool) or not isinstance(ver, int) or ver < 0:
                raise ValueError("ver")
            state = cls(bytes(nonce), bytes(ct), tuple(entries), tuple(reg), ver)
        except CorruptState:
            raise
        except Exception:
            raise CorruptState("malformed state document") from None
        if state.encode() != bytes(data):
            raise CorruptState("state file is not canonically encoded")
        return state


@dataclass
class ProtectedState:
    """The plaintext ``M``: target secrets plus every credential's wrap key."""

    secrets: dict[str, bytes] = field(default_factory=dict)
    peer: dict[bytes, SymmetricKey] = field(default_factory=dict)

    def encode(self) -> bytearray:
        doc = {
            0: PROTECTED_VERSION,
            1: {t: bytes(s) for t, s in self.secrets.items()},
            2: {cid: bytes(w) for cid, w in self.peer.items()},
        }
        return bytearray(cbor2.dumps(doc, canonical=True))

    @classmethod
    def decode(cls, data: bytes) -> "ProtectedState":
        try:
            obj = cbor2.loads(bytes(data))
            if obj[0] != PROTECTED_VERSION:
                raise ValueError("version")
            secrets = {str(t): bytearray(s) for t, s in obj[1].items()}
            peer = {bytes(c): SymmetricKey(w, KeyRole.WRAP) for c, w in obj[2].items()}
        except Exception:
            raise CorruptState("protected state malformed") from None
        return cls(secrets, peer)

    def zeroize(self) -> None:
        for s in self.secrets.values():
            if isinstance(s, bytearray):
                s[:] = bytes(len(s))
        for w in self.peer.values():
            w.zeroize()


CrashHook = Callable[[str], None]


class StateStore:
    """Committed state file plus its staging sibling."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.staging = Path(str(self.path) + ".staging")

    def exists(self) -> bool:
        return self.path.exists()

    def load(self) -> SealedState:
        """Read the committed file; stale staging remnants are discarded."""
        if self.staging.exists():
            if self.path.exists():
                self.staging.unlink()
            else:
                # A staging file without a committed file means setup never completed.
                raise CorruptState("only an uncommitted staging file is present")
        try:
            data = self.path.read_bytes()
        except FileNotFoundError:
            raise CorruptState("no committed state file") from None
        return SealedState.decode(data)

    def write_staging(self, state: SealedState) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(self.staging, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
            with os.fdopen(fd, "wb") as fh:
                fh.write(state.encode())
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise PersistenceFailure(type(exc).__name__) from None

    def promote(self) -> None:
        try:
            os.replace(self.staging, self.path)
            dfd = os.open(self.path.parent, os.O_RDONLY)
            try:
                os.fsync(dfd)
            finally:
                os.close(dfd)
        except OSError as exc:
            raise PersistenceFailure(type(exc).__name__) from None

    def commit(self, state: SealedState, hook: CrashHook | None = None) -> None:
        """Stage, fsync and rename. ``hook`` is called at each stage boundary."""
        hook = hook or (lambda _stage: None)
        hook("pre-staging")
        self.write_staging(state)
        hook("post-staging")
        self.promote()
        hook("post-rename")


def load_state(path: str | os.PathLike) -> SealedState:
    return StateStore(path).load()
