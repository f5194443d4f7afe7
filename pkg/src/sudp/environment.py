"""Simulated authority-gated environment.

Each registered target is served at a host and accepts exactly one current
secret. Rotation installs a fresh secret and revokes every prior one.
Responses are a deterministic function of the request so runs reproduce.
"""

from __future__ import annotations

import hmac
import json
import threading
from dataclasses import dataclass, field

from sudp import crypto_profile as cp
from sudp.errors import AuthorityRejected, UnknownTarget
from sudp.operation import NativeCall


@dataclass
class _Account:
    host: str
    secret: bytes
    epoch: int = 0
    revoked: list[bytes] = field(default_factory=list)


class Environment:
    def __init__(self, responses: dict[str, str] | None = None):
        self._targets: dict[str, _Account] = {}
        self._lock = threading.Lock()
        self.responses = dict(responses or {})
        self.executed: list[tuple[str, str, str, str]] = []

    @classmethod
    def from_fixture(cls, fixture: dict) -> "Environment":
        """Build from ``{"targets": {name: {"host": ..., "secret": hex?}}, "responses": {...}}``."""
        env = cls(fixture.get("responses"))
        for name, spec in fixture.get("targets", {}).items():
            secret = spec.get("secret")
            env.register(name, spec["host"], bytes.fromhex(secret) if secret else None)
        return env

    def register(self, target: str, host: str, secret: bytes | None = None) -> bytes:
        secret = secret if secret is not None else cp.csprng(32)
        with self._lock:
            self._targets[target] = _Account(host.lower(), bytes(secret))
        return secret

    def targets(self) -> list[str]:
        return list(self._targets)

    def _account(self, target: str) -> _Account:
        try:
            return self._targets[target]
        except KeyError:
            raise UnknownTarget() from None

    def epoch(self, target: str) -> int:
        return self._account(target).epoch

    def owner_secret(self, target: str) -> bytes:
        """The current secret as shown to the account owner (never to the requester)."""
        return self._account(target).secret

    def rotate(self, target: str) -> int:
        with self._lock:
            acct = self._account(target)
            acct.revoked.append(acct.secret)
            acct.secret = cp.csprng(32)
            acct.epoch += 1
            return acct.epoch

    def accepts(self, target: str, secret: bytes | None) -> bool:
        acct = self._account(target)
        if not secret:
            return False
        return hmac.compare_digest(acct.secret, bytes(secret))

    def execute(self, call: NativeCall) -> bytes:
        with self._lock:
            matches = [(n, a) for n, a in self._targets.items() if a.host == call.host]
            if not matches:
                raise UnknownTarget("no target served at this host")
            for name, acct in matches:
                if call.authority and hmac.compare_digest(acct.secret, call.authority):
                    break
            else:
                raise AuthorityRejected()
            self.executed.append((name, call.method, call.host, call.path))
            return self._respond(name, acct, call)

    def _respond(self, name: str, acct: _Account, call: NativeCall) -> bytes:
        canned = self.responses.get(f"{call.method} {call.path}")
        doc = {
            "status": 200,
            "target": name,
            "method": call.method,
            "path": call.path,
            "body_sha256": cp.hash(call.body).hex(),
            "epoch": acct.epoch,
        }
        if canned is not None:
            doc["data"] = canned
        return json.dumps(doc, sort_keys=True).encode()
