"""A complete deployment wired together, with flow helpers for each operation class.

``World`` owns one environment, one custodian, the authorizer with its
authenticator(s) and a requester. Every key the roles derive is reported to
a :class:`CanarySet` through their instrumentation taps, so a run can be
scanned afterwards for leaks.
"""

from __future__ import annotations

import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from sudp import crypto_profile as cp
from sudp.authenticator import Authenticator, DecisionSource
from sudp.authorizer import Authorizer
from sudp.channel import BytePipe, CrossDeviceChannel, InProcessChannel, XdResponder
from sudp.custodian import Custodian
from sudp.custodian.results import CommitReceipt, DeliveryArtifact, UseResult, open_delivery
from sudp.environment import Environment
from sudp.grant import Grant, HandoffTuple
from sudp.operation import HttpCallTemplate, Operation, OpType
from sudp.requester import HandoffHook, Requester

EPOCH_START = 1_700_000_000.0
DEFAULT_LIFETIME = 120
STATE_FILE = "sealed-state.cbor"


class ManualClock:
    def __init__(self, start: float = EPOCH_START):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


class CanarySet:
    """Every secret value, state key, wrap key, intermediate and PRF output seen so far."""

    def __init__(self):
        self.values: dict[bytes, str] = {}

    def add(self, label: str, value: bytes) -> None:
        value = bytes(value)
        if len(value) >= 16 and any(value):
            self.values.setdefault(value, label)

    def found_in(self, blob: bytes) -> list[str]:
        low = bytes(blob).lower()
        return sorted({label for v, label in self.values.items() if v in blob or v.hex().encode() in low})

    def labels(self) -> set[str]:
        return set(self.values.values())


@dataclass
class LastFlow:
    grant_bytes: bytes | None = None
    grant: Grant | None = None
    handoff: HandoffTuple | None = None
    envelope: bytes | None = None
    channel: str = "in-process"
    outcome: object = None


@dataclass
class Observed:
    items: list[tuple[str, bytes]] = field(default_factory=list)

    def __call__(self, kind: str, data: bytes) -> None:
        self.items.append((kind, bytes(data)))

    def blob(self) -> bytes:
        return b"".join(d for _, d in self.items)


class World:
    def __init__(self, state_dir: str | Path | None = None, *, credentials: int = 1,
                 targets: dict[str, dict] | None = None, responses: dict[str, str] | None = None,
                 seed: int = 0, decisions: DecisionSource | None = None, custodian_name: str = "custodian"):
        if credentials < 1:
            raise ValueError("at least one credential")
        self._tmp = None
        if state_dir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="sudp-")
            state_dir = self._tmp.name
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.rng = random.Random(seed)
        self.clock = ManualClock()
        self.canaries = CanarySet()

        self.env = Environment(responses)
        targets = targets or {"api": {"host": "api.example.com"}}
        for name, spec in targets.items():
            given = spec.get("secret")
            secret = self.env.register(name, spec["host"], bytes.fromhex(given) if given else None)
            self.canaries.add(f"secret:{name}", secret)

        self.authenticator = Authenticator("primary")
        self.cids: list[bytes] = [self.authenticator.enroll()[0] for _ in range(credentials)]
        self.authorizer = Authorizer(self.authenticator, decisions)
        self.authorizer.key_tap = self.canaries.add

        self.custodian = Custodian(self.state_dir / STATE_FILE, name=custodian_name, env=self.env,
                                   clock=self.clock)
        self.custodian.key_tap = self.canaries.add
        self.custodian.setup({t: self.env.owner_secret(t) for t in self.env.targets()},
                             [self.authorizer.setup_credential(c) for c in self.cids])
        self._identity_key = cp.generate_signing_key()
        self.xd_observed = Observed()
        self._wire()
        self.requester = Requester(self.custodian)
        self.last = LastFlow()

    def _wire(self) -> None:
        self.responder = XdResponder(self.custodian, self._identity_key)
        xd_pipe = BytePipe()
        xd_pipe.observers.append(self.xd_observed)
        self.channels = {
            "in-process": InProcessChannel(self.custodian),
            "cross-device": CrossDeviceChannel(self.responder, self.responder.identity, xd_pipe),
        }

    def close(self) -> None:
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- helpers ------------------------------------------------------------------

    @property
    def transcript(self):
        return self.requester.transcript

    def expiry(self, lifetime: int = DEFAULT_LIFETIME) -> int:
        return int(self.clock() + lifetime)

    def host_of(self, target: str) -> str:
        return self.env._account(target).host

    def default_template(self, target: str) -> HttpCallTemplate:
        return HttpCallTemplate("GET", f"https://{self.host_of(target)}/v1/resource")

    def cid(self, index: int) -> bytes:
        return self.cids[index]

    def enrolled(self) -> list[bytes]:
        return self.custodian.state.cids

    def reload(self) -> None:
        """Simulate a custodian restart from whatever is on disk."""
        self.custodian = self.custodian.reopen()
        self.custodian.key_tap = self.canaries.add
        self.requester.custodian = self.custodian
        self._wire()

    def leaks(self) -> list[str]:
        """Canary labels found anywhere in the requester's transcript."""
        hits: set[str] = set()
        for entry in self.transcript.entries:
            hits.update(self.canaries.found_in(entry.data))
        return sorted(hits)

    def _deliver(self, g: Grant, channel: str):
        self.last = LastFlow(grant_bytes=g.encode(), grant=g, channel=channel)
        ch = self.channels[channel]
        try:
            outcome = self.authorizer.send_grant(g, ch)
        finally:
            if channel == "cross-device":
                self.last.envelope = ch.last_envelope
        self.last.outcome = outcome
        return outcome

    def grant_for(self, h: HandoffTuple, cred: int, decisions: DecisionSource | None = None) -> Grant:
        return self.authorizer.review_and_grant(h, self.cid(cred), decisions)

    # -- delegated flows (through the requester) ----------------------------------------

    def use(self, target: str, cred: int = 0, template: HttpCallTemplate | None = None, *,
            channel: str = "in-process", handoff_hook: HandoffHook | None = None,
            lifetime: int = DEFAULT_LIFETIME) -> UseResult:
        template = template or self.default_template(target)
        o = self.requester.propose(template, target, self.expiry(lifetime))
        h = self.requester.request_grant(o)
        self.requester.handoff_hook = handoff_hook
        try:
            delivered = self.requester.relay_handoff(h)
        finally:
            self.requester.handoff_hook = None
        g = self.grant_for(delivered, cred)
        result = self._deliver(g, channel)
        self.last.handoff = delivered
        self.requester.receive(result.kind, result.encode())
        return result

    def export(self, target: str, recipient: cp.KemKeyPair, cred: int = 0, *,
               channel: str = "in-process") -> tuple[Operation, DeliveryArtifact]:
        o = Operation.build(OpType.EXPORT, target, {}, redeemer=self.custodian.name,
                            expiry=self.expiry(), recipient=recipient.public)
        self.requester.propose_operation(o)
        h = self.requester.relay_handoff(self.requester.request_grant(o))
        g = self.grant_for(h, cred)
        artifact = self._deliver(g, channel)
        self.requester.receive(artifact.kind, artifact.encode())
        return g.o, artifact

    @staticmethod
    def open_export(o: Operation, artifact: DeliveryArtifact, recipient: cp.KemKeyPair) -> bytes:
        return open_delivery(artifact, recipient, o)

    # -- lifecycle flows (the authorizer proposes directly) -------------------------------

    def lifecycle(self, op_type: OpType, target: str, scope: dict[str, bytes], cred: int, *,
                  channel: str = "in-process") -> CommitReceipt:
        o = Operation.build(op_type, target, scope, redeemer=self.custodian.name, expiry=self.expiry())
        r, creds = self.custodian.issue_freshness(o)
        g = self.grant_for(HandoffTuple(o, r, tuple(creds)), cred)
        return self._deliver(g, channel)

    def write(self, target: str, value: bytes, cred: int = 0, **kw) -> CommitReceipt:
        self.canaries.add(f"secret:{target}", value)
        return self.lifecycle(OpType.WRITE, target, {"value": bytes(value)}, cred, **kw)

    def rotate(self, cred: int = 0, target: str | None = None, **kw) -> CommitReceipt:
        return self.lifecycle(OpType.ROTATE, target or self.env.targets()[0], {}, cred, **kw)

    def enroll(self, cred: int = 0, newcomer: Authenticator | None = None, **kw) -> int:
        """Enroll a fresh credential (on ``newcomer`` or a new device) and return its index."""
        device = newcomer or Authenticator(f"device-{len(self.cids)}")
        cid, _pk = device.enroll()
        scope = self.authorizer.prepare_enrollment(device, cid)
        self.lifecycle(OpType.ENROLL, self.env.targets()[0], scope, cred, **kw)
        self.cids.append(cid)
        return len(self.cids) - 1

    def revoke(self, victim: int, cred: int = 0, **kw) -> CommitReceipt:
        return self.lifecycle(OpType.REVOKE, self.env.targets()[0], {"revoke_cid": self.cid(victim)}, cred, **kw)

    def env_rotate(self, target: str) -> int:
        epoch = self.env.rotate(target)
        self.canaries.add(f"secret:{target}", self.env.owner_secret(target))
        return epoch

    def replay_last(self):
        """Resubmit the last grant exactly as it was delivered."""
        if self.last.grant_bytes is None:
            raise RuntimeError("no grant to replay")
        if self.last.channel == "cross-device":
            return self.responder.receive(self.last.envelope, self.last.grant.r)
        return self.custodian.submit_bytes(self.last.grant_bytes)

    def unlocks(self, cred: int, target: str | None = None) -> bool:
        try:
            self.use(target or self.env.targets()[0], cred)
            return True
        except Exception:
            return False
