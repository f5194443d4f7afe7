"""Storage-breach driver.

The attacker holds the complete persisted sealed state and can call any
custodian API, but cannot make any authenticator perform a gesture. The
driver walks every route that decrypts state or releases a secret and feeds
it everything derivable from public material. Success means a planted
secret came out.
"""

from __future__ import annotations

import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from sudp import crypto_profile as cp
from sudp.crypto_profile import KeyRole, SymmetricKey
from sudp.custodian import Custodian, load_state, open_delivery
from sudp.custodian.core import RedeemedGrant
from sudp.custodian.state import ProtectedState
from sudp.environment import Environment
from sudp.errors import SudpError
from sudp.grant import Grant, NextSalt
from sudp.operation import NEXT_SALT_KEY, Operation, OpType, compute_binding, op_hash


@dataclass
class BreachReport:
    recovered: int = 0
    canary_hits: list[str] = field(default_factory=list)
    attempts: list[tuple[str, str]] = field(default_factory=list)

    def note(self, route: str, outcome: str) -> None:
        self.attempts.append((route, outcome))


def _guesses(state) -> list[tuple[str, bytes]]:
    """Candidate ``u`` values an attacker can form from what is on disk."""
    out = [("random", cp.csprng(32)), ("zero", bytes(32)), ("state-digest", bytes(cp.hash(state.encode())))]
    for e in state.entries:
        out.append(("eta", e.eta))
        out.append(("cid-hash", bytes(cp.hash(e.cid))))
        out.append(("wrapped-prefix", bytes(e.wrapped)[:32]))
    for cid, pk in state.reg:
        out.append(("pk-hash", bytes(cp.hash(pk))))
    return out


def run_breach(world, trials: int = 4) -> BreachReport:
    """Attack a copy of ``world``'s state file; the live deployment is untouched."""
    secrets = {bytes(v) for v, label in world.canaries.values.items() if label.startswith("secret:")}
    report = BreachReport()
    src = world.custodian.store.path
    raw = src.read_bytes()
    report.canary_hits = world.canaries.found_in(raw)

    with tempfile.TemporaryDirectory(prefix="sudp-breach-") as tmp:
        path = Path(tmp) / "stolen.cbor"
        shutil.copyfile(src, path)
        state = load_state(path)
        # A mirror environment: anything it is made to accept counts as secret recovery.
        mirror = Environment()
        for name in world.env.targets():
            mirror.register(name, world.host_of(name), world.env.owner_secret(name))
        t = Custodian(path, name=world.custodian.name, env=mirror, clock=world.clock)
        attacker_kem = cp.KemKeyPair.generate()
        target = world.env.targets()[0]

        def got(secret: bytes | None) -> None:
            if secret is not None and bytes(secret) in secrets:
                report.recovered += 1

        # Route 1: raw primitives against each wrapped entry and the ciphertext.
        for label, guess in _guesses(state):
            for e in state.entries:
                for salt in (e.eta, bytes(32)):
                    try:
                        u = SymmetricKey(guess, KeyRole.INTERMEDIATE)
                        w = cp.derive_wrap_key(u, salt, e.cid)
                        k = cp.unwrap(w, e.wrapped)
                    except SudpError as exc:
                        report.note(f"unwrap[{label}]", exc.code)
                        continue
                    report.note(f"unwrap[{label}]", "unwrapped")
                    try:
                        m = ProtectedState.decode(cp.aead_open(k, state.nonce, state.ciphertext,
                                                               cp.state_ad(state.ver)))
                        for s in m.secrets.values():
                            got(s)
                    except SudpError as exc:
                        report.note("decrypt", exc.code)
            for ad_ver in (state.ver, 0):
                try:
                    cp.aead_open(SymmetricKey(guess, KeyRole.STATE), state.nonce, state.ciphertext,
                                 cp.state_ad(ad_ver))
                    report.note(f"direct-open[{label}]", "opened")
                    report.recovered += 1
                except SudpError as exc:
                    report.note(f"direct-open[{label}]", exc.code)

        # Route 2: consumption entry points with fabricated redeemed grants.
        rid = 10_000
        for label, guess in _guesses(state):
            for e in state.entries:
                eta_next = cp.csprng(32)
                ops = [
                    Operation.build(OpType.USE, target, {
                        "method": b"GET", "scheme": b"https", "host": world.host_of(target).encode(),
                        "path": b"/", "body_hash": bytes(cp.hash(b""))},
                        redeemer=t.name, expiry=int(world.clock() + 60)),
                    Operation.build(OpType.EXPORT, target, {}, redeemer=t.name,
                                    expiry=int(world.clock() + 60), recipient=attacker_kem.public),
                    Operation.build(OpType.ROTATE, target, {NEXT_SALT_KEY: eta_next}, redeemer=t.name,
                                    expiry=int(world.clock() + 60)),
                ]
                for o in ops:
                    rid += 1
                    if o.op_type is OpType.USE:
                        t.shadows.commit(op_hash(o), b"", o.expiry)
                    opt = NextSalt(SymmetricKey(cp.csprng(32), KeyRole.INTERMEDIATE), eta_next)
                    rho = RedeemedGrant(o, e.cid, SymmetricKey(guess, KeyRole.INTERMEDIATE), opt, rid)
                    try:
                        out = t.consume(rho)
                    except SudpError as exc:
                        report.note(f"consume-{o.op_type.label}[{label}]", exc.code)
                        continue
                    report.note(f"consume-{o.op_type.label}[{label}]", "released")
                    if o.op_type is OpType.EXPORT:
                        got(open_delivery(out, attacker_kem, o))
                    else:
                        report.recovered += 1

        # Route 3: the front door with forged signatures.
        for _ in range(trials):
            for e in state.entries:
                r, _creds = t.issue_freshness()
                o = Operation.build(OpType.EXPORT, target, {}, redeemer=t.name,
                                    expiry=int(world.clock() + 60), recipient=attacker_kem.public)
                beta = compute_binding(r, e.cid, o).beta
                forged = Grant(o, r, e.cid, SymmetricKey(cp.csprng(32), KeyRole.INTERMEDIATE),
                               cp.sign(cp.generate_signing_key(), beta))
                try:
                    out = t.submit(forged)
                    got(open_delivery(out, attacker_kem, o))
                    report.note("submit-forged", "released")
                except SudpError as exc:
                    report.note("submit-forged", exc.code)
        if mirror.executed:
            report.recovered += len(mirror.executed)
    return report
