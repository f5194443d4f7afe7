"""The custodian: setup, freshness issuance, redemption and consumption.

Redemption and consumption run under one lock, so consuming a token,
marking a redeemed grant consumed and committing new state are linearizable.
Every decryption path takes an intermediate key ``u`` as input; nothing in
the persisted state alone reaches the state key.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from sudp import crypto_profile as cp
from sudp.crypto_profile import Digest, KeyRole, SymmetricKey
from sudp.custodian.events import EventLog
from sudp.custodian.freshness import DEFAULT_CAPACITY, DEFAULT_TTL, FreshnessPool
from sudp.custodian.results import CommitReceipt, DeliveryArtifact, UseResult
from sudp.custodian.state import (
    Entry, ProtectedState, SealedState, StateStore, normalize_stage,
)
from sudp.errors import (
    AlreadyConsumed, AuthenticationFailure, AuthorityRejected, CorruptState,
    DecryptFailure, EnrollmentMaterialMalformed, EnvironmentRejection, ExpiredOperation,
    InjectedCrash, MalformedScope, MissingOpt, MissingRecipient, NextSaltMismatch,
    NonConformantRelease, PersistenceFailure, PolicyDenied, RevokingLastCredential,
    SignatureInvalid, SudpError, UnknownCredential, UnknownOrExpiredFreshness, UnknownTarget,
    UnwrapFailure,
)
from sudp.grant import Grant, NextSalt
from sudp.operation import (
    NEXT_SALT_KEY, Operation, OpType, ShadowStore, compute_binding, execution_mapping, op_hash,
)

Policy = Callable[[bytes, Operation], bool]
KeyTap = Callable[[str, bytes], None]

SALT_LEN = 32


def allow_all(_cid: bytes, _o: Operation) -> bool:
    return True


@dataclass(frozen=True)
class SetupCredential:
    """A credential offered at setup. ``derive_u`` runs the gesture for a given salt."""

    cid: bytes
    public_key: bytes
    derive_u: Callable[[bytes], SymmetricKey]


@dataclass(eq=False)
class RedeemedGrant:
    o: Operation
    cid_star: bytes
    u_star: SymmetricKey
    opt: NextSalt | None
    rid: int
    consumed: bool = False


def _wipe(buf) -> None:
    if isinstance(buf, SymmetricKey):
        buf.zeroize()
    elif isinstance(buf, bytearray):
        buf[:] = bytes(len(buf))
    elif isinstance(buf, ProtectedState):
        buf.zeroize()


def _is_wiped(buf) -> bool:
    if isinstance(buf, SymmetricKey):
        return buf.zeroized
    if isinstance(buf, bytearray):
        return not any(buf)
    return True


class Custodian:
    def __init__(self, state_path: str | Path, *, name: str = "custodian", env=None,
                 clock: Callable[[], float] = time.time, policy: Policy = allow_all,
                 capacity: int = DEFAULT_CAPACITY, ttl: float = DEFAULT_TTL,
                 events: EventLog | None = None, shadows: ShadowStore | None = None):
        self.name = name
        self.store = StateStore(state_path)
        self.env = env
        self.clock = clock
        self.policy = policy
        self.pool = FreshnessPool(capacity, ttl)
        self.events = events if events is not None else EventLog()
        self.shadows = shadows if shadows is not None else ShadowStore()
        self.key_tap: KeyTap | None = None
        self.fault_crash_after: str | None = None
        self._lock = threading.RLock()
        self._rids = itertools.count(1)
        self._transients: list = []
        self._state: SealedState | None = self.store.load() if self.store.exists() else None

    # -- lifecycle of the object itself ------------------------------------------

    def reopen(self) -> "Custodian":
        """A fresh process over the same state file; outstanding tokens do not survive."""
        return Custodian(self.store.path, name=self.name, env=self.env, clock=self.clock,
                         policy=self.policy, capacity=self.pool.capacity, ttl=self.pool.ttl,
                         events=self.events, shadows=self.shadows)

    @property
    def state(self) -> SealedState:
        if self._state is None:
            raise CorruptState("custodian has no sealed state")
        return self._state

    def transient_buffers(self) -> list:
        """Buffers the last consumption held key material in (for zeroization checks)."""
        return list(self._transients)

    def transients_wiped(self) -> bool:
        return all(_is_wiped(b) for b in self._transients)

    def _tap(self, label: str, material) -> None:
        if self.key_tap is not None:
            self.key_tap(label, bytes(material))

    def _log(self, event: str, **fields) -> None:
        self.events.record(event, **fields)

    # -- Phase I ------------------------------------------------------------------

    def setup(self, secrets: dict[str, bytes], credentials: list[SetupCredential]) -> SealedState:
        if not credentials:
            raise EnrollmentMaterialMalformed("setup needs at least one credential")
        if self.store.exists():
            raise PersistenceFailure("state already initialised")
        if len({c.cid for c in credentials}) != len(credentials):
            raise EnrollmentMaterialMalformed("duplicate credential id")
        with self._lock:
            k = SymmetricKey(cp.csprng(cp.KEY_LEN), KeyRole.STATE)
            self._tap("K", k)
            peer: dict[bytes, SymmetricKey] = {}
            entries = []
            plaintext = bytearray()
            try:
                for cred in credentials:
                    eta = cp.csprng(SALT_LEN)
                    u = cred.derive_u(eta)
                    try:
                        w = cp.derive_wrap_key(u, eta, cred.cid)
                    finally:
                        u.zeroize()
                    self._tap("W", w)
                    peer[cred.cid] = w
                    entries.append(Entry(cred.cid, eta, cp.wrap(w, k)))
                m = ProtectedState({t: bytes(s) for t, s in secrets.items()}, peer)
                plaintext = m.encode()
                nonce, ct = cp.seal(k, plaintext, cp.state_ad(0))
                state = SealedState(nonce, ct, tuple(entries),
                                    tuple((c.cid, c.public_key) for c in credentials), 0)
                self.store.commit(state)
                self._state = state
            finally:
                k.zeroize()
                _wipe(plaintext)
                for w in peer.values():
                    w.zeroize()
            self._log("setup", ver=0, credentials=len(entries))
            return state

    # -- Phase II -----------------------------------------------------------------

    def issue_freshness(self, proposal: Operation | None = None) -> tuple[bytes, list[tuple[bytes, bytes]]]:
        now = self.clock()
        state = self.state
        r = self.pool.issue(now)
        self._log("issue", r=cp.hash(r).hex()[:16],
                  op_hash=None if proposal is None else op_hash(proposal).hex())
        return r, [(e.cid, e.eta) for e in state.entries]

    def redeem(self, g: Grant, now: float | None = None) -> RedeemedGrant:
        now = self.clock() if now is None else now
        with self._lock:
            rid = next(self._rids)
            tag = {"rid": rid, "r": cp.hash(g.r).hex()[:16], "cid": bytes(g.cid_star).hex()}

            def reject(exc: SudpError):
                self._log("redeem", verdict=exc.code, **tag)
                raise exc

            # 1. the token is spent before anything else is looked at
            if not self.pool.consume(g.r, now):
                reject(UnknownOrExpiredFreshness())
            # 2. recompute the binding from what was delivered
            beta = compute_binding(g.r, g.cid_star, g.o)
            # 3. signature under the registered key
            pk = self.state.reg_map.get(bytes(g.cid_star))
            if pk is None:
                reject(UnknownCredential())
            if not cp.verify(pk, beta.beta, g.sigma_star):
                reject(SignatureInvalid())
            self._log("verify", verdict="ok", beta=beta.beta.hex(), op_hash=op_hash(g.o).hex(), **tag)
            # 4. policy, including that this custodian is the named redeemer
            if g.o.redeemer != self.name or not self.policy(bytes(g.cid_star), g.o):
                reject(PolicyDenied())
            # 5. validity window
            if g.o.expiry <= now:
                reject(ExpiredOperation())
            opt = None
            if g.opt is not None:
                opt = NextSalt(SymmetricKey(bytes(g.opt.u_next), KeyRole.INTERMEDIATE), bytes(g.opt.eta_next))
            rho = RedeemedGrant(g.o, bytes(g.cid_star),
                                SymmetricKey(bytes(g.u_star), KeyRole.INTERMEDIATE), opt, rid)
            self._log("redeem", verdict="ok", **tag)
            return rho

    def submit(self, g: Grant, now: float | None = None):
        return self.consume(self.redeem(g, now))

    def submit_bytes(self, data: bytes, now: float | None = None):
        g = Grant.decode(data)
        try:
            return self.submit(g, now)
        finally:
            g.u_star.zeroize()
            if g.opt is not None:
                g.opt.u_next.zeroize()

    # -- Phase III ----------------------------------------------------------------

    def consume(self, rho: RedeemedGrant):
        with self._lock:
            if rho.consumed:
                self._log("consume", rid=rho.rid, verdict=AlreadyConsumed.code)
                raise AlreadyConsumed()
            rho.consumed = True
            transients: list = []
            try:
                result = self._consume(rho, transients)
            except SudpError as exc:
                self._log("consume", rid=rho.rid, verdict=exc.code)
                raise
            finally:
                transients.append(rho.u_star)
                if rho.opt is not None:
                    transients.append(rho.opt.u_next)
                for buf in transients:
                    _wipe(buf)
                self._transients = transients
            self._log("consume", rid=rho.rid, verdict="ok", op_type=rho.o.op_type.label)
            return result

    def _open_state(self, rho: RedeemedGrant, state: SealedState, transients: list):
        """Derive the acting wrap key, unwrap K and decrypt M."""
        entry = state.entry(rho.cid_star)
        if entry is None:
            raise UnwrapFailure("credential is no longer enrolled")
        w = cp.derive_wrap_key(rho.u_star, entry.eta, rho.cid_star)
        transients.append(w)
        k = cp.unwrap(w, entry.wrapped)
        transients.append(k)
        self._tap("K", k)
        try:
            plaintext = bytearray(cp.aead_open(k, state.nonce, state.ciphertext, cp.state_ad(state.ver)))
        except AuthenticationFailure:
            raise DecryptFailure() from None
        transients.append(plaintext)
        m = ProtectedState.decode(plaintext)
        transients.append(m)
        return k, m

    def _consume(self, rho: RedeemedGrant, transients: list):
        state = self.state
        _k, m = self._open_state(rho, state, transients)
        op = rho.o.op_type
        if op is OpType.USE:
            return self._consume_use(rho, m)
        if op is OpType.EXPORT:
            return self._consume_export(rho, m, transients)
        return self._consume_lifecycle(rho, m, state, transients)

    def _consume_use(self, rho: RedeemedGrant, m: ProtectedState) -> UseResult:
        o = rho.o
        secret = m.secrets.get(o.target)
        if secret is None:
            raise UnknownTarget()
        h = op_hash(o)
        call = execution_mapping(o, self.shadows)
        if self.env is None:
            raise EnvironmentRejection("no environment attached")
        try:
            response = self.env.execute(call.with_authority(secret))
        except (AuthorityRejected, UnknownTarget) as exc:
            raise EnvironmentRejection(exc.code) from None
        finally:
            self.shadows.prune(h)
        if bytes(secret) in response or bytes(secret).hex().encode() in response.lower():
            raise NonConformantRelease()
        return UseResult(bytes(response), h)

    def _consume_export(self, rho: RedeemedGrant, m: ProtectedState, transients: list) -> DeliveryArtifact:
        o = rho.o
        if o.recipient is None:
            raise MissingRecipient()
        secret = m.secrets.get(o.target)
        if secret is None:
            raise UnknownTarget()
        h = op_hash(o)
        k_d, ct_d = cp.encap(o.recipient, h)
        transients.append(k_d)
        nonce, delta = cp.seal(k_d, bytes(secret), cp.delivery_ad(h))
        return DeliveryArtifact(ct_d, nonce, delta)

    # -- III.3 --------------------------------------------------------------------

    def _crash_point(self, stage: str) -> None:
        if self.fault_crash_after is not None and normalize_stage(self.fault_crash_after) == stage:
            self.fault_crash_after = None
            self._log("crash", stage=stage)
            raise InjectedCrash(stage)

    def _consume_lifecycle(self, rho: RedeemedGrant, m: ProtectedState, state: SealedState,
                           transients: list) -> CommitReceipt:
        o, cstar = rho.o, rho.cid_star
        opt = rho.opt
        if opt is None:
            raise MissingOpt()
        scope = o.scope_map
        if len(opt.eta_next) != SALT_LEN or scope.get(NEXT_SALT_KEY) != opt.eta_next:
            raise NextSaltMismatch()

        secrets = dict(m.secrets)
        entries = {e.cid: e for e in state.entries}
        reg = state.reg_map
        peer = dict(m.peer)
        if set(peer) != set(entries):
            raise CorruptState("peer map does not match enrolled credentials")
        added: tuple[bytes, bytes, bytes, SymmetricKey] | None = None
        revoked: bytes | None = None

        if o.op_type is OpType.WRITE:
            if "value" not in scope:
                raise MalformedScope("write needs a value field")
            secrets[o.target] = scope["value"]
        elif o.op_type is OpType.ENROLL:
            added = self._enrollment_material(scope, entries)
            transients.append(added[3])
        elif o.op_type is OpType.REVOKE:
            revoked = scope.get("revoke_cid")
            if revoked is None:
                raise MalformedScope("revoke needs a revoke_cid field")
            if revoked not in entries:
                raise UnknownCredential()
            if len(entries) == 1:
                raise RevokingLastCredential()

        k_new = SymmetricKey(cp.csprng(cp.KEY_LEN), KeyRole.STATE)
        transients.append(k_new)
        w_new = cp.derive_wrap_key(opt.u_next, opt.eta_next, cstar)
        transients.append(w_new)
        self._tap("K", k_new)
        self._tap("W", w_new)

        new_entries = []
        for cid, e in entries.items():
            if cid == revoked:
                continue
            if cid == cstar:
                new_entries.append(Entry(cid, opt.eta_next, cp.wrap(w_new, k_new)))
            else:
                new_entries.append(Entry(cid, e.eta, cp.wrap(peer[cid], k_new)))
        new_peer = {c: w for c, w in peer.items() if c not in (revoked, cstar)}
        if cstar != revoked:
            new_peer[cstar] = w_new
        if revoked is not None:
            reg.pop(revoked)
        if added is not None:
            cid_p, pk_p, eta_p, u_p = added
            w_p = cp.derive_wrap_key(u_p, eta_p, cid_p)
            transients.append(w_p)
            self._tap("W", w_p)
            new_entries.append(Entry(cid_p, eta_p, cp.wrap(w_p, k_new)))
            new_peer[cid_p] = w_p
            reg[cid_p] = pk_p

        ver = state.ver + 1
        plaintext = ProtectedState(secrets, new_peer).encode()
        transients.append(plaintext)
        nonce, ct = cp.seal(k_new, plaintext, cp.state_ad(ver))
        new_state = SealedState(nonce, ct, tuple(new_entries), tuple(reg.items()), ver)

        self._crash_point("pre-staging")
        self.store.write_staging(new_state)
        self._crash_point("post-staging")
        self.store.promote()
        self._state = new_state
        self._log("commit", ver=ver, op_type=o.op_type.label)
        self._crash_point("post-rename")
        for buf in transients:
            _wipe(buf)
        self._crash_point("post-zeroize")
        return CommitReceipt(o.op_type, ver, op_hash(o))

    @staticmethod
    def _enrollment_material(scope: dict[str, bytes], entries: dict) -> tuple:
        try:
            cid = scope["enroll_cid"]
            pk = scope["enroll_pk"]
            eta = scope["enroll_eta"]
            u = scope["enroll_u"]
        except KeyError:
            raise EnrollmentMaterialMalformed("missing enrollment field") from None
        if not 1 <= len(cid) <= 64 or cid in entries:
            raise EnrollmentMaterialMalformed("bad or duplicate credential id")
        if len(eta) != SALT_LEN or len(u) != cp.KEY_LEN:
            raise EnrollmentMaterialMalformed("bad salt or key length")
        try:
            cp.load_point(pk)
        except Exception:
            raise EnrollmentMaterialMalformed("verification key is not a P-256 point") from None
        return cid, pk, eta, SymmetricKey(u, KeyRole.INTERMEDIATE)


def state_digest(state: SealedState) -> Digest:
    return cp.hash(state.encode())

