"""End-to-end acceptance criteria, one test per criterion.

Each test records a verdict line; the terminal summary prints all of them
(see ``conftest.py``). Trial counts and thresholds are fixed, not sampled.
"""

from __future__ import annotations

import contextlib
import io
import random
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest

from helpers import use_op
from sudp import crypto_profile as cp
from sudp.cli import EXIT_OK, main
from sudp.crypto_profile import KeyRole, SymmetricKey
from sudp.custodian import open_delivery
from sudp.custodian.core import RedeemedGrant
from sudp.custodian.state import COMMIT_STAGES
from sudp.environment import Environment
from sudp.errors import (
    AlreadyConsumed, AuthorityRejected, InjectedCrash, SudpError, UnknownOrExpiredFreshness,
)
from sudp.grant import Grant, HandoffTuple, NextSalt
from sudp.harness import attacks
from sudp.harness.breach import run_breach
from sudp.harness.scenario import bundled, bundled_scenario_paths, run_scenario
from sudp.harness.world import World
from sudp.operation import HttpCallTemplate, NativeCall, Operation, OpType, compile_http, op_hash
from sudp.vectors import check_all

RESULTS: dict[tuple[int, str], tuple[bool, str, str]] = {}

TRIALS = 1000
SMALL_TRIALS = 100


class Verdict:
    def __init__(self):
        self.detail = ""


@contextlib.contextmanager
def criterion(n: int, title: str, part: str = ""):
    v = Verdict()
    try:
        yield v
    except BaseException as exc:
        RESULTS[n, part] = (False, title, v.detail or f"{type(exc).__name__}: {exc}"[:160])
        raise
    RESULTS[n, part] = (True, title, v.detail)


def copy_key(u) -> SymmetricKey:
    return SymmetricKey(bytes(u), KeyRole.INTERMEDIATE)


def fresh_grant(w: World, o: Operation, cred: int = 0) -> Grant:
    r, creds = w.custodian.issue_freshness(o)
    return w.grant_for(HandoffTuple(o, r, tuple(creds)), cred)


def random_use(w: World, rng: random.Random) -> Operation:
    target = w.env.targets()[0]
    path = "/v1/" + "".join(rng.choice("abcdefghij/") for _ in range(rng.randint(1, 12)))
    if rng.random() < 0.5:
        t = HttpCallTemplate("GET", f"https://{w.host_of(target)}{path}")
    else:
        t = HttpCallTemplate("POST", f"https://{w.host_of(target)}{path}", body=rng.randbytes(rng.randint(1, 64)))
    return w.requester.propose(t, target, w.expiry())


def mutate(o: Operation, rng: random.Random) -> Operation:
    """A descriptor differing from ``o`` in one randomly chosen field."""
    choice = rng.randrange(7)
    if choice == 0:
        out = Operation.build(o.op_type, o.target + rng.choice("xyz"), o.scope, redeemer=o.redeemer,
                              expiry=o.expiry, recipient=o.recipient)
    elif choice == 1 and o.scope:
        k, v = rng.choice(o.scope)
        flipped = bytearray(v or b"\x00")
        flipped[rng.randrange(len(flipped))] ^= 1 << rng.randrange(8)
        out = o.with_scope(**{k: bytes(flipped)})
    elif choice == 2:
        out = o.with_scope(**{f"extra{rng.randrange(100)}": rng.randbytes(8)})
    elif choice == 3:
        delta = rng.choice([-1, 1]) * rng.randint(1, 10_000)
        out = Operation.build(o.op_type, o.target, o.scope, redeemer=o.redeemer,
                              expiry=max(0, o.expiry + delta),
                              recipient=o.recipient)
    elif choice == 4:
        out = Operation.build(o.op_type, o.target, o.scope, redeemer=o.redeemer + "-other", expiry=o.expiry,
                              recipient=o.recipient)
    elif choice == 5:
        other = rng.choice([t for t in (OpType.USE, OpType.WRITE, OpType.ROTATE, OpType.REVOKE) if t != o.op_type])
        out = Operation.build(other, o.target, o.scope, redeemer=o.redeemer, expiry=o.expiry,
                              recipient=o.recipient)
    else:
        out = Operation.build(o.op_type, o.target, o.scope, redeemer=o.redeemer, expiry=o.expiry,
                              recipient=b"\x04" + rng.randbytes(64))
    if op_hash(out) == op_hash(o):
        return mutate(o, rng)
    return out


def accepted(fn, *args) -> bool:
    try:
        fn(*args)
    except SudpError:
        return False
    return True


# 1 ----------------------------------------------------------------------------------


def test_01_honest_flow_completeness(tmp_path):
    with criterion(1, "honest flows complete for every operation class") as v:
        names = [p.stem for p in bundled_scenario_paths()]
        assert len(names) >= 6
        classes = set()
        slowest = 0.0
        for name in names:
            s = bundled(name)
            rep = run_scenario(s, tmp_path / name)
            assert rep["passed"], name
            assert rep["elapsed_ms"] < 1000, name
            slowest = max(slowest, rep["elapsed_ms"])
            classes |= {st["action"] for st in rep["steps"] if st["observed"] == "ok"}
        assert {"use", "export", "write", "rotate", "enroll", "revoke"} <= classes
        v.detail = f"{len(names)} scenarios, slowest {slowest:.0f} ms"


# 2 ----------------------------------------------------------------------------------

BATCH = 100


def _ob_trial(w, rng):
    o = random_use(w, rng)
    g = fresh_grant(w, o)
    o2 = mutate(o, rng)
    return accepted(w.custodian.submit, Grant(o2, g.r, g.cid_star, copy_key(g.u_star), g.sigma_star, g.opt))


def _av_trial(w, rng):
    o = random_use(w, rng)
    signer = rng.randrange(2)
    g = fresh_grant(w, o, signer)
    claimed = rng.choice([w.cid(1 - signer), cp.csprng(16)])
    return accepted(w.custodian.submit, Grant(o, g.r, claimed, copy_key(g.u_star), g.sigma_star, g.opt))


def _rr_trial(w, rng):
    o = random_use(w, rng)
    g = fresh_grant(w, o)
    data = g.encode()
    assert accepted(w.custodian.submit_bytes, data), "honest first redemption"
    if rng.random() < 0.3:
        w.clock.advance(rng.randint(1, 30))
    if rng.random() < 0.3:
        w.use(w.env.targets()[0])
    return accepted(w.custodian.submit_bytes, data)


@pytest.mark.parametrize("prop, trial", [("OB", _ob_trial), ("AV", _av_trial), ("RR", _rr_trial)])
def test_02_authorization_binding_replay(prop, trial):
    with criterion(2, f"{prop}: {TRIALS} adversarial trials, 0 accepted, honest controls accepted", prop) as v:
        rng = random.Random(f"criterion-2-{prop}")
        w = World(credentials=2)
        try:
            bad = controls = 0
            for i in range(TRIALS):
                bad += trial(w, rng)
                if (i + 1) % BATCH == 0:
                    assert accepted(w.custodian.submit, fresh_grant(w, random_use(w, rng))), "honest control"
                    controls += 1
            assert bad == 0
            v.detail = f"0/{TRIALS} accepted, {controls}/{controls} controls accepted"
        finally:
            w.close()


# 3 ----------------------------------------------------------------------------------


def test_03_requester_transcript_has_no_canaries(tmp_path):
    with criterion(3, "no planted canary in any requester transcript") as v:
        kinds: set[str] = set()
        entries = 0
        for p in bundled_scenario_paths():
            rep = run_scenario(bundled(p.stem), tmp_path / p.stem)
            assert rep["leaked_canaries"] == [], p.stem
            assert rep["invariants"]["requester_non_exposure"]
            kinds |= set(rep["canaries_planted"])
            entries += rep["transcript_entries"]
        assert {"secret", "K", "W", "u", "y"} <= kinds
        v.detail = f"{entries} transcript entries scanned, canary kinds {sorted(kinds)}"


# 4 ----------------------------------------------------------------------------------


def test_04_storage_breach_recovers_nothing():
    with criterion(4, "storage breach recovers 0 secrets; sealed state has 0 canaries") as v:
        with World(credentials=3) as w:
            target = w.env.targets()[0]
            w.use(target)
            w.rotate(1)
            w.env_rotate(target)
            w.write(target, w.env.owner_secret(target), 2)
            w.export(target, cp.KemKeyPair.generate())
            br = run_breach(w)
            assert br.attempts
            assert br.recovered == 0
            assert br.canary_hits == []
            assert w.canaries.found_in(w.custodian.store.path.read_bytes()) == []
            v.detail = f"{len(br.attempts)} breach attempts, 0 recovered"


# 5 ----------------------------------------------------------------------------------


def test_05_export_confidentiality_and_binding():
    with criterion(5, "exports open only under the bound key and operation") as v:
        rng = random.Random("criterion-5")
        with World(credentials=1) as w:
            target = w.env.targets()[0]
            previous = None
            wrong_key = wrong_op = 0
            for _ in range(SMALL_TRIALS):
                kp = cp.KemKeyPair.generate()
                o, pi = w.export(target, kp)
                assert open_delivery(pi, kp, o) == w.env.owner_secret(target)
                wrong_key += accepted(open_delivery, pi, cp.KemKeyPair.generate(), o)
                others = [mutate(o, rng)] + ([previous] if previous is not None else [])
                wrong_op += sum(accepted(open_delivery, pi, kp, other) for other in others)
                previous = o
                w.clock.advance(1)
            assert wrong_key == 0 and wrong_op == 0
            v.detail = f"{SMALL_TRIALS} honest opens ok; 0 wrong-key and 0 wrong-op opens"


# 6 ----------------------------------------------------------------------------------


def test_06_wrapping_epoch_isolation():
    with criterion(6, "captured keys do not cross a rotation in either direction") as v:
        rng = random.Random("criterion-6")
        with World(credentials=2) as w:
            fwd = back = 0
            for _ in range(SMALL_TRIALS):
                i = rng.randrange(2)
                cap = attacks.capture(w, i)
                old = w.custodian.state
                assert attacks.open_with_wrap_key(old, cap.cid, cap.wrap_key()) is not None
                w.rotate(i)
                new = w.custodian.state
                entry = new.entry(cap.cid)
                # pre-rotation material against post-rotation state
                fwd += accepted(cp.unwrap, cap.wrap_key(), entry.wrapped)
                rederived = cp.derive_wrap_key(cp.derive_user_key(SymmetricKey(cap.y, KeyRole.PRF_OUTPUT), cap.cid),
                                               entry.eta, cap.cid)
                fwd += accepted(cp.unwrap, rederived, entry.wrapped)
                fwd += accepted(cp.unwrap, cp.derive_wrap_key(cap.user_key(), entry.eta, cap.cid), entry.wrapped)
                rho = RedeemedGrant(random_use(w, rng), cap.cid, cap.user_key(), None, rid=-1)
                executed = len(w.env.executed)
                fwd += accepted(w.custodian.consume, rho)
                assert len(w.env.executed) == executed
                # post-rotation material against retained pre-rotation state
                post = attacks.capture(w, i)
                back += accepted(cp.unwrap, post.wrap_key(), old.entry(cap.cid).wrapped)
                k_new = cp.unwrap(post.wrap_key(), entry.wrapped)
                back += accepted(cp.aead_open, k_new, old.nonce, old.ciphertext, cp.state_ad(old.ver))
            assert fwd == 0 and back == 0
            assert w.unlocks(0) and w.unlocks(1)
            v.detail = f"{SMALL_TRIALS} rotations; 0 forward and 0 backward openings"


# 7 ----------------------------------------------------------------------------------


def test_07_rotation_retires_authority_at_environment():
    with criterion(7, "after env rotation and write the retired secret is rejected, both ways") as v:
        with World(credentials=1) as w:
            target = w.env.targets()[0]
            host = w.host_of(target)
            call = NativeCall("GET", "https", host, "/v1/resource", b"")
            old_secret = w.env.owner_secret(target)
            old_sigma = w.custodian.store.path.read_bytes()
            w.env_rotate(target)
            new_secret = w.env.owner_secret(target)
            with pytest.raises(SudpError) as exc:
                w.use(target)
            assert exc.value.code == "environment-rejection"
            w.write(target, new_secret)
            assert w.unlocks(0)
            with pytest.raises(AuthorityRejected):
                w.env.execute(call.with_authority(old_secret))
            # converse 1: the sealed state from before the write, restored to disk
            new_sigma = w.custodian.store.path.read_bytes()
            w.custodian.store.path.write_bytes(old_sigma)
            w.reload()
            with pytest.raises(SudpError) as exc:
                w.use(target)
            assert exc.value.code == "environment-rejection"
            w.custodian.store.path.write_bytes(new_sigma)
            w.reload()
            assert w.unlocks(0)
            # converse 2: the new secret against an environment restored to the old epoch
            restored = Environment()
            restored.register(target, host, old_secret)
            with pytest.raises(AuthorityRejected):
                restored.execute(call.with_authority(new_secret))
            v.detail = "old secret rejected; restored state rejected; new secret rejected by old epoch"


# 8 ----------------------------------------------------------------------------------


def test_08_documented_limitations_then_closure():
    with criterion(8, "dormant-credential and peer-map weaknesses shown, then closed by rotation") as v:
        for script in (attacks.dormant_credential, attacks.peer_map_capture):
            rep = script()
            assert rep.passed, rep.checks
            limitation = [ok for what, ok in rep.checks if what.startswith("limitation:")]
            closure = [what for what, ok in rep.checks if not what.startswith("limitation:")]
            assert limitation and all(limitation), f"{rep.name}: weakness not reproduced"
            assert closure, f"{rep.name}: closure not asserted"
        v.detail = "both weaknesses reproduced and both closed"


# 9 ----------------------------------------------------------------------------------

CRASH_OPS = ("rotate", "write", "enroll", "revoke")


def _crash_op(w: World, op: str):
    target = w.env.targets()[0]
    if op == "rotate":
        return w.rotate(0)
    if op == "write":
        return w.write(target, w.env.owner_secret(target))
    if op == "enroll":
        return w.enroll(0)
    return w.revoke(2, 0)


def test_09_crash_matrix(tmp_path):
    with criterion(9, "a crash at any commit stage reloads to an unlockable state") as v:
        assert COMMIT_STAGES == ("pre-staging", "post-staging", "post-rename", "post-zeroize")
        cells = 0
        for stage in COMMIT_STAGES:
            for op in CRASH_OPS:
                d = tmp_path / f"{stage}-{op}"
                with World(d, credentials=3) as w:
                    before = w.custodian.state.ver
                    w.custodian.fault_crash_after = stage
                    with pytest.raises(InjectedCrash):
                        _crash_op(w, op)
                    w.reload()
                    committed = stage in ("post-rename", "post-zeroize")
                    assert w.custodian.state.ver == before + int(committed), (stage, op)
                    assert sorted(p.name for p in d.iterdir()) == ["sealed-state.cbor"], (stage, op)
                    assert any(w.unlocks(i) for i in range(3)), (stage, op)
                    survivors = [0, 1] if (op == "revoke" and committed) else [0, 1, 2]
                    assert all(w.unlocks(i) for i in survivors), (stage, op)
                cells += 1
        v.detail = f"{cells} crash cells, 0 orphaned states"


# 10 ---------------------------------------------------------------------------------


def _abort_cases(w: World, rng: random.Random):
    """Yield (expected error code, grant) pairs whose consumption must fail."""
    target = w.env.targets()[0]
    g = fresh_grant(w, random_use(w, rng))
    yield "unwrap-failure", Grant(g.o, g.r, g.cid_star, SymmetricKey(cp.csprng(32), KeyRole.INTERMEDIATE), g.sigma_star)
    o = compile_http(HttpCallTemplate("GET", f"https://{w.host_of(target)}/v1/x"), "nowhere",
                     w.custodian.name, w.expiry(), w.custodian.shadows)
    yield "unknown-target", fresh_grant(w, o)
    o = random_use(w, rng)
    w.custodian.shadows.prune(op_hash(o))
    yield "missing-shadow", fresh_grant(w, o)
    rot = Operation.build(OpType.ROTATE, target, {}, redeemer=w.custodian.name, expiry=w.expiry())
    g = fresh_grant(w, rot)
    yield "missing-opt", Grant(g.o, g.r, g.cid_star, copy_key(g.u_star), g.sigma_star, None)
    g = fresh_grant(w, rot)
    yield "next-salt-mismatch", Grant(g.o, g.r, g.cid_star, copy_key(g.u_star), g.sigma_star,
                                     NextSalt(copy_key(g.opt.u_next), cp.csprng(32)))
    wr = Operation.build(OpType.WRITE, target, {}, redeemer=w.custodian.name, expiry=w.expiry())
    yield "malformed-scope", fresh_grant(w, wr)
    w.custodian.fault_crash_after = rng.choice(COMMIT_STAGES[:2])
    yield "injected-crash", fresh_grant(w, rot)
    w.custodian.fault_crash_after = None


def test_10_consumption_on_abort():
    with criterion(10, "every failed consumption spends the grant; resubmission never executes") as v:
        rng = random.Random("criterion-10")
        kinds: dict[str, int] = {}
        with World(credentials=2) as w:
            for _ in range(20):
                for label, g in _abort_cases(w, rng):
                    data = g.encode()
                    executed = len(w.env.executed)
                    rho = w.custodian.redeem(g)
                    with pytest.raises(SudpError) as exc:
                        w.custodian.consume(rho)
                    assert exc.value.code == label
                    assert rho.consumed, label
                    assert not w.custodian.pool.is_outstanding(g.r, w.clock()), label
                    with pytest.raises(AlreadyConsumed):
                        w.custodian.consume(rho)
                    with pytest.raises(UnknownOrExpiredFreshness):
                        w.custodian.submit_bytes(data)
                    assert len(w.env.executed) == executed, label
                    kinds[label] = kinds.get(label, 0) + 1
                if w.custodian.state.ver and rng.random() < 0.2:
                    w.reload()
            # an environment that has moved on rejects, and that failure spends the grant too
            w.env_rotate(w.env.targets()[0])
            g = fresh_grant(w, random_use(w, rng))
            rho = w.custodian.redeem(g)
            with pytest.raises(SudpError) as exc:
                w.custodian.consume(rho)
            assert exc.value.code == "environment-rejection"
            assert rho.consumed
            with pytest.raises(UnknownOrExpiredFreshness):
                w.custodian.submit_bytes(g.encode())
            kinds["environment-rejection"] = 1
        v.detail = f"{sum(kinds.values())} aborted consumptions across {len(kinds)} failure kinds"


# 11 ---------------------------------------------------------------------------------


def test_11_primitive_conformance():
    with criterion(11, "primitive vectors match bit-exactly via the CLI") as v:
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            assert main(["vectors"]) == EXIT_OK
        results = check_all()
        groups = {r.name.split(" ", 1)[0].split("/", 1)[0] for r in results}
        assert all(r.ok for r in results)
        assert f"{len(results)}/{len(results)} vectors match" in out.getvalue()
        v.detail = f"{len(results)}/{len(results)} vectors match ({', '.join(sorted(groups))})"


# 12 ---------------------------------------------------------------------------------


def _tap_opened(w: World) -> list[bytes]:
    """Record the encoding of every grant the cross-device responder opens."""
    seen: list[bytes] = []
    inner = w.responder.open

    def open_and_record(envelope, r):
        g = inner(envelope, r)
        seen.append(g.encode())
        return g

    w.responder.open = open_and_record
    return seen


def _deliver_both(w: World, rng: random.Random, make_op, opened: list[bytes]) -> list:
    """Deliver fresh grants for ``make_op()`` in-process and cross-device."""
    out = []
    for channel in ("in-process", "cross-device"):
        g = fresh_grant(w, make_op(), rng.randrange(2))
        sent = g.encode()
        out.append(w._deliver(g, channel))
        if channel == "cross-device":
            assert opened[-1] == sent
    return out


def _transparency_trial(w: World, rng: random.Random, opened: list[bytes]) -> None:
    """The same descriptor through both channels must yield the same outcome."""
    target = w.env.targets()[0]
    kind = rng.choice(["use", "export", "rotate"])
    if kind == "use":
        path = "/v1/" + "".join(rng.choice("abc/") for _ in range(rng.randint(1, 8)))
        body = rng.randbytes(rng.randint(0, 16))
        n = len(w.env.executed)
        a, b = _deliver_both(w, rng, lambda: use_op(w, target, path, body), opened)
        assert a.encode() == b.encode()
        assert len(w.env.executed) == n + 2 and w.env.executed[-1] == w.env.executed[-2]
    elif kind == "export":
        kp = cp.KemKeyPair.generate()
        o = Operation.build(OpType.EXPORT, target, {}, redeemer=w.custodian.name, expiry=w.expiry(),
                            recipient=kp.public)
        a, b = _deliver_both(w, rng, lambda: o, opened)
        assert open_delivery(a, kp, o) == open_delivery(b, kp, o) == w.env.owner_secret(target)
    else:
        before = w.custodian.state.ver
        rot = lambda: Operation.build(OpType.ROTATE, target, {}, redeemer=w.custodian.name, expiry=w.expiry())
        a, b = _deliver_both(w, rng, rot, opened)
        assert (a.op_type, a.ver) == (OpType.ROTATE, before + 1)
        assert (b.op_type, b.ver) == (OpType.ROTATE, before + 2)
        assert w.unlocks(0) and w.unlocks(1)


def test_12_cross_device_transport():
    with criterion(12, "cross-device delivery is transparent; MITM and envelope replay rejected") as v:
        rng = random.Random("criterion-12")
        with World(credentials=2) as w:
            opened = _tap_opened(w)
            for _ in range(SMALL_TRIALS):
                _transparency_trial(w, rng, opened)
            assert len(opened) == SMALL_TRIALS
            assert w.canaries.found_in(w.xd_observed.blob()) == []
        mitm = replayed = 0
        for _ in range(SMALL_TRIALS):
            mitm += attacks.mitm_pk_substitution().passed
            replayed += attacks.envelope_replay().passed
        assert mitm == SMALL_TRIALS and replayed == SMALL_TRIALS
        v.detail = (f"{SMALL_TRIALS} transparency trials equal; MITM {mitm}/{SMALL_TRIALS}, "
                    f"envelope replay {replayed}/{SMALL_TRIALS} rejected")


# 13 ---------------------------------------------------------------------------------

THREADS = 64
REPETITIONS = 100


def test_13_concurrent_redemption_single_winner():
    with criterion(13, "64 concurrent redemptions of one token yield exactly one success") as v:
        rng = random.Random("criterion-13")
        with World(credentials=1) as w, ThreadPoolExecutor(THREADS) as pool:
            for rep in range(REPETITIONS):
                data = fresh_grant(w, random_use(w, rng)).encode()
                barrier = threading.Barrier(THREADS)
                executed = len(w.env.executed)

                def attempt(_):
                    barrier.wait()
                    return accepted(w.custodian.submit_bytes, data)

                wins = sum(pool.map(attempt, range(THREADS)))
                assert wins == 1, f"repetition {rep}: {wins} successes"
                assert len(w.env.executed) == executed + 1
        v.detail = f"{REPETITIONS}/{REPETITIONS} repetitions with exactly 1 of {THREADS} succeeding"
