import pytest

from helpers import handoff, use_op
from sudp import crypto_profile as cp
from sudp.authenticator import DECLINE, scripted
from sudp.errors import GestureDeclined, UnknownCredentialInHandoff
from sudp.grant import Grant, HandoffTuple
from sudp.operation import NEXT_SALT_KEY, Operation, OpType, compute_binding, op_hash, render


def test_use_grant_has_no_rotation_material(world):
    h = handoff(world, use_op(world))
    g = world.authorizer.review_and_grant(h, world.cid(0))
    assert g.opt is None and g.o == h.o
    pk = world.custodian.state.reg_map[world.cid(0)]
    assert cp.verify(pk, compute_binding(h.r, world.cid(0), h.o).beta, g.sigma_star)


def test_rotation_grant_commits_eta_next_before_signing(world):
    o = Operation.build(OpType.ROTATE, "api", {}, redeemer="custodian", expiry=world.expiry())
    seen = []
    h = handoff(world, o)
    g = world.authorizer.review_and_grant(h, world.cid(1), lambda text: (seen.append(text), scripted([True])(text))[1])
    assert g.opt is not None
    assert g.o.scope_map[NEXT_SALT_KEY] == g.opt.eta_next
    assert seen == [render(g.o)]
    pk = world.custodian.state.reg_map[world.cid(1)]
    assert cp.verify(pk, compute_binding(h.r, world.cid(1), g.o).beta, g.sigma_star)


def test_decline_emits_nothing(world):
    h = handoff(world, use_op(world))
    with pytest.raises(GestureDeclined):
        world.authorizer.review_and_grant(h, world.cid(0), lambda _t: DECLINE)
    assert "grant" not in [e["event"] for e in world.authorizer.events.records]


def test_chosen_credential_must_be_in_handoff(world):
    h = handoff(world, use_op(world))
    with pytest.raises(UnknownCredentialInHandoff):
        world.authorizer.review_and_grant(HandoffTuple(h.o, h.r, h.creds[:1]), world.cid(1))


def test_gesture_precedes_grant_for_exactly_the_rendered_operation(world):
    world.use("api")
    world.rotate(0)
    ev = world.authorizer.events.records
    for i, e in enumerate(ev):
        if e["event"] == "grant":
            prior = [p for p in ev[:i] if p["event"] == "decision" and p["op_hash"] == e["op_hash"]]
            assert prior and prior[-1]["approve"] is True
            assert any(p["event"] == "rendered" and p["op_hash"] == e["op_hash"] for p in ev[:i])


def test_custodian_recomputes_the_signed_binding(world):
    h = handoff(world, use_op(world))
    g = world.authorizer.review_and_grant(h, world.cid(0))
    signed = [e["beta"] for e in world.authorizer.events.records if e["event"] == "grant"][-1]
    world.custodian.submit(g)
    verified = [e["beta"] for e in world.custodian.events.records if e["event"] == "verify"][-1]
    assert signed == verified == compute_binding(h.r, g.cid_star, g.o).beta.hex()


def test_grant_encoding_round_trip(world):
    g = world.authorizer.review_and_grant(handoff(world, use_op(world)), world.cid(0))
    back = Grant.decode(g.encode())
    assert op_hash(back.o) == op_hash(g.o) and back.u_star == g.u_star and back.sigma_star == g.sigma_star


def test_handoff_encoding_round_trip(world):
    h = handoff(world, use_op(world))
    assert HandoffTuple.decode(h.encode()) == h
