"""Small flow builders shared by the test modules."""

from __future__ import annotations

from sudp import crypto_profile as cp
from sudp.grant import Grant, HandoffTuple
from sudp.operation import HttpCallTemplate, Operation, OpType, compile_http


def use_op(w, target: str | None = None, path: str = "/v1/resource", body: bytes = b"") -> Operation:
    target = target or w.env.targets()[0]
    template = HttpCallTemplate("POST" if body else "GET", f"https://{w.host_of(target)}{path}", body=body)
    return compile_http(template, target, w.custodian.name, w.expiry(), w.custodian.shadows)


def export_op(w, recipient: bytes, target: str | None = None) -> Operation:
    return Operation.build(OpType.EXPORT, target or w.env.targets()[0], {}, redeemer=w.custodian.name,
                           expiry=w.expiry(), recipient=recipient)


def handoff(w, o: Operation) -> HandoffTuple:
    r, creds = w.custodian.issue_freshness(o)
    return HandoffTuple(o, r, tuple(creds))


def granted(w, o: Operation, cred: int = 0) -> Grant:
    """An honest grant for ``o`` from credential ``cred``."""
    return w.grant_for(handoff(w, o), cred)


def resign(w, g: Grant, o: Operation) -> Grant:
    """Keep everything from ``g`` except the operation (signature stays over the original)."""
    return Grant(o, g.r, g.cid_star, g.u_star, g.sigma_star, g.opt)


def random_cid() -> bytes:
    return cp.csprng(16)
