"""
Grants across devices
=====================

When the authorizer's device is not co-located with the custodian, the grant
travels over an ephemeral key agreement. The custodian signs its ephemeral
key under the token; a swapped key is caught before anything is sent.
"""

from sudp import crypto_profile as cp
from sudp.channel import XdOffer
from sudp.harness.world import World

w = World(credentials=1)
target = w.env.targets()[0]

# %%
# The same use through both channels gives the same response.
a = w.use(target)
b = w.use(target, channel="cross-device")
print("responses equal:", a.response == b.response)
envelope, r = w.last.envelope, w.last.grant.r

# %%
# A passive observer of the pipe sees offers and envelopes but no key material.
kinds = sorted({k for k, _ in w.xd_observed.items})
print("observed:", kinds, "canaries seen:", w.canaries.found_in(w.xd_observed.blob()))

# %%
# Substituting the offered key breaks the signature, so the authorizer sends nothing.
ch = w.channels["cross-device"]
ch.offer_hook = lambda off, r: XdOffer(cp.point_bytes(cp.generate_signing_key()), off.sig)
try:
    w.use(target, channel="cross-device")
except Exception as exc:
    print("substituted key:", exc.code)
ch.offer_hook = None

# %%
# A captured envelope cannot be replayed: its token is already spent.
try:
    w.responder.receive(envelope, r)
except Exception as exc:
    print("replayed envelope:", exc.code)
w.close()
