"""
Delegated use without handing over the key
==========================================

A requester asks for an API call. The authorizer sees the exact call,
approves it with one gesture, and the custodian spends the API key on that
call once. The requester gets the response and nothing else.
"""

from sudp import crypto_profile as cp
from sudp.harness.world import World
from sudp.operation import HttpCallTemplate, render

w = World(credentials=1, targets={"github": {"host": "api.github.com"}},
          responses={"GET /user": "octocat"})

# %%
# The requester compiles a template. Authority headers are refused here, so the
# descriptor can only name the call, never carry a credential.
template = HttpCallTemplate("GET", "https://api.github.com/user")
o = w.requester.propose(template, "github", w.expiry())
print(render(o))

# %%
# Hand-off, gesture, grant, redemption. The world wires the roles together.
result = w.use("github", template=template)
print("response:", result.response.decode())

# %%
# Export to a recipient key: only that key, for that exact descriptor, opens it.
recipient = cp.KemKeyPair.generate()
o_exp, artifact = w.export("github", recipient)
print("recipient recovered the key:", w.open_export(o_exp, artifact, recipient) == w.env.owner_secret("github"))

# %%
# Every secret, state key, wrap key and derived intermediate was planted as a
# canary. None appears anywhere in what the requester saw.
print("transcript kinds:", sorted(w.transcript.kinds()))
print("canaries planted:", len(w.canaries.values), "leaked:", w.leaks())

# %%
# The grant was single use.
try:
    w.replay_last()
except Exception as exc:
    print("replay refused:", exc.code)
w.close()
