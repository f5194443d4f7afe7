"""
Stolen keys and the wrapping epoch
==================================

An attacker who captures one gesture's outputs can open the sealed state of
that epoch. Rotating the acting credential moves every entry to a fresh state
key, and the captured material stops working in both directions. A stolen
copy of the state file alone yields nothing.
"""

from sudp import crypto_profile as cp
from sudp.harness import attacks
from sudp.harness.breach import run_breach
from sudp.harness.world import World

w = World(credentials=2)
target = w.env.targets()[0]

# %%
# Capture credential 0's PRF output, intermediate key and wrap key.
cap = attacks.capture(w, 0)
before = w.custodian.state
stolen = attacks.open_with_wrap_key(before, cap.cid, cap.wrap_key())
print("capture opens this epoch:", stolen.secrets[target] == w.env.owner_secret(target))

# %%
# Rotate. The old wrap key no longer unwraps anything.
w.rotate(0)
try:
    cp.unwrap(cap.wrap_key(), w.custodian.state.entry(cap.cid).wrapped)
except Exception as exc:
    print("old wrap key after rotation:", exc.code)

# %%
# Rotation does not retire a secret that was already read. Rotating it at the
# environment and writing the new value does.
w.env_rotate(target)
w.write(target, w.env.owner_secret(target), 1)
print("new flow works:", w.unlocks(1))

# %%
# The storage-breach driver gets the whole state file and every custodian entry
# point, but no gestures.
report = run_breach(w)
print(f"{len(report.attempts)} attempts, {report.recovered} secrets recovered, "
      f"canaries in file: {report.canary_hits}")

# %%
# The documented weakness: a credential that never rotates keeps its wrap key
# valid across rotations by others, until it rotates itself.
rep = attacks.dormant_credential()
for what, ok in rep.checks:
    print(("ok  " if ok else "FAIL"), what)
w.close()
