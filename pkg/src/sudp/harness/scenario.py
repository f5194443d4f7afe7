"""Scenario files and their runner.

A scenario is JSON::

    {
      "name": "honest-delegated-use",
      "description": "...",
      "seed": 1,
      "setup": {
        "credentials": 2,
        "targets": {"github": {"host": "api.github.com"}},
        "responses": {"GET /user": "octocat"}
      },
      "steps": [
        {"action": "use", "target": "github", "credential": 0,
         "method": "GET", "url": "https://api.github.com/user", "expect": "ok"},
        {"action": "rotate", "credential": 0, "crash_after": "staging-write",
         "expect": "injected-crash"},
        {"action": "reload", "expect": "ok"}
      ]
    }

``expect`` is ``"ok"`` or an error code from :mod:`sudp.errors`. Actions are
listed in :data:`ACTIONS`. A step's ``crash_after`` (or ``crash-after``)
names a commit stage at which the custodian is made to fail. ``race``
submits one grant from many threads at once and passes only if exactly one
redemption wins; it is the one multi-threaded step.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from sudp import crypto_profile as cp
from sudp.custodian.state import COMMIT_STAGES, normalize_stage
from sudp.errors import ScenarioParseError, SudpError, all_error_codes
from sudp.grant import HandoffTuple
from sudp.harness.world import LastFlow, World
from sudp.operation import HttpCallTemplate

ACTIONS = (
    "use", "export", "write", "rotate", "enroll", "revoke", "env_rotate", "replay",
    "reload", "advance_clock", "unlock", "breach", "check_no_leak", "race",
)

# What the requester is allowed to see, by transcript entry kind.
REQUESTER_VIEW = frozenset({
    "proposal-template", "proposal", "freshness", "handoff", "use-result", "delivery-artifact",
})


@dataclass
class Step:
    index: int
    action: str
    expect: str
    params: dict = field(default_factory=dict)
    crash_after: str | None = None


@dataclass
class Scenario:
    name: str
    description: str
    seed: int
    setup: dict
    steps: list[Step]


def _fail(msg: str):
    raise ScenarioParseError(msg)


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        _fail("scenario must be a JSON object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        _fail("scenario needs a name")
    setup = doc.get("setup", {})
    if not isinstance(setup, dict):
        _fail("setup must be an object")
    creds = setup.get("credentials", 1)
    if not isinstance(creds, int) or creds < 1:
        _fail("setup.credentials must be a positive integer")
    targets = setup.get("targets", {"api": {"host": "api.example.com"}})
    if not isinstance(targets, dict) or not targets:
        _fail("setup.targets must be a non-empty object")
    for t, spec in targets.items():
        if not isinstance(spec, dict) or "host" not in spec:
            _fail(f"target {t!r} needs a host")
    codes = set(all_error_codes()) | {"ok"}
    raw_steps = doc.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        _fail("scenario needs a non-empty steps list")
    steps = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, dict):
            _fail(f"step {i} must be an object")
        params = dict(raw)
        action = params.pop("action", None)
        if action not in ACTIONS:
            _fail(f"step {i}: unknown action {action!r}")
        expect = params.pop("expect", "ok")
        if expect not in codes:
            _fail(f"step {i}: unknown expected verdict {expect!r}")
        crash = params.pop("crash_after", params.pop("crash-after", None))
        if crash is not None:
            try:
                crash = normalize_stage(crash)
            except ValueError:
                _fail(f"step {i}: crash stage must be one of {', '.join(COMMIT_STAGES)}")
        steps.append(Step(i, action, expect, params, crash))
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        _fail("seed must be an integer")
    return Scenario(name, str(doc.get("description", "")), seed,
                    {"credentials": creds, "targets": targets, "responses": setup.get("responses", {})},
                    steps)


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioParseError(f"cannot read scenario: {exc}") from None
    return parse_scenario(doc)


def bundled_scenario_paths() -> list[Path]:
    root = resources.files("sudp.harness") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def bundled(name: str) -> Scenario:
    for p in bundled_scenario_paths():
        if p.stem == name or p.name == name:
            return load_scenario(p)
    raise ScenarioParseError(f"no bundled scenario named {name!r}")


def build_world(s: Scenario, state_dir: str | Path | None = None) -> World:
    return World(state_dir, credentials=s.setup["credentials"], targets=s.setup["targets"],
                 responses=s.setup["responses"], seed=s.seed)


def _mutate_path(h: HandoffTuple) -> HandoffTuple:
    # The authorizer will render and sign this version; no body was frozen for it.
    return HandoffTuple(h.o.with_scope(path=h.o.scope_map["path"] + b"/../admin"), h.r, h.creds)


RELAY_HOOKS = {"honest": None, "mutate-path": _mutate_path}


class _Runner:
    def __init__(self, world: World, scenario: Scenario):
        self.w = world
        self.s = scenario
        self.recipients: dict[str, cp.KemKeyPair] = {}

    def _target(self, p: dict) -> str:
        return p.get("target", self.w.env.targets()[0])

    def do(self, step: Step) -> dict:
        p = step.params
        w = self.w
        cred = p.get("credential", 0)
        detail: dict = {}
        if step.action == "use":
            target = self._target(p)
            url = p.get("url", f"https://{w.host_of(target)}{p.get('path', '/v1/resource')}")
            template = HttpCallTemplate(p.get("method", "GET"), url, p.get("headers", {}),
                                        p.get("body", "").encode())
            hook = RELAY_HOOKS[p.get("relay", "honest")]
            res = w.use(target, cred, template, channel=p.get("channel", "in-process"), handoff_hook=hook)
            detail["response_sha256"] = cp.hash(res.response).hex()
        elif step.action == "export":
            name = p.get("recipient", "recipient")
            kp = self.recipients.setdefault(name, cp.KemKeyPair.generate())
            target = self._target(p)
            o, art = w.export(target, kp, cred, channel=p.get("channel", "in-process"))
            opened = w.open_export(o, art, kp)
            detail["recipient_recovered_current_secret"] = opened == w.env.owner_secret(target)
            if not detail["recipient_recovered_current_secret"]:
                raise RuntimeError("recipient opened a stale or wrong secret")
        elif step.action == "write":
            target = self._target(p)
            value = p.get("value", "env-current")
            secret = w.env.owner_secret(target) if value == "env-current" else bytes.fromhex(value)
            detail["ver"] = w.write(target, secret, cred, channel=p.get("channel", "in-process")).ver
        elif step.action == "rotate":
            detail["ver"] = w.rotate(cred, channel=p.get("channel", "in-process")).ver
        elif step.action == "enroll":
            detail["new_credential"] = w.enroll(cred)
        elif step.action == "revoke":
            detail["ver"] = w.revoke(p["victim"], cred).ver
        elif step.action == "env_rotate":
            detail["epoch"] = w.env_rotate(self._target(p))
        elif step.action == "replay":
            w.replay_last()
        elif step.action == "reload":
            w.reload()
            detail["ver"] = w.custodian.state.ver
        elif step.action == "advance_clock":
            w.clock.advance(float(p.get("seconds", 0)))
        elif step.action == "unlock":
            res = w.use(self._target(p), cred)
            detail["response_sha256"] = cp.hash(res.response).hex()
        elif step.action == "breach":
            from sudp.harness.breach import run_breach

            rep = run_breach(w)
            detail.update(recovered=rep.recovered, attempts=len(rep.attempts), canary_hits=rep.canary_hits)
            if rep.recovered or rep.canary_hits:
                raise RuntimeError("storage breach recovered material")
        elif step.action == "race":
            detail.update(self._race(self._target(p), cred, int(p.get("threads", 64))))
        elif step.action == "check_no_leak":
            leaks = w.leaks()
            if leaks:
                raise RuntimeError(f"requester transcript leaks {leaks}")
        return detail


    def _race(self, target: str, cred: int, threads: int) -> dict:
        """Submit one honest grant from ``threads`` threads at once; exactly one may win."""
        w = self.w
        o = w.requester.propose(w.default_template(target), target, w.expiry())
        h = w.requester.relay_handoff(w.requester.request_grant(o))
        g = w.grant_for(h, cred)
        data = g.encode()
        w.last = LastFlow(grant_bytes=data, grant=g)
        barrier = threading.Barrier(threads)

        def attempt(_):
            barrier.wait()
            try:
                return w.custodian.submit_bytes(data)
            except SudpError as exc:
                return exc.code

        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(attempt, range(threads)))
        wins = [x for x in outcomes if not isinstance(x, str)]
        losses = sorted({x for x in outcomes if isinstance(x, str)})
        if len(wins) != 1:
            raise RuntimeError(f"{len(wins)} of {threads} concurrent redemptions succeeded")
        w.requester.receive(wins[0].kind, wins[0].encode())
        return {"threads": threads, "successes": 1, "loser_verdicts": losses}


def check_verify_precedes_consume(records: list[dict]) -> bool:
    verified: set[int] = set()
    for rec in records:
        if rec["event"] == "verify" and rec.get("verdict") == "ok":
            verified.add(rec["rid"])
        if rec["event"] == "consume" and rec.get("verdict") == "ok" and rec["rid"] not in verified:
            return False
    return True


def _canary_kinds(world: World) -> dict[str, int]:
    counts: dict[str, int] = {}
    for label in world.canaries.values.values():
        kind = label.split(":", 1)[0]
        counts[kind] = counts.get(kind, 0) + 1
    return dict(sorted(counts.items()))


def run_scenario(s: Scenario, state_dir: str | Path | None = None) -> dict:
    started = time.perf_counter()
    world = build_world(s, state_dir)
    runner = _Runner(world, s)
    steps = []
    try:
        for step in s.steps:
            t0 = time.perf_counter()
            if step.crash_after:
                world.custodian.fault_crash_after = step.crash_after
            detail: dict = {}
            try:
                detail = runner.do(step)
                observed = "ok"
            except SudpError as exc:
                observed = exc.code
            except Exception as exc:  # harness-level failure, reported not raised
                observed = "harness-error"
                detail = {"error": f"{type(exc).__name__}: {exc}"}
            finally:
                world.custodian.fault_crash_after = None
            steps.append({
                "index": step.index,
                "action": step.action,
                "expected": step.expect,
                "observed": observed,
                "passed": observed == step.expect,
                "elapsed_ms": round((time.perf_counter() - t0) * 1000, 3),
                "detail": detail,
            })
        leaks = world.leaks()
        invariants = {
            "requester_non_exposure": not leaks,
            "verify_precedes_consume": check_verify_precedes_consume(world.custodian.events.records),
            "requester_view": world.transcript.kinds() <= REQUESTER_VIEW,
            "transients_zeroized": world.custodian.transients_wiped(),
        }
        report = {
            "scenario": s.name,
            "passed": all(st["passed"] for st in steps) and all(invariants.values()),
            "steps": steps,
            "invariants": invariants,
            "leaked_canaries": leaks,
            "canaries_planted": _canary_kinds(world),
            "transcript_sha256": world.transcript.digest(),
            "transcript_entries": len(world.transcript.entries),
            "state_ver": world.custodian.state.ver,
            "elapsed_ms": round((time.perf_counter() - started) * 1000, 3),
        }
        return report
    finally:
        world.close()
