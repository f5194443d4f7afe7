"""Command-line entry point.

    sudp demo                      walk through a use, an export and a rotation,
                                   approving or declining each at the prompt
    sudp scenario run <file|name>  run a scenario file or a bundled scenario
    sudp scenario list             list bundled scenarios
    sudp attack <name>|all         run an attack script
    sudp vectors                   check every primitive against published vectors

Exit codes: 0 pass, 1 verdict mismatch, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from sudp.errors import ScenarioParseError, SudpError
from sudp.operation import HttpCallTemplate

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


def _emit(args, payload, lines) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _resolve_scenario(ref: str):
    from sudp.harness.scenario import bundled, load_scenario

    p = Path(ref)
    if p.is_file():
        return load_scenario(p)
    return bundled(p.stem if p.suffix else ref)


def cmd_scenario(args) -> int:
    from sudp.harness.scenario import bundled_scenario_paths, run_scenario

    if args.scenario_cmd == "list":
        names = [p.stem for p in bundled_scenario_paths()]
        _emit(args, names, names)
        return EXIT_OK
    try:
        s = _resolve_scenario(args.file)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    report = run_scenario(s, args.state_dir)
    lines = [f"scenario {report['scenario']}"]
    for st in report["steps"]:
        mark = "ok  " if st["passed"] else "FAIL"
        lines.append(f"  [{mark}] {st['index']:>2} {st['action']:<14} expected {st['expected']:<32} "
                     f"observed {st['observed']}")
    for name, ok in report["invariants"].items():
        lines.append(f"  invariant {name}: {'holds' if ok else 'VIOLATED'}")
    lines.append("PASS" if report["passed"] else "FAIL")
    _emit(args, report, lines)
    return EXIT_OK if report["passed"] else EXIT_MISMATCH


def cmd_attack(args) -> int:
    from sudp.harness.attacks import ATTACKS, run_attack

    names = list(ATTACKS) if args.name == "all" else [args.name]
    unknown = [n for n in names if n not in ATTACKS]
    if unknown:
        print(f"error: unknown attack {unknown[0]!r}; choose from {', '.join(ATTACKS)}", file=sys.stderr)
        return EXIT_USAGE
    base = None
    if args.base:
        try:
            base = _resolve_scenario(args.base)
        except ScenarioParseError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    reports = [run_attack(n, base) for n in names]
    lines = []
    for rep in reports:
        lines.append(f"attack {rep.name} [{', '.join(rep.axes)}]")
        for what, ok in rep.checks:
            lines.append(f"  [{'ok  ' if ok else 'FAIL'}] {what}")
        lines.append("attack rejected as expected" if rep.passed else "ATTACK NOT REJECTED AS EXPECTED")
    payload = [r.as_dict() for r in reports]
    _emit(args, payload if len(payload) > 1 else payload[0], lines)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_MISMATCH


def cmd_vectors(args) -> int:
    from sudp.vectors import check_all

    results = check_all()
    lines = [f"  [{'ok  ' if r.ok else 'FAIL'}] {r.name}: {r.detail}" for r in results]
    ok = all(r.ok for r in results)
    lines.append(f"{sum(r.ok for r in results)}/{len(results)} vectors match")
    _emit(args, {"passed": ok, "vectors": [r.__dict__ for r in results]}, lines)
    return EXIT_OK if ok else EXIT_MISMATCH


def _prompt(rendering: str):
    from sudp.authenticator import DECLINE, terminal_prompt

    print()
    try:
        return terminal_prompt(rendering)
    except EOFError:
        print("(no input, declining)")
        return DECLINE


def cmd_demo(args) -> int:
    from sudp import crypto_profile as cp
    from sudp.harness.world import World

    # Setup gestures are auto-approved; every operation after that goes to the prompt.
    with World(args.state_dir, credentials=2, seed=args.seed or 0,
               targets={"github": {"host": "api.github.com"}},
               responses={"GET /user": "octocat"}) as w:
        w.authorizer.decisions = _prompt
        recipient = cp.KemKeyPair.generate()

        def use():
            w.use("github", 0, HttpCallTemplate("GET", "https://api.github.com/user"))
            return "the response went back to the requester; the token did not"

        def export():
            o, artifact = w.export("github", recipient, 1)
            ok = w.open_export(o, artifact, recipient) == w.env.owner_secret("github")
            return "the recipient opened the current token" if ok else "the recipient got the wrong bytes"

        def rotate():
            return f"sealed state is now at version {w.rotate(0).ver}"

        print("A requester wants to act on GitHub with your token. You play the authorizer.")
        for label, fn in (("delegated use", use), ("export to a recipient", export), ("rotation", rotate)):
            try:
                print(f"-> {label}: {fn()}")
            except SudpError as exc:
                print(f"-> {label}: refused ({exc.code})")
        leaks = w.leaks()
        print(f"requester transcript: {len(w.transcript.entries)} entries, "
              f"{'no secrets seen' if not leaks else 'LEAKED ' + ', '.join(leaks)}")
        return EXIT_OK if not leaks else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for fixture and ordering choices")
    common.add_argument("--state-dir", default=None, help="directory for sealed state (default: temporary)")
    common.add_argument("--json", action="store_true", help="print a machine-readable report")

    p = argparse.ArgumentParser(prog="sudp", description="Delegated secret use: demo, scenarios, attacks, vectors.")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("demo", parents=[common], help="interactive walk-through").set_defaults(fn=cmd_demo)

    sc = sub.add_parser("scenario", help="run scenarios")
    sc_sub = sc.add_subparsers(dest="scenario_cmd", required=True)
    run = sc_sub.add_parser("run", parents=[common], help="run one scenario")
    run.add_argument("file", help="scenario JSON file or bundled scenario name")
    sc_sub.add_parser("list", parents=[common], help="list bundled scenarios")
    sc.set_defaults(fn=cmd_scenario)

    at = sub.add_parser("attack", parents=[common], help="run an attack script")
    at.add_argument("name", help="attack name, or 'all'")
    at.add_argument("--base", default=None, help="scenario providing the starting deployment")
    at.set_defaults(fn=cmd_attack)

    sub.add_parser("vectors", parents=[common], help="check published primitive vectors").set_defaults(fn=cmd_vectors)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
