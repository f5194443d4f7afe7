"""Source-level checks on where labels are used and where state is decrypted."""

import ast
from collections import defaultdict
from pathlib import Path

import sudp
from sudp.crypto_profile import DomainLabel

SRC = Path(sudp.__file__).parent
# attacker scripts and test conveniences may open things the protocol never does
EXEMPT = ("harness",)


def _modules(include_exempt=True):
    for p in sorted(SRC.rglob("*.py")):
        rel = p.relative_to(SRC)
        if not include_exempt and rel.parts[0] in EXEMPT:
            continue
        yield rel, ast.parse(p.read_text(encoding="utf-8"))


def _functions(tree):
    """Yield (qualified name, node) for every function, methods included."""
    def walk(node, prefix):
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                name = f"{prefix}{child.name}"
                yield name, child
                yield from walk(child, name + ".")
            elif isinstance(child, ast.ClassDef):
                yield from walk(child, f"{prefix}{child.name}.")
    yield from walk(tree, "")


def _own_nodes(fn):
    """Nodes of ``fn`` excluding nested function bodies."""
    stack = list(ast.iter_child_nodes(fn))
    while stack:
        n = stack.pop()
        yield n
        if not isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)):
            stack.extend(ast.iter_child_nodes(n))


def _label_refs():
    refs = defaultdict(set)
    for rel, tree in _modules():
        for name, fn in _functions(tree):
            for n in _own_nodes(fn):
                if (isinstance(n, ast.Attribute) and isinstance(n.value, ast.Name)
                        and n.value.id == "DomainLabel" and n.attr in DomainLabel.__members__):
                    refs[n.attr].add(f"{rel}:{name}")
    return refs


def test_each_label_used_in_exactly_one_function():
    refs = _label_refs()
    assert set(refs) == set(DomainLabel.__members__)
    for label, where in refs.items():
        assert len(where) == 1, (label, where)


def test_no_label_string_literals_outside_enum():
    for rel, tree in _modules():
        for n in ast.walk(tree):
            if isinstance(n, ast.Constant) and isinstance(n.value, bytes) and n.value.startswith(b"SUDP-v1/"):
                assert rel.name == "crypto_profile.py"


def _calls(fn, names):
    for n in _own_nodes(fn):
        if isinstance(n, ast.Call):
            f = n.func
            called = f.attr if isinstance(f, ast.Attribute) else getattr(f, "id", None)
            if called in names:
                yield n


def test_state_decrypted_in_one_place():
    sites = set()
    for rel, tree in _modules(include_exempt=False):
        for name, fn in _functions(tree):
            for call in _calls(fn, {"aead_open"}):
                if any(isinstance(a, ast.Call) and getattr(a.func, "id", getattr(a.func, "attr", "")) == "state_ad"
                       for a in ast.walk(call)):
                    sites.add(f"{rel}:{name}")
    assert sites == {"custodian/core.py:Custodian._open_state"}


def test_wrap_key_only_unwrapped_in_open_state():
    sites = set()
    for rel, tree in _modules(include_exempt=False):
        for name, fn in _functions(tree):
            if any(_calls(fn, {"unwrap"})):
                sites.add(f"{rel}:{name}")
    # the published-vector check and the encrypted authenticator fixture use their own keys
    assert sites <= {"custodian/core.py:Custodian._open_state", "authenticator.py:Authenticator.load_fixture",
                     "vectors.py:_kw"}
    assert "custodian/core.py:Custodian._open_state" in sites


def test_every_kdf_call_carries_a_label():
    for rel, tree in _modules():
        for name, fn in _functions(tree):
            for call in _calls(fn, {"kdf"}):
                info = call.args[2] if len(call.args) > 2 else next(k.value for k in call.keywords if k.arg == "info")
                if isinstance(info, ast.Name):
                    info = next(a.value for a in _own_nodes(fn) if isinstance(a, ast.Assign)
                                and any(getattr(t, "id", None) == info.id for t in a.targets))
                labelled = any(isinstance(n, ast.Attribute) and getattr(n.value, "id", None) == "DomainLabel"
                               for n in ast.walk(info))
                assert labelled, f"{rel}:{name} calls kdf without a domain label"
