import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def world(tmp_path):
    from sudp.harness.world import World

    with World(tmp_path, credentials=2) as w:
        yield w


@pytest.fixture
def world3(tmp_path):
    from sudp.harness.world import World

    with World(tmp_path, credentials=3) as w:
        yield w


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, part in sorted(results):
        ok, title, detail = results[n, part]
        label = f"{n}{part and '/' + part}"
        terminalreporter.write_line(f"criterion {label:<5} {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
