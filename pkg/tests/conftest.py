from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from fluxchain.chain import build_system, named_chain

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def lm_system():
    ops, dressed = build_system(named_chain("LM"))
    return ops, dressed


@pytest.fixture(scope="session")
def hlmh_system():
    ops, dressed = build_system(named_chain("HLMH'"))
    return ops, dressed


@pytest.fixture(scope="session")
def four_qubit_systems():
    return {name: build_system(named_chain(name)) for name in ("HLMH'", "LMHL'", "MLHM'")}


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
