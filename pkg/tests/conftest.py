"""Shared configurations and cached branch solves."""

from __future__ import annotations

import sys

import pytest
from hypothesis import settings

from sigma_vortex.branches import critical_branch, minimal_branch
from sigma_vortex.problem import VortexConfig

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def desk_config(**kw) -> VortexConfig:
    """One pole n=1 at the origin, a=0.5, A0=1."""
    base = dict(poles=(((0.0, 0.0), 1),), a=0.5, A0=1.0)
    base.update(kw)
    return VortexConfig(**base)


@pytest.fixture(scope="session")
def desk_cfg() -> VortexConfig:
    return desk_config()


@pytest.fixture(scope="session")
def desk_minimal(desk_cfg):
    return minimal_branch(desk_cfg, -1.5)


@pytest.fixture(scope="session")
def desk_critical(desk_cfg):
    return critical_branch(desk_cfg)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
