import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_config():
    """Campaign settings with 2e4-sample runs, for fast loop-level tests."""
    from lorenz_ilc.controller import CampaignConfig
    return CampaignConfig(n_keep=20_000, n_discard=20_000)


@pytest.fixture(scope="session")
def small_reference(small_config):
    from lorenz_ilc.controller import build_reference
    return build_reference(small_config)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
