import pytest

from grasplab.trials import SensorRig, calibrate_rig, run_trials
from grasplab.world import FORCE_RANGE, object_set


@pytest.fixture(scope="session")
def small_objects():
    return object_set(3, 8)


@pytest.fixture(scope="session")
def small_rig(small_objects):
    return calibrate_rig(small_objects, 3, FORCE_RANGE, SensorRig())


@pytest.fixture(scope="session")
def small_records(small_objects, small_rig):
    """80 noisy trials over 8 objects."""
    return run_trials(small_objects, 80, 3, FORCE_RANGE, small_rig, workers=1)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-scale acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
