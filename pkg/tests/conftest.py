import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evopf.grid import load_network  # noqa: E402
from evopf.scenario import load_scenario  # noqa: E402
from evopf.study import StudySpec, run_study  # noqa: E402

# acceptance verdicts, filled by tests/test_acceptance.py and echoed at the end of the run
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def network():
    return load_network()


@pytest.fixture(scope="session")
def scenario(network):
    return load_scenario(network=network)


@pytest.fixture(scope="session")
def sweep_fp(network, scenario):
    """Fixed-power at 0 / 25 / 50 % under TOU layouts 1 and 2."""
    spec = StudySpec(model="fixed_power", penetration_levels=(0.0, 0.25, 0.5), tou_scenarios=(1, 2))
    return run_study(spec, network, scenario)


@pytest.fixture(scope="session")
def fc_half(network, scenario):
    spec = StudySpec(model="fixed_current", penetration_levels=(0.0, 0.5), tou_scenarios=(2,))
    return run_study(spec, network, scenario)
