import pytest

from kal.config import RunConfig
from kal.ensemble import run_ensemble


def small_config(**over):
    base = {
        "N0": 40,
        "M": 300,
        "alpha": 0.5,
        "t_end": 1.0,
        "snapshot_count": 33,
        "seed": 2024,
        "observables": [{"kind": "constant"}, {"kind": "gaussian", "a": 0.5, "c": [0, 0, 0]}],
        "omega_samples": 32,
    }
    base.update(over)
    return RunConfig.from_dict(base)


@pytest.fixture(scope="session")
def maxwell_ensemble():
    return run_ensemble(small_config(), workers=1)


@pytest.fixture(scope="session")
def hard_sphere_ensemble():
    return run_ensemble(small_config(kernel={"family": "hard_sphere"}, M=200), workers=1)


# acceptance lines collected by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
