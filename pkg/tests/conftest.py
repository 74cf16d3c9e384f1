import numpy as np
import pytest

from rwm.harness.config import config_from_dict
from rwm.harness.runner import prepare_phase1


def small_pointmass_config(**overrides):
    data = {
        "name": "test",
        "seeds": [0],
        "cycles": 2,
        "env": {"kind": "pointmass"},
        "world_model": {"transitions": 6000, "epochs": 40},
        "perturbation": {"kind": "step_cycle", "on_steps": 1000, "off_steps": 1000},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return config_from_dict(data)


@pytest.fixture(scope="session")
def pointmass_phase1():
    """Base policy plus a forward model trained on nominal point-mass data."""
    cfg = small_pointmass_config()
    return cfg, prepare_phase1(cfg, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; prints it immediately
    and again in the terminal summary."""
    def report(number: int, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        print(line)
        _CRITERIA.append(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
