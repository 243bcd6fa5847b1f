import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from srlopt.config import BodyParams, RunConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REPORTED_X = np.array([0.100, 0.403, 0.296, 0.204, 0.198])
PROTOTYPE_LENGTHS = np.array([0.1, 0.4, 0.3, 0.2])


@pytest.fixture(scope="session")
def body():
    return BodyParams()


@pytest.fixture(scope="session")
def run_cfg():
    return RunConfig()


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
