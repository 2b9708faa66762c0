import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def complex_to_iq(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


ACCEPTANCE = {}
CRITERIA = 9


def record_criterion(number, name, passed, detail):
    ACCEPTANCE[number] = (name, bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        name, passed, detail = ACCEPTANCE.get(n, ("not run", False, "no result recorded"))
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {n} {name}: {detail}")
