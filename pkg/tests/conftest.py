import math

import pytest
from hypothesis import HealthCheck, settings

from heliotrap.potential import HarmonicBowl, standin_field

settings.register_profile(
    "heliotrap", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("heliotrap")

TAU = 2 * math.pi


@pytest.fixture(scope="session")
def bowl():
    return HarmonicBowl()


@pytest.fixture(scope="session")
def standin():
    return standin_field()


_ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 8


@pytest.fixture
def criterion(request):
    """Report one acceptance criterion: prints a PASS/FAIL line, then asserts."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number: int, name: str, checks: dict, runtime: float, limit: float, detail: str):
        checks = {**checks, f"runtime < {limit:g} s": runtime < limit}
        ok = all(checks.values())
        line = (f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} - {detail}; "
                f"{runtime:.3g} s of {limit:g} s")
        lines[number] = line
        print(line)
        assert ok, f"{line}; failed checks: {[k for k, v in checks.items() if not v]}"

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, None)
    if lines is None:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(lines.get(k, f"criterion {k}: FAIL - did not report"))
