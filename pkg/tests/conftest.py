import numpy as np
import pytest
from hypothesis import settings

from calmet.core import binary_view, make_dataset

settings.register_profile("calmet", max_examples=60, deadline=None)
settings.load_profile("calmet")


@pytest.fixture
def four_points():
    # worked ECE example: equal-width B=2 puts {0.2, 0.3} and {0.8, 0.9} apart
    return binary_view([0, 1, 1, 1], [0.2, 0.3, 0.8, 0.9])


@pytest.fixture
def calibrated_view():
    rng = np.random.default_rng(7)
    c = rng.uniform(size=2000)
    y = (rng.uniform(size=2000) < c).astype(float)
    return binary_view(y, c)


@pytest.fixture
def three_class():
    rng = np.random.default_rng(11)
    z = rng.normal(size=(300, 3)) * 2
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    u = rng.uniform(size=300)[:, None]
    labels = np.minimum((u > np.cumsum(p, axis=1)).sum(axis=1), 2)
    return make_dataset(labels, p)


# one summary line per acceptance criterion, collected across tests
CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, label, ok, detail=""):
        CRITERIA.setdefault(number, []).append((label, bool(ok), detail))
        print(f"criterion {number} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        ok = all(p[1] for p in parts)
        failed = ", ".join(p[0] for p in parts if not p[1])
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += f" (failed: {failed})"
        terminalreporter.write_line(line)
        for label, good, detail in parts:
            terminalreporter.write_line(f"    {label}: {'pass' if good else 'FAIL'} {detail}")
