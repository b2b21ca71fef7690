"""Shared fixtures and the acceptance-summary reporter."""
import numpy as np
import pytest

from bubbling.domain import DomainSpec, build_domain
from bubbling.spectral import eigenpairs

GSTAR_BALL = np.pi ** 2 / 4

# (criterion, label, ok, detail, binding) appended by the ``accept`` fixture
_RESULTS = []


@pytest.fixture(scope="session")
def ball():
    return build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=1001))


@pytest.fixture(scope="session")
def ball_sp(ball):
    return eigenpairs(ball, 40)


@pytest.fixture(scope="session")
def ball_small():
    return build_domain(DomainSpec(kind="unit-ball", mode="radial", resolution=401))


@pytest.fixture(scope="session")
def ball_small_sp(ball_small):
    return eigenpairs(ball_small, 4)


@pytest.fixture
def accept():
    """Record one acceptance check; ``binding=False`` marks supplementary checks."""
    def record(criterion, label, ok, detail="", binding=True):
        _RESULTS.append((criterion, label, bool(ok), detail, binding))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    crits = sorted({r[0] for r in _RESULTS}, key=lambda c: int(c[1:]))
    for c in crits:
        rows = [r for r in _RESULTS if r[0] == c]
        binding = [r for r in rows if r[4]]
        ok = all(r[2] for r in binding) if binding else True
        tr.write_line(f"{c:>4} {'PASS' if ok else 'FAIL'}")
        for _, label, good, detail, b in rows:
            tag = "pass" if good else "fail"
            extra = "" if b else " (supplementary)"
            tr.write_line(f"       {tag}  {label}{extra}: {detail}")
