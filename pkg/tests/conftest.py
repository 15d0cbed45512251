import pytest

from ilrd import density as dens


@pytest.fixture(scope="session")
def d75():
    return dens.ulam_density(0.75, 2**14)


@pytest.fixture(scope="session")
def d50():
    return dens.ulam_density(0.5, 2**14)


ACCEPTANCE_LINES = {}


@pytest.fixture
def record_gates():
    def record(criterion, gates):
        ACCEPTANCE_LINES[criterion] = gates

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    from ilrd import acceptance as acc

    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        gates = ACCEPTANCE_LINES[k]
        verdict = "PASS" if acc.combine(k, gates) else "FAIL"
        tr.write_line(f"criterion {k:2d} {acc.TITLES[k]}: {verdict}")
        for g in gates:
            tr.write_line(f"    {g.line()}")
