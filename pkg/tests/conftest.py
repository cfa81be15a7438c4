import pytest

from mcstogeo.core import Environment, ReceiverKind, ReceiverSpec, SamplingScheme, Scenario, TransmitterField

# criterion number -> (passed, detail), filled by the acceptance module
ACCEPTANCE = {}


def make_scenario(
    D=80.0, r_r=5.0, lam=1e-4, n_tx=1e4, tss=0.01, t_end=1.0, R=50.0, kind="absorbing", rho=1.0
):
    return Scenario(
        Environment(D),
        ReceiverSpec(ReceiverKind.parse(kind), r_r),
        TransmitterField(lam, rho, n_tx),
        SamplingScheme.uniform(t_end, tss),
        R,
    )


@pytest.fixture
def fig2():
    return make_scenario()


@pytest.fixture
def fig3():
    return make_scenario(D=120.0, lam=1e-3, tss=0.1, t_end=2.0, R=100.0)


@pytest.fixture
def record():
    def _record(number, passed, detail=""):
        ACCEPTANCE[number] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
