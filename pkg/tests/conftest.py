import pytest

from crosshedge.model import ConstantDrift, Geometric, MarketSpec


def canonical_market(**kw):
    base = dict(beta1=0.2, beta2=0.3, drift=ConstantDrift(0.1), eta=1.0, v0=0.0, horizon=1.0)
    base.update(kw)
    return MarketSpec(**base)


def canonical_process(**kw):
    base = dict(mu=0.05, nu=0.3, x0=1.0)
    base.update(kw)
    return Geometric(**base)


@pytest.fixture
def market():
    return canonical_market()


@pytest.fixture
def geo():
    return canonical_process()


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
