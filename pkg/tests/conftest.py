from fractions import Fraction

import pytest

from sdebounds.polyalg import Polynomial, SdeModel, parse_polynomial


def cubic_model() -> SdeModel:
    return SdeModel.create([parse_polynomial("1 - 2*x^3", ["x"])],
                           a=[[parse_polynomial("2*x^2", ["x"])]])


def gbm_model(lam: int = 4) -> SdeModel:
    return SdeModel.create([parse_polynomial(f"1 - {lam}*x", ["x"])],
                           a=[[parse_polynomial("2*x^2", ["x"])]])


def circle_model(R=1) -> SdeModel:
    names = ["x1", "x2"]
    R = Fraction(R)
    return SdeModel.create(
        [parse_polynomial("-1/2*x1", names), parse_polynomial("-1/2*x2", names)],
        sigma=[[parse_polynomial("-x2", names)], [parse_polynomial("x1", names)]],
        varieties=[parse_polynomial("x1^2 + x2^2", names) - Polynomial.constant(2, R * R)])


def x(n: int = 1, i: int = 0) -> Polynomial:
    return Polynomial.variable(n, i)


@pytest.fixture
def cubic():
    return cubic_model()


@pytest.fixture
def circle():
    return circle_model()


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
