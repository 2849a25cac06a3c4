from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdebounds.polyalg import (Polynomial, PolynomialError, PolynomialSyntaxError, SdeModel,
                               apply_generator, differentiate, parse_polynomial, poly_add,
                               poly_mul, poly_pow, poly_scale)

from conftest import circle_model, cubic_model, gbm_model

X = ["x"]
XY = ["x1", "x2"]


def P(text, names=XY):
    return parse_polynomial(text, names)


# ---------------------------------------------------------------------------
# parsing


def test_parse_cubic_drift():
    p = parse_polynomial("1 - 2*x^3", X)
    assert dict(p.terms) == {(0,): 1, (3,): -2}


def test_parse_zero():
    p = parse_polynomial("0", ["x", "y"])
    assert p.is_zero and p.degree == 0 and len(p) == 0


def test_parse_square_of_sum():
    assert dict(P("(x1 + x2)^2").terms) == {(2, 0): 1, (1, 1): 2, (0, 2): 1}


def test_parse_rationals_and_decimals():
    p = P("1/3*x1 - 0.25*x2 + 1e-2")
    assert p.coefficient((1, 0)) == Fraction(1, 3)
    assert p.coefficient((0, 1)) == Fraction(-1, 4)
    assert p.coefficient((0, 0)) == Fraction(1, 100)


def test_parse_unary_minus_at_term_head():
    assert P("x1 + -x2") == P("x1 - x2")
    assert P("--x1") == P("x1")


@pytest.mark.parametrize("text, where", [("x1 +* x2", 4), ("x1^-2", 3), ("x1^1.5", 3),
                                         ("(x1 + x2", 8), ("x1 $ x2", 3)])
def test_parse_errors_carry_position(text, where):
    with pytest.raises(PolynomialSyntaxError) as exc:
        P(text)
    assert exc.value.position == where


def test_parse_unknown_identifier():
    with pytest.raises(PolynomialSyntaxError, match="unknown identifier 'z'"):
        P("x1 + z")


CORPUS = [
    "0", "1", "-1", "x1", "-x2", "x1 + x2", "x1 - x2", "x1*x2", "x1^2", "x1^10",
    "(x1 + x2)^3", "(x1 - 1)^4", "1/2*x1^2", "3/7*x1*x2^2 - 5", "0.125*x2^3",
    "x1^2 + x2^2 - 1", "2*x1 - 3*x2 + 4", "-(x1 + 2*x2)^2", "x1^3*x2^3", "(1 - x1)*(1 + x1)",
    "x2 - 1/1*x1^2", "1e3*x1", "(x1 + x2 + 1)^5", "x1*x1*x1", "7", "-7/9",
    "x1^2*x2 - x1*x2^2", "(2*x1 - x2)^2 - 4*x1^2", "((x1))", "x2^0", "x1^1",
    "1 + x1 + x1^2 + x1^3", "(x1 - x2)*(x1 + x2)", "123456789*x2^2", "-1/1000000*x1",
    "(x1^2 + x2^2)^2", "x1*(x2 + 1)*(x2 - 1)", "2.5*x1 - 2.5*x1", "x1^4 - 4*x1^3 + 6*x1^2",
    "(3*x1 + 2)^3", "x2*(x1 - 3/2)", "-x2 - x1 - 1/2*x1^3", "x2^5 - x1^5",
    "(x1 - 0.1)^2", "5*x1*x2 + 5*x2*x1", "-(-(-x1))", "x1 - (x2 - (x1 - x2))",
    "(1/2)^2*x1 + 2/4", "((x1 + 1)^2 - 1)^2", "0*x1 + 0*x2",
]


@pytest.mark.parametrize("text", CORPUS)
def test_print_parse_round_trip(text):
    p = P(text)
    assert P(p.to_text(XY)) == p


# ---------------------------------------------------------------------------
# arithmetic

small = st.dictionaries(
    st.tuples(st.integers(0, 3), st.integers(0, 3)),
    st.fractions(min_value=-5, max_value=5, max_denominator=7), max_size=5,
).map(lambda terms: Polynomial(2, terms))


def test_examples():
    x = Polynomial.variable(1, 0)
    assert poly_mul(x, x) == Polynomial.monomial((2,))
    p = P("x1^2 - 3*x2 + 1")
    assert poly_add(p, poly_scale(p, -1)).is_zero
    assert poly_pow(1 + x, 3) == parse_polynomial("1 + 3*x + 3*x^2 + x^3", X)


def test_dimension_mismatch():
    with pytest.raises(PolynomialError):
        Polynomial.variable(1, 0) + Polynomial.variable(2, 0)


def test_differentiate():
    assert differentiate(P("x1^3"), 0) == P("3*x1^2")
    assert differentiate(P("x1^2*x2 + x2^2"), 1) == P("x1^2 + 2*x2")
    assert differentiate(P("5"), 0).is_zero
    with pytest.raises(PolynomialError):
        differentiate(P("x1"), 2)


def test_no_zero_terms_stored():
    p = P("x1 - x1 + x2")
    assert dict(p.terms) == {(0, 1): 1}


@given(small, small, small)
def test_ring_axioms(p, q, s):
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) + s == p + (q + s)
    assert (p * q) * s == p * (q * s)
    assert p * (q + s) == p * q + p * s


@given(small, small)
def test_degree_of_product(p, q):
    if not p.is_zero and not q.is_zero:
        assert (p * q).degree == p.degree + q.degree


@given(small, st.tuples(st.fractions(-3, 3, max_denominator=5), st.fractions(-3, 3, max_denominator=5)))
def test_exact_evaluation(p, pt):
    value = p.evaluate(pt)
    assert isinstance(value, Fraction)
    assert value == sum(c * pt[0] ** a[0] * pt[1] ** a[1] for a, c in p.terms.items())


# ---------------------------------------------------------------------------
# generator


def test_generator_cubic_recurrence():
    m = cubic_model()
    for k in range(1, 7):
        h = Polynomial.monomial((k,))
        expect = Polynomial.monomial((k - 1,), k) + Polynomial.monomial((k,), k * (k - 1)) \
            - Polynomial.monomial((k + 2,), 2 * k)
        assert apply_generator(h, m) == expect


def test_generator_gbm():
    lam = 4
    m = gbm_model(lam)
    for k in range(1, 6):
        expect = Polynomial.monomial((k - 1,), k) - Polynomial.monomial((k,), k * (lam + 1 - k))
        assert apply_generator(Polynomial.monomial((k,)), m) == expect


def test_generator_circle_norm_is_invariant():
    assert apply_generator(P("x1^2 + x2^2"), circle_model()).is_zero


def test_generator_of_constant_is_zero():
    assert apply_generator(Polynomial.constant(1, 3), cubic_model()).is_zero


def test_model_records_generator_degree_and_checks_a():
    assert cubic_model().generator_degree == 3
    with pytest.raises(PolynomialError, match="not symmetric"):
        SdeModel.create([P("x1"), P("x2")], a=[[P("1"), P("x1")], [P("0"), P("1")]])
    with pytest.raises(PolynomialError, match="sigma sigma"):
        SdeModel.create([P("x1"), P("x2")], sigma=[[P("1")], [P("0")]],
                        a=[[P("2"), P("0")], [P("0"), P("0")]])


@st.composite
def models(draw):
    coeff = st.fractions(min_value=-2, max_value=2, max_denominator=3)
    poly = st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 2)), coeff,
                           max_size=3).map(lambda t: Polynomial(2, t))
    b = [draw(poly), draw(poly)]
    sigma = [[draw(poly)], [draw(poly)]]
    return SdeModel.create(b, sigma=sigma)


@settings(max_examples=100, deadline=None)
@given(models(), small, small, st.fractions(-3, 3, max_denominator=5), st.fractions(-3, 3, max_denominator=5))
def test_generator_linearity(model, p, q, al, be):
    lhs = apply_generator(p.scale(al) + q.scale(be), model)
    assert lhs == apply_generator(p, model).scale(al) + apply_generator(q, model).scale(be)


@settings(max_examples=100, deadline=None)
@given(models(), small, small)
def test_generator_product_rule(model, p, q):
    gp, gq = p.gradient(), q.gradient()
    carre = sum((model.a[i][j] * gp[i] * gq[j] for i in range(2) for j in range(2)),
                Polynomial.zero(2))
    assert apply_generator(p * q, model) == \
        p * apply_generator(q, model) + q * apply_generator(p, model) + carre


@settings(max_examples=50, deadline=None)
@given(models(), small)
def test_generator_degree_bound(model, h):
    assert apply_generator(h, model).degree <= h.degree + model.generator_degree
