from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdebounds.applications import oracle_circle_moment, oracle_inverse_gamma_moment
from sdebounds.momentsdp import (AssemblyError, PiecewiseObjective, assemble_outer,
                                 assemble_piecewise, basis, is_feasible_point, localizing_map,
                                 moment_matrix_map, moment_vector, presolve, prune_free_rows, r,
                                 rescale, restrict_to_standard_monomials, stationarity_rows,
                                 variety_rows)
from sdebounds.polyalg import Polynomial, parse_polynomial

from conftest import circle_model, cubic_model, gbm_model


def row_dict(row, b):
    return {b.exponents[k]: c for k, c in row.coeffs.items()}


# ---------------------------------------------------------------------------
# basis


def test_basis_order_and_size():
    b = basis(2, 2)
    assert b.exponents == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert len(basis(1, 0)) == 1
    assert len(basis(3, 4)) == 35
    assert b.index[(0, 0)] == 0


@given(st.integers(1, 4), st.integers(0, 8))
def test_basis_size_is_binomial(n, d):
    b = basis(n, d)
    assert len(b) == r(n, d)
    assert len(set(b.exponents)) == len(b)
    assert all(sum(e) <= d for e in b.exponents)
    assert [sum(e) for e in b.exponents] == sorted(sum(e) for e in b.exponents)


def test_basis_cap():
    with pytest.raises(AssemblyError, match="exceeds the cap"):
        basis(3, 40)


# ---------------------------------------------------------------------------
# rows


def test_cubic_stationarity_rows_d6():
    b = basis(1, 6)
    rows = stationarity_rows(cubic_model(), 6)
    assert [row_dict(r_, b) for r_ in rows] == [
        {(0,): 1, (3,): -2},
        {(1,): 2, (2,): 2, (4,): -4},
        {(2,): 3, (3,): 6, (5,): -6},
    ]


def test_gbm_rows_pin_moments():
    rows = stationarity_rows(gbm_model(4), 4)
    b = basis(1, 4)
    assert row_dict(rows[0], b) == {(0,): 1, (1,): -4}
    assert row_dict(rows[1], b) == {(1,): 2, (2,): -6}


def test_no_rows_at_generator_degree():
    assert stationarity_rows(cubic_model(), 3) == []
    with pytest.raises(AssemblyError):
        stationarity_rows(cubic_model(), 2)


@pytest.mark.parametrize("d", range(3, 10))
def test_row_count_formula(d):
    m = cubic_model()
    assert len(stationarity_rows(m, d)) == r(1, d - m.generator_degree) - 1


def test_sharp_rows_superset_on_circle():
    m = circle_model()
    assert stationarity_rows(m, 2) == []
    sharp = stationarity_rows(m, 2, mode="sharp")
    assert len(sharp) == 5


def test_variety_rows():
    b = basis(2, 2)
    g = parse_polynomial("x1^2 + x2^2 - 4", ["x1", "x2"])
    rows = variety_rows(g, b)
    assert len(rows) == 1 and row_dict(rows[0], b) == {(2, 0): 1, (0, 2): 1, (0, 0): -4}
    with pytest.raises(AssemblyError):
        variety_rows(Polynomial.zero(2), b)
    u = Fraction(3, 2)
    rows = variety_rows(Polynomial.variable(1, 0) - u, basis(1, 3))
    b1 = basis(1, 3)
    assert [row_dict(x, b1) for x in rows] == [{(1,): 1, (0,): -u}, {(2,): 1, (1,): -u},
                                              {(3,): 1, (2,): -u}, ]
    # count r(d - d_g)
    assert len(variety_rows(g, basis(2, 5))) == r(2, 3)


# ---------------------------------------------------------------------------
# PSD maps


def entry_exps(pm, b, i, j):
    return {b.exponents[k]: c for k, c in pm.entry(i, j).items()}


def test_moment_matrix_maps():
    b = basis(1, 2)
    pm = moment_matrix_map(b)
    assert pm.side == 2
    assert [[entry_exps(pm, b, i, j) for j in range(2)] for i in range(2)] == \
        [[{(0,): 1}, {(1,): 1}], [{(1,): 1}, {(2,): 1}]]
    b6 = basis(1, 6)
    pm6 = moment_matrix_map(b6)
    assert pm6.side == 4 and entry_exps(pm6, b6, 3, 3) == {(6,): 1}
    assert moment_matrix_map(basis(1, 0)).side == 1


def test_localizing_maps():
    b = basis(2, 2)
    pm = localizing_map(Polynomial.variable(2, 1), b)
    assert pm.side == 1 and entry_exps(pm, b, 0, 0) == {(0, 1): 1}
    b4 = basis(2, 4)
    u = Fraction(1, 3)
    pm = localizing_map(Polynomial.variable(2, 0) - u, b4)
    assert pm.side == 3 and entry_exps(pm, b4, 0, 0) == {(1, 0): 1, (0, 0): -u}
    one = localizing_map(Polynomial.constant(2, 1), b4)
    assert one.entries == moment_matrix_map(b4).entries
    with pytest.raises(AssemblyError):
        localizing_map(parse_polynomial("x1^5", ["x1", "x2"]), b4)


def test_psd_maps_symmetric_by_construction():
    b = basis(2, 4)
    pm = localizing_map(parse_polynomial("x1 - x2^2", ["x1", "x2"]), b)
    for i in range(pm.side):
        for j in range(pm.side):
            assert pm.entry(i, j) == pm.entry(j, i)


# ---------------------------------------------------------------------------
# assembly and ground-truth feasibility


def test_outer_example_cubic_d4():
    p = assemble_outer(cubic_model(), Polynomial.variable(1, 0), 4)
    b = basis(1, 4)
    labels = [row.label for row in p.equalities]
    assert labels[0] == "normalisation"
    assert [row_dict(x, b) for x in p.equalities[1:]] == [{(0,): 1, (3,): -2}]
    assert p.psd_maps[0].side == 3


def test_exactly_one_normalisation_row():
    pw = PiecewiseObjective.create([(Polynomial.constant(1, 1), [],
                                     [Polynomial.variable(1, 0)])])
    p = assemble_piecewise(cubic_model(), pw, 6)
    norms = [row for row in p.equalities if row.label == "normalisation"]
    assert len(norms) == 1 and len(norms[0].coeffs) == 2


@pytest.mark.parametrize("R", [Fraction(1, 2), 1, 3])
@pytest.mark.parametrize("d", range(2, 9))
def test_circle_moments_feasible(R, d):
    m = circle_model(R)
    for mode in ("standard", "sharp"):
        p = assemble_outer(m, Polynomial.constant(2, 1), d, rows=mode)
        y = moment_vector(p, lambda a: oracle_circle_moment(R, a))
        assert is_feasible_point(p, y)


@pytest.mark.parametrize("lam", [4, 6])
def test_inverse_gamma_moments_satisfy_rows(lam):
    m = gbm_model(lam)
    for d in range(2, lam - 1):
        b = basis(1, d)
        y = [oracle_inverse_gamma_moment(lam, e[0]) for e in b.exponents]
        for row in stationarity_rows(m, d):
            assert row.residual(y) == 0


def test_nested_relaxations():
    m = cubic_model()
    f = Polynomial.variable(1, 0)
    for d in range(4, 9):
        lo, hi = assemble_outer(m, f, d), assemble_outer(m, f, d + 1)
        ex_lo, ex_hi = lo.blocks[0][1].exponents, hi.blocks[0][1].exponents

        def lift(row, src, dst):
            return {dst.index[src.exponents[k]]: c for k, c in row.coeffs.items()}
        hi_rows = [row.coeffs for row in hi.equalities]
        for row in lo.equalities:
            assert lift(row, lo.blocks[0][1], hi.blocks[0][1]) in hi_rows
        assert hi.psd_maps[0].side >= lo.psd_maps[0].side
        assert ex_hi[: len(ex_lo)] == ex_lo


def test_assembly_errors():
    m = cubic_model()
    with pytest.raises(AssemblyError):
        assemble_outer(m, parse_polynomial("x^5", ["x"]), 4)
    with pytest.raises(AssemblyError, match="no pieces"):
        assemble_piecewise(m, PiecewiseObjective((), "nonnegative"), 6)
    with pytest.raises(AssemblyError):
        PiecewiseObjective.create([], sign="positive")


def test_piecewise_informative_side():
    one = Polynomial.constant(1, 1)
    q = Polynomial.variable(1, 0)
    assert assemble_piecewise(cubic_model(), PiecewiseObjective.create([(one, [], [q])]),
                              6).informative == "upper"
    assert assemble_piecewise(cubic_model(), PiecewiseObjective.create([(-one, [], [q])],
                                                                       "nonpositive"),
                              6).informative == "lower"


# ---------------------------------------------------------------------------
# rescaling, restriction, pruning


def test_rescale_identity():
    p = assemble_outer(cubic_model(), Polynomial.variable(1, 0), 6)
    q, _ = rescale(p, [1])
    assert q.equalities == p.equalities and q.objective == p.objective
    assert [m.entries for m in q.psd_maps] == [m.entries for m in p.psd_maps]


def test_rescale_row_example():
    p = assemble_outer(cubic_model(), Polynomial.variable(1, 0), 4)
    q, _ = rescale(p, [2])
    b = basis(1, 4)
    assert row_dict(q.equalities[1], b) == {(0,): 1, (3,): -16}


def test_rescale_moment_matrix_congruence():
    p = assemble_outer(gbm_model(), Polynomial.variable(1, 0), 4)
    z = Fraction(3, 2)
    q, back = rescale(p, [z])
    yt = [Fraction(k + 1, 7) for k in range(5)]
    y = back(yt)
    M = np.array(p.psd_maps[0].evaluate(y))
    D = np.diag([float(z) ** -k for k in range(3)])
    assert np.allclose(q.psd_maps[0].evaluate([float(v) for v in yt]), D @ M @ D)


def test_rescale_round_trip():
    m = circle_model(3)
    p = assemble_outer(m, parse_polynomial("x1*x2", ["x1", "x2"]), 6)
    z = [Fraction(3), Fraction(1, 2)]
    q, _ = rescale(p, z)
    back, _ = rescale(q, [1 / v for v in z])
    assert back.equalities == p.equalities and back.objective == p.objective
    assert [m_.entries for m_ in back.psd_maps] == [m_.entries for m_ in p.psd_maps]
    assert back.scaling is None
    with pytest.raises(AssemblyError):
        rescale(p, [1, 0])


def test_restriction_and_pruning_keep_ground_truth_feasible():
    m = circle_model(1)
    p = assemble_outer(m, Polynomial.constant(2, 1), 8)
    q = prune_free_rows(restrict_to_standard_monomials(p, m.varieties))
    assert q.psd_maps[0].side < p.psd_maps[0].side
    y = moment_vector(q, lambda a: oracle_circle_moment(1, a))
    assert is_feasible_point(q, y)


def test_presolve_drops_dependent_rows_only():
    m = circle_model(1)
    p = assemble_outer(m, Polynomial.constant(2, 1), 6, rows="sharp")
    q = presolve(p)
    assert len(q.equalities) < len(p.equalities)
    y = moment_vector(p, lambda a: oracle_circle_moment(1, a))
    assert is_feasible_point(q, y)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=8),
                min_size=2, max_size=2))
def test_rescale_round_trip_property(z):
    p = assemble_outer(circle_model(1), parse_polynomial("x2^2 + 1", ["x1", "x2"]), 4)
    q, _ = rescale(p, z)
    back, _ = rescale(q, [1 / v for v in z])
    assert back.equalities == p.equalities
