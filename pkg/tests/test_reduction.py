#!/usr/bin/env python

import random
from fractions import Fraction

import pytest

from mahler_toolkit.algebra import constant_matrix
from mahler_toolkit.errors import NotRegularSingularShape
from mahler_toolkit.operators import MahlerOperator, MahlerSystem, equation_to_companion
from mahler_toolkit.reduction import (
    ResidualReport,
    block_triangularize,
    clear_positive_offdiag,
    const_times_xi,
    constant_solution_matrix,
    constantify,
    reduce_regular_singular,
    reduce_to_constant,
    solution_basis,
    solve_negative_sylvester,
    solve_positive_sylvester,
    uniqueness_defect,
    verify_gauge,
    xi_sigma_matrix,
    xi_times_const,
)
from mahler_toolkit.regression import non_minimal_operator
from mahler_toolkit.series import (
    TruncatedPuiseux,
    constant_series_matrix,
    matrix_is_zero,
    matrix_multiply,
    matrix_sigma,
    matrix_sub,
    z,
)
from mahler_toolkit.xi import XiExpr, XiIndex, standardize


def _laurent(rng, exponents):
    return TruncatedPuiseux({e: rng.randint(-3, 3) for e in exponents})


def _random_invertible(rng, n):
    while True:
        M = constant_matrix([[rng.randint(-3, 3) for _ in range(n)] for _ in range(n)])
        if M.det():
            return M


def _random_triangular(rng, n):
    """Upper triangular with rational diagonal, so the eigenvalues stay in Q."""
    rows = [[0] * n for _ in range(n)]
    for i in range(n):
        rows[i][i] = rng.choice((1, -1, 2, -2, 3, Fraction(1, 2)))
        for j in range(i + 1, n):
            rows[i][j] = rng.randint(-2, 2)
    if n == 2 and rng.random() < 0.5:
        rows[1][1] = rows[0][0]
    return constant_matrix(rows)


def _random_monic_operator(rng, p):
    d = rng.randint(1, 3)
    coeffs = [[rng.randint(-3, 3) for _ in range(rng.randint(1, 4))] for _ in range(d)]
    if not any(coeffs[0]):
        coeffs[0][0] = 1
    return MahlerOperator(p, [TruncatedPuiseux.from_coefficients(c) for c in coeffs] + [1])


def _negative_residual(C1, C2, B, F, p):
    left = xi_times_const(xi_sigma_matrix(F, p), C2)
    right = const_times_xi(C1, F)
    return [
        [standardize(l - r - b, p) for l, r, b in zip(lrow, rrow, brow)]
        for lrow, rrow, brow in zip(left, right, B)
    ]


class TestRegularSingular:
    def test_gauge_of_one_plus_z(self):
        A = MahlerSystem(2, [[TruncatedPuiseux.from_coefficients([1, 1])]])
        G = reduce_regular_singular(A, 6)
        assert G[0][0] == TruncatedPuiseux.from_coefficients([1] * 6, 6)

    def test_rejects_negative_exponents(self):
        with pytest.raises(NotRegularSingularShape):
            reduce_regular_singular(MahlerSystem(2, [[z(-1)]]), 6)

    def test_rejects_singular_constant_term(self):
        with pytest.raises(NotRegularSingularShape):
            reduce_regular_singular(MahlerSystem(2, [[z()]]), 6)


class TestPositiveSylvester:
    def test_scalar_equation(self):
        # 2 M - sigma(M) = z gives M = z/2 + z^2/4 + z^4/8 + O(z^8)
        M = solve_positive_sylvester(constant_matrix([[2]]), constant_matrix([[1]]), [[z()]], 6, 2)
        assert M[0][0] == TruncatedPuiseux({1: Fraction(1, 2), 2: Fraction(1, 4), 4: Fraction(1, 8)}, 6)

    def test_rejects_nonpositive_valuation(self):
        with pytest.raises(ValueError):
            solve_positive_sylvester(constant_matrix([[2]]), constant_matrix([[1]]), [[z(-1)]], 6, 2)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_random_instances(self, seed):
        rng = random.Random(seed)
        p = rng.choice((2, 3))
        r1, r2 = rng.randint(1, 2), rng.randint(1, 2)
        C1, C2 = _random_invertible(rng, r1), _random_invertible(rng, r2)
        B = [[_laurent(rng, range(1, 4)) for _ in range(r2)] for _ in range(r1)]
        N = 10
        M = solve_positive_sylvester(C1, C2, B, N, p)
        lhs = matrix_sub(
            matrix_multiply(constant_series_matrix(C1), M),
            matrix_multiply(matrix_sigma(M, p), constant_series_matrix(C2)),
        )
        assert matrix_is_zero(matrix_sub(lhs, B), N)


class TestNegativeSylvester:
    def test_scalar_equation(self):
        # sigma(F) - F = 1/z is solved by xi[(0);(1);(1)]
        B = [[XiExpr.from_series(z(-1))]]
        F = solve_negative_sylvester(constant_matrix([[1]]), constant_matrix([[1]]), B, 2)
        expected = standardize(XiExpr.xi(XiIndex.create([0], [1], [1])), 2)
        assert standardize(F[0][0], 2) == expected

    def test_jordan_blocks(self):
        C1 = constant_matrix([[2, 1], [0, 2]])
        C2 = constant_matrix([[1, 1], [0, 1]])
        B = [[XiExpr.from_series(z(-1)), XiExpr.from_series(z(-2))],
             [XiExpr.from_series(TruncatedPuiseux({-1: 3, -3: 1})), XiExpr.from_series(z(-1))]]
        F = solve_negative_sylvester(C1, C2, B, 2)
        residual = _negative_residual(C1, C2, B, F, 2)
        assert all(e.is_zero() for row in residual for e in row)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_random_instances(self, seed):
        rng = random.Random(seed)
        p = rng.choice((2, 3))
        r1, r2 = rng.randint(1, 2), rng.randint(1, 2)
        C1, C2 = _random_triangular(rng, r1), _random_triangular(rng, r2)
        B = [[XiExpr.from_series(_laurent(rng, (-1, -2, -3))) for _ in range(r2)] for _ in range(r1)]
        F = solve_negative_sylvester(C1, C2, B, p)
        residual = _negative_residual(C1, C2, B, F, p)
        assert all(e.is_zero() for row in residual for e in row), seed


class TestStages:
    def test_block_triangularize_is_bidiagonal(self):
        L = MahlerOperator(2, [-1, TruncatedPuiseux.from_coefficients([0, 1]), 1])
        A = equation_to_companion(L, 16)
        form = block_triangularize(A, 8)
        assert form.blocks == (1, 1)
        theta = form.theta
        assert theta[1][0].is_zero()
        assert not theta[0][0].terms or set(theta[0][0].terms) == {Fraction(0)}
        assert not theta[1][1].terms or set(theta[1][1].terms) == {Fraction(0)}
        assert sum(m for _, m in form.slope_profile) == 2

    def test_clear_positive_offdiag(self):
        # H = [[1, m], [0, 1]] with 2 m - sigma(m) = z removes the z term above the diagonal
        theta = [[TruncatedPuiseux.constant(2), TruncatedPuiseux({-1: 1, 1: 1})],
                 [TruncatedPuiseux.zero(), TruncatedPuiseux.constant(1)]]
        H, cleared = clear_positive_offdiag(MahlerSystem(2, theta), (1, 1), 8)
        assert cleared.matrix[0][1] == TruncatedPuiseux({-1: 1})
        assert cleared.matrix[0][0] == TruncatedPuiseux.constant(2)
        gauged = matrix_multiply(matrix_multiply(matrix_sigma(H, 2), theta),
                                 [[TruncatedPuiseux.constant(1), -H[0][1]],
                                  [TruncatedPuiseux.zero(), TruncatedPuiseux.constant(1)]])
        assert matrix_is_zero(matrix_sub(gauged, cleared.matrix), 8)

    def test_constantify(self):
        theta = [[TruncatedPuiseux.constant(1), TruncatedPuiseux({-1: 1, 0: 5})],
                 [TruncatedPuiseux.zero(), TruncatedPuiseux.constant(1)]]
        F2, C = constantify(MahlerSystem(2, theta), (1, 1))
        assert C.to_list() == [[1, 5], [0, 1]]
        assert F2[0][0] == XiExpr.one()
        assert F2[1][0].is_zero()
        residual = _negative_residual(C, C, [[XiExpr({})] * 2] * 2, F2, 2)
        # sigma(F2) C - C F2 = Theta - C above the diagonal
        assert standardize(residual[0][1] - XiExpr.from_series(z(-1)), 2).is_zero()


class TestReduceToConstant:
    def test_constant_system(self):
        A = MahlerSystem(2, [[TruncatedPuiseux.constant(2)]])
        result = reduce_to_constant(A, 6)
        assert result.regular_singular
        assert result.C.to_list() == [[2]]
        assert [str(e) for e in result.exponents] == ["2"]
        assert result.block_profile == (1,)

    def test_constant_system_residual(self):
        A = MahlerSystem(2, [[TruncatedPuiseux.constant(2)]])
        report = verify_gauge(A, reduce_to_constant(A, 6), 6)
        assert report.zero
        assert report.to_dict()["nonzero"] == []

    @pytest.mark.slow
    def test_non_minimal_equation(self):
        A = equation_to_companion(non_minimal_operator(), 20)
        result = reduce_to_constant(A, 10)
        assert verify_gauge(A, result, 10).zero

    def test_cubic_with_degree_six_splitting_field(self):
        # y(z^8) + 2 y(z^4) + y(z^2) + y(z) = 0, constant companion matrix
        L = MahlerOperator(2, [1, 1, 2, 1])
        A = equation_to_companion(L)
        result = reduce_to_constant(A, 4)
        assert result.regular_singular
        assert len(set(result.exponents)) == 3
        assert all(e.degree == 3 for e in result.exponents)
        assert verify_gauge(A, result, 4).zero

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(50))
    def test_random_companion_systems(self, seed):
        rng = random.Random(seed)
        p = rng.choice((2, 3))
        L = _random_monic_operator(rng, p)
        A = equation_to_companion(L, 24)
        result = reduce_to_constant(A, 12)
        report = verify_gauge(A, result, 12)
        assert report.zero, (str(L), report.nonzero)

    @pytest.mark.slow
    def test_reductions_agree_up_to_constants(self):
        A = equation_to_companion(non_minimal_operator(), 24)
        first = reduce_to_constant(A, 8, guard=8)
        second = reduce_to_constant(A, 8, guard=12)
        defect = uniqueness_defect(A, first, second)
        assert all(e.is_zero() for row in defect for e in row)


class TestConstantSolutions:
    def test_diagonal_matrix(self):
        E = constant_solution_matrix(constant_matrix([[2, 0], [0, 3]]))
        assert [(str(c), j) for c, j in E[0][0].labels()] == [("2", 0)]
        assert [(str(c), j) for c, j in E[1][1].labels()] == [("3", 0)]
        assert E[0][1].is_zero()

    def test_jordan_block_carries_l(self):
        E = constant_solution_matrix(constant_matrix([[1, 1], [0, 1]]))
        assert [(str(c), j) for c, j in E[0][1].labels()] == [("1", 1)]


class TestSolutionBasis:
    def test_first_order_equation(self):
        basis = solution_basis(MahlerOperator(2, [-2, 1]), 6)
        assert len(basis) == 1
        assert [(str(c), j) for c, j in basis[0].labels()] == [("2", 0)]


class TestResidualReport:
    def test_to_dict(self):
        report = ResidualReport(False, Fraction(5), (("F1", 0, 1, "z"),))
        assert report.to_dict() == {
            "zero": False,
            "precision": "5",
            "nonzero": [{"part": "F1", "row": 0, "col": 1, "residual": "z"}],
        }
