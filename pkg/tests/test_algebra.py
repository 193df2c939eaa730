#!/usr/bin/env python

import math
from fractions import Fraction

import pytest
from sympy import QQ

from mahler_toolkit.algebra import (
    AlgebraicNumber,
    constant_matrix,
    dunford_additive,
    dunford_multiplicative,
    eigen_structure,
    element_to_fraction,
    is_root_of_unity,
    mahler_measure,
    number_field_for,
    p_adic_valuation,
    roots_in_field,
    unify_fields,
    weil_height,
)
from mahler_toolkit.errors import UnsupportedSplitting


class TestAlgebraicNumber:
    def test_rational_label(self):
        q = AlgebraicNumber.rational(Fraction(3, 2))
        assert q.is_rational
        assert q.degree == 1
        assert str(q) == "3/2"
        assert q.to_json() == "3/2"

    def test_linear_minimal_polynomial_is_rational(self):
        assert AlgebraicNumber.root_of([-2, 1], 0) == AlgebraicNumber.rational(2)

    def test_reducible_minimal_polynomial(self):
        with pytest.raises(ValueError):
            AlgebraicNumber.root_of([-1, 0, 1], 0)

    def test_quadratic_label(self):
        i = AlgebraicNumber.root_of([1, 0, 1], 0)
        assert i.degree == 2
        assert not i.is_rational
        assert abs(abs(i.numeric()) - 1) < 1e-12

    def test_ordering_puts_rationals_first(self):
        labels = [AlgebraicNumber.root_of([1, 0, 1], 0), AlgebraicNumber.rational(2),
                  AlgebraicNumber.rational(-1)]
        ordered = sorted(labels, key=lambda a: a.sort_key())
        assert [str(a) for a in ordered[:2]] == ["-1", "2"]

    def test_element_to_fraction(self):
        assert element_to_fraction(QQ(3, 4)) == Fraction(3, 4)
        assert element_to_fraction(5) == Fraction(5)


class TestHeights:
    def test_weil_height_of_rationals(self):
        assert weil_height(Fraction(3, 2)) == pytest.approx(math.log(3))
        assert weil_height(Fraction(-1, 7)) == pytest.approx(math.log(7))
        assert weil_height(0) == 0.0
        assert weil_height(1) == 0.0

    def test_weil_height_of_sqrt2(self):
        sqrt2 = AlgebraicNumber.root_of([-2, 0, 1], 1)
        assert weil_height(sqrt2) == pytest.approx(math.log(2) / 2)

    def test_mahler_measure(self):
        assert mahler_measure([-2, 0, 1]) == pytest.approx(2.0)
        assert mahler_measure([1, 1]) == pytest.approx(1.0)

    @pytest.mark.parametrize("value, expected", [
        (1, 1),
        (-1, 2),
        (Fraction(1, 2), None),
        (2, None),
    ])
    def test_rational_roots_of_unity(self, value, expected):
        assert is_root_of_unity(value) == expected

    def test_cyclotomic_roots_of_unity(self):
        assert is_root_of_unity(AlgebraicNumber.root_of([1, 0, 1], 0)) == 4
        assert is_root_of_unity(AlgebraicNumber.root_of([1, 1, 1], 0)) == 3
        assert is_root_of_unity(AlgebraicNumber.root_of([-2, 0, 1], 0)) is None

    def test_zero_is_rejected(self):
        with pytest.raises(ValueError):
            is_root_of_unity(0)

    def test_p_adic_valuation(self):
        assert p_adic_valuation(12, 2) == 2
        assert p_adic_valuation(Fraction(1, 4), 2) == -2
        assert p_adic_valuation(Fraction(5, 3), 2) == 0
        assert p_adic_valuation(0, 2) is None


class TestFields:
    def test_roots_over_q(self):
        assert roots_in_field([-1, 0, 1]) == [-1, 1]

    def test_roots_that_do_not_split(self):
        with pytest.raises(UnsupportedSplitting):
            roots_in_field([1, 0, 1], QQ)

    def test_number_field_for_rational_roots(self):
        assert number_field_for([[-1, 0, 1], [2, 1]]) == QQ

    def test_number_field_for_gaussian_roots(self):
        K = number_field_for([[1, 0, 1]])
        assert K.is_AlgebraicField
        assert len(roots_in_field([1, 0, 1], K)) == 2

    def test_extension_degree_bound(self):
        with pytest.raises(UnsupportedSplitting):
            number_field_for([[-2, 0, 0, 1]], max_degree=2)

    def test_cubic_with_full_galois_group_splits(self):
        # discriminant -23, splitting field of degree 6
        cubic = [1, 1, 2, 1]
        K = number_field_for([cubic])
        assert K.mod.degree() == 6
        roots = roots_in_field(cubic, K)
        assert len(roots) == 3
        assert roots[0] != roots[1] and roots[1] != roots[2] and roots[0] != roots[2]
        assert element_to_fraction(roots[0] + roots[1] + roots[2]) == -2
        assert element_to_fraction(roots[0] * roots[1] * roots[2]) == -1

    def test_cubic_splitting_field_over_bound(self):
        with pytest.raises(UnsupportedSplitting):
            number_field_for([[1, 1, -2, 1]], max_degree=5)

    def test_unify_fields(self):
        K = number_field_for([[1, 0, 1]])
        assert unify_fields(QQ, QQ) == QQ
        assert unify_fields(QQ, K) == K
        L = number_field_for([[-2, 0, 1]])
        with pytest.raises(UnsupportedSplitting):
            unify_fields(K, L)


class TestMatrices:
    def test_additive_decomposition_of_jordan_block(self):
        M = constant_matrix([[2, 1], [0, 2]])
        D, N = dunford_additive(M)
        assert D.to_list() == [[2, 0], [0, 2]]
        assert N.to_list() == [[0, 1], [0, 0]]

    def test_multiplicative_decomposition(self):
        M = constant_matrix([[2, 1], [0, 2]])
        U, D = dunford_multiplicative(M)
        assert D.to_list() == [[2, 0], [0, 2]]
        assert [[element_to_fraction(c) for c in row] for row in U.to_list()] == [[1, Fraction(1, 2)], [0, 1]]
        assert (U * D).to_list() == M.to_list()

    def test_multiplicative_decomposition_needs_invertible(self):
        with pytest.raises(ValueError):
            dunford_multiplicative(constant_matrix([[0, 1], [0, 0]]))

    def test_eigen_structure(self):
        structure = eigen_structure(constant_matrix([[1, 0], [0, -1]]))
        assert structure.field == QQ
        assert [(str(c), m) for c, m in structure.spectrum] == [("-1", 1), ("1", 1)]
        assert structure.nilpotent.is_zero_matrix
