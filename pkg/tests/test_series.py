#!/usr/bin/env python

from fractions import Fraction

import pytest

from mahler_toolkit.errors import (
    DivisionByZeroSeries,
    IndeterminateValuation,
    PrecisionLoss,
    SingularGauge,
)
from mahler_toolkit.series import (
    TruncatedPuiseux,
    constant_series_matrix,
    matrix_inverse,
    matrix_multiply,
    series_from_rational,
    z,
)


def _series(coeffs, precision=None, start=0):
    return TruncatedPuiseux.from_coefficients(coeffs, precision, start)


class TestArithmetic:
    def test_addition_keeps_smallest_precision(self):
        total = _series([1, 1, 0], 3) + _series([1], 2)
        assert total.precision == 2
        assert total == _series([2, 1], 2)

    def test_cancellation_drops_terms(self):
        assert (z() - z()).is_zero()

    def test_multiplication(self):
        one_plus_z = _series([1, 1])
        assert one_plus_z * one_plus_z == _series([1, 2, 1])

    def test_truncated_multiplication_precision(self):
        product = _series([1, 1], 3) * _series([0, 1], 4)
        assert product.precision == 4
        assert product == _series([0, 1, 1], 4)

    def test_inverse_of_one_plus_z(self):
        inverse = _series([1, 1]).inverse(5)
        assert inverse == _series([1, -1, 1, -1, 1], 5)

    def test_inverse_of_monomial_is_exact(self):
        assert z(2).inverse() == z(-2)

    def test_inverse_loses_twice_the_valuation(self):
        f = TruncatedPuiseux({1: 1, 2: 1}, 6)
        assert f.inverse().precision == 4

    def test_scalar_division(self):
        assert _series([2, 4]) / 2 == _series([1, 2])
        with pytest.raises(DivisionByZeroSeries):
            _series([1]) / 0

    def test_series_from_rational(self):
        geometric = series_from_rational(_series([1]), _series([1, -1]), 4)
        assert geometric == _series([1, 1, 1, 1], 4)

    def test_power(self):
        assert _series([1, 1]) ** 3 == _series([1, 3, 3, 1])


class TestMahlerSubstitution:
    def test_sigma(self):
        f = _series([1, 2], 3)
        assert f.sigma(2) == TruncatedPuiseux({0: 1, 2: 2}, 6)

    def test_inverse_sigma(self):
        assert z(2).sigma(2, -1) == z()

    def test_puiseux_exponents(self):
        half = z(Fraction(1, 2))
        assert half.ramification == 2
        assert str(half) == "z^(1/2)"
        assert (half * half) == z()

    def test_non_positive_substitution(self):
        with pytest.raises(ValueError):
            z().mahler_substitute(0)


class TestValuation:
    def test_coefficient_beyond_precision(self):
        with pytest.raises(PrecisionLoss):
            _series([1, 1], 2).coefficient(2)

    def test_exact_zero_has_no_valuation(self):
        with pytest.raises(DivisionByZeroSeries):
            TruncatedPuiseux.zero().valuation()

    def test_truncated_zero_is_indeterminate(self):
        with pytest.raises(IndeterminateValuation):
            TruncatedPuiseux.zero(5).valuation()

    def test_zero_inverse(self):
        with pytest.raises(DivisionByZeroSeries):
            TruncatedPuiseux.zero().inverse()

    def test_split_at_zero(self):
        negative, constant, positive = _series([-1, 2, 3], 3, start=-1).split_at_zero()
        assert negative == z(-1) * -1
        assert constant == 2
        assert positive == TruncatedPuiseux({1: 3}, 3)

    def test_agreement(self):
        assert _series([1, 1, 5], 3).agrees_with(_series([1, 1]), 2)
        assert not _series([1, 1, 5], 3).agrees_with(_series([1, 1]), 3)


class TestRendering:
    def test_str(self):
        assert str(_series([1, 1], 2)) == "1 + z + O(z^2)"
        assert str(_series([1, -1])) == "1 - z"
        assert str(TruncatedPuiseux.zero()) == "0"


class TestMatrices:
    def test_diagonal_inverse(self):
        A = [[z(), TruncatedPuiseux.zero()], [TruncatedPuiseux.zero(), TruncatedPuiseux.constant(2)]]
        inverse = matrix_inverse(A)
        assert inverse[0][0] == z(-1)
        assert inverse[1][1] == TruncatedPuiseux.constant(Fraction(1, 2))
        assert inverse[0][1].is_zero()

    def test_inverse_times_matrix(self):
        A = constant_series_matrix([[1, 2], [3, 4]])
        product = matrix_multiply(A, matrix_inverse(A))
        assert product[0][0] == TruncatedPuiseux.constant(1)
        assert product[0][1].is_zero()
        assert product[1][0].is_zero()
        assert product[1][1] == TruncatedPuiseux.constant(1)

    def test_singular_matrix(self):
        with pytest.raises(SingularGauge):
            matrix_inverse(constant_series_matrix([[1, 1], [1, 1]]))
