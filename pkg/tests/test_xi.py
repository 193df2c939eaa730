#!/usr/bin/env python

import random
from fractions import Fraction

import pytest

from mahler_toolkit.errors import RecursionBudgetExceeded
from mahler_toolkit.operators import MahlerOperator
from mahler_toolkit.series import TruncatedPuiseux, z
from mahler_toolkit.xi import (
    EMPTY,
    GeneralizedSeries,
    HahnWindow,
    XiExpr,
    XiIndex,
    apply_operator,
    filtration_degree,
    hahn_window,
    standardize,
    xi_annihilator,
    xi_expand,
    xi_multiply,
    xi_scale,
    xi_shift,
    xi_sigma_inverse_sum,
)


def _index(alpha, lam, a):
    return XiIndex.create(alpha, lam, a)


BASIC = _index([0], [1], [1])


class TestXiIndex:
    @pytest.mark.parametrize("alpha, lam, a", [
        ([0, 1], [1], [1]),
        ([-1], [1], [1]),
        ([0], [0], [1]),
        ([0], [1], [0]),
    ])
    def test_invalid_indices(self, alpha, lam, a):
        with pytest.raises(ValueError):
            _index(alpha, lam, a)

    def test_standard_indices(self):
        assert BASIC.is_standard(2)
        assert not _index([0], [1], [2]).is_standard(2)
        assert _index([0], [1], [Fraction(3, 5)]).is_standard(2)

    def test_minimal_exponent(self):
        assert BASIC.minimal_exponent(2) == Fraction(-1, 2)
        assert _index([0, 0], [1, 1], [1, 1]).minimal_exponent(2) == Fraction(-3, 4)

    def test_label(self):
        assert BASIC.label() == "xi[alpha=(0); lambda=(1); a=(1)]"
        assert EMPTY.label() == "1"


class TestShift:
    def test_sigma_of_basic_xi(self):
        expected = XiExpr({BASIC: 1, EMPTY: z(-1)})
        assert xi_shift(BASIC, 1, 2) == expected

    def test_sigma_with_eigenvalue(self):
        omega = _index([0], [-2], [1])
        expected = XiExpr({omega: -2, EMPTY: TruncatedPuiseux.monomial(-2, -1)})
        assert XiExpr.xi(omega).sigma(2) == expected

    def test_inverse_shift(self):
        expected = XiExpr({BASIC: 1, EMPTY: TruncatedPuiseux.monomial(-1, Fraction(-1, 2))})
        assert xi_shift(BASIC, -1, 2) == expected

    def test_shift_round_trip(self):
        down = xi_shift(BASIC, -1, 2)
        assert down.sigma(2) == XiExpr.xi(BASIC)


class TestStandardize:
    def test_even_a_entry(self):
        result = standardize(XiExpr.xi(_index([0], [1], [2])), 2)
        assert result == XiExpr({BASIC: 1, EMPTY: z(-1)})

    def test_standard_index_is_unchanged(self):
        assert standardize(XiExpr.xi(BASIC), 2) == XiExpr.xi(BASIC)

    def test_budget(self):
        with pytest.raises(RecursionBudgetExceeded):
            standardize(XiExpr.xi(_index([0], [1], [2])), 2, budget=0)

    def test_generalized_series(self):
        g = GeneralizedSeries.from_xi(XiExpr.xi(_index([0], [1], [2])), 3, 1)
        result = standardize(g, 2)
        [(key, expr)] = result.items()
        assert key == (3, 1)
        assert expr == XiExpr({BASIC: 1, EMPTY: z(-1)})


class TestProducts:
    def test_square_of_basic_xi(self):
        square = xi_multiply(XiExpr.xi(BASIC), XiExpr.xi(BASIC), 2)
        expected = XiExpr({_index([0, 0], [1, 1], [1, 1]): 2, _index([0], [1], [2]): 1})
        assert square == expected
        assert filtration_degree(square) == 2

    def test_product_with_series(self):
        product = xi_multiply(XiExpr.from_series(z(-1)), XiExpr.xi(BASIC), 2)
        assert product == XiExpr({BASIC: z(-1)})

    def test_xi_times_xi_needs_multiply(self):
        with pytest.raises(TypeError):
            XiExpr.xi(BASIC) * XiExpr.xi(BASIC)


class TestSigmaInverseSums:
    def test_monomial_sum_is_a_xi(self):
        total = xi_sigma_inverse_sum(0, 1, XiExpr.from_series(z(-1)), 2)
        assert total == XiExpr.xi(BASIC)

    def test_zero_ratio(self):
        with pytest.raises(ValueError):
            xi_sigma_inverse_sum(0, 0, XiExpr.from_series(z(-1)), 2)

    def test_divergent_sum(self):
        with pytest.raises(ValueError):
            xi_sigma_inverse_sum(0, 1, XiExpr.from_series(z()), 2)


class TestAnnihilator:
    def test_basic_xi(self):
        L = xi_annihilator(BASIC, 2)
        assert L == MahlerOperator(2, [1, TruncatedPuiseux.from_coefficients([-1, -1]), z()])

    def test_annihilates_generalized_series(self):
        L = xi_annihilator(BASIC, 2)
        g = GeneralizedSeries.from_xi(XiExpr.xi(BASIC))
        assert standardize(apply_operator(L, g), 2).is_zero()


class TestWindows:
    def test_cutoff_window(self):
        window = HahnWindow.for_cutoff(BASIC, Fraction(1, 8), 2)
        assert window == HahnWindow(Fraction(-2), Fraction(-1, 8), 3)

    def test_expansion_of_basic_xi(self):
        expansion = xi_expand(BASIC, Fraction(1, 8), 2)
        assert expansion.terms == {Fraction(-1, 2): 1, Fraction(-1, 4): 1, Fraction(-1, 8): 1}

    def test_shift_identity_on_a_window(self):
        window = HahnWindow(Fraction(-3), Fraction(-1, 8), 3)
        lhs = hahn_window(xi_shift(BASIC, 1, 2), window, 2)
        rhs = hahn_window(XiExpr.xi(BASIC), window, 2) + hahn_window(XiExpr.from_series(z(-1)), window, 2)
        assert lhs == rhs

    def test_bad_cutoff(self):
        with pytest.raises(ValueError):
            HahnWindow.for_cutoff(BASIC, 0, 2)


def _random_index(rng, max_length, alphas, lams, a_entries):
    t = rng.randint(1, max_length)
    return _index(
        [rng.choice(alphas) for _ in range(t)],
        [rng.choice(lams) for _ in range(t)],
        [rng.choice(a_entries) for _ in range(t)],
    )


def _random_expr(rng, count, **index_options):
    expr = XiExpr({})
    for _ in range(count):
        coefficient = TruncatedPuiseux.monomial(rng.choice((1, -1, 2, -3)), rng.choice((0, -1)))
        expr = expr + XiExpr.xi(_random_index(rng, **index_options), coefficient)
    return expr


@pytest.mark.slow
class TestRandomIdentities:
    @pytest.mark.parametrize("seed", range(100))
    def test_standardize_is_idempotent_and_keeps_the_series(self, seed):
        rng = random.Random(seed)
        expr = _random_expr(
            rng, rng.randint(1, 3), max_length=3, alphas=(0, 1, 2), lams=(1, -1, 2, Fraction(1, 2)),
            a_entries=(1, 2, 3, 4, Fraction(1, 2), Fraction(3, 2)),
        )
        std = standardize(expr, 2)
        assert standardize(std, 2) == std
        window = HahnWindow(Fraction(-3), Fraction(-1, 64), 6)
        assert hahn_window(std, window, 2) == hahn_window(expr, window, 2)

    @pytest.mark.parametrize("seed", range(100))
    def test_shift_rescales_the_a_entries(self, seed):
        rng = random.Random(seed)
        p = rng.choice((2, 3))
        j = rng.choice((1, 2, -1))
        omega = _random_index(rng, 2, (0, 1, 2), (1, -1, 2), (1, 2, Fraction(1, 2)))
        window = HahnWindow(Fraction(-3), Fraction(-1, p ** 6), 6)
        expected = hahn_window(XiExpr.xi(xi_scale(omega, Fraction(p) ** j)), window, p)
        assert hahn_window(xi_shift(omega, j, p), window, p) == expected

    @pytest.mark.parametrize("seed", range(100))
    def test_product_matches_windowed_product(self, seed):
        rng = random.Random(seed)
        options = dict(max_length=2, alphas=(0, 1), lams=(1, -1, 2), a_entries=(1, 2, 3, 4))
        e1 = _random_expr(rng, rng.randint(1, 2), **options)
        e2 = _random_expr(rng, rng.randint(1, 2), **options)
        target = HahnWindow(Fraction(-3), Fraction(-1, 16), 4)
        # factors carry enough depth for every carry into the target window
        factor_window = HahnWindow(Fraction(-3), Fraction(0), 12)
        f1, f2 = hahn_window(e1, factor_window, 2), hahn_window(e2, factor_window, 2)
        assert hahn_window(xi_multiply(e1, e2, 2), target, 2) == f1.multiply(f2, target, 2)

    @pytest.mark.parametrize("seed", range(100))
    def test_sigma_inverse_sum_matches_partial_sums(self, seed):
        rng = random.Random(seed)
        p = rng.choice((2, 3))
        alpha = rng.choice((0, 1, 2))
        c = rng.choice((1, -1, 2, Fraction(1, 2)))
        b = rng.choice((1, -2, 3))
        gamma = rng.choice((0, 1, 2, 3))
        omega = EMPTY if gamma and rng.random() < 0.3 else _random_index(rng, 1, (0, 1), (1, -1, 2), (1, 2, 3))
        h = XiExpr.xi(omega, TruncatedPuiseux.monomial(b, -gamma))
        depth = 8
        window = HahnWindow(Fraction(-3), Fraction(-1, p ** depth), depth)
        reference = hahn_window(XiExpr({}), window, p)
        for k in range(1, depth + 9):
            term = TruncatedPuiseux.monomial(Fraction(k) ** alpha * Fraction(c) ** k * b, Fraction(-gamma, p ** k))
            reference = reference + hahn_window(XiExpr.xi(xi_scale(omega, Fraction(1, p ** k)), term), window, p)
        assert hahn_window(xi_sigma_inverse_sum(alpha, c, h, p), window, p) == reference
