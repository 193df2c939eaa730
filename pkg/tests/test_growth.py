#!/usr/bin/env python

import math
from fractions import Fraction

import pytest

from mahler_toolkit.config import config
from mahler_toolkit.errors import InsufficientData, PrecisionLoss, UnsupportedSplitting
from mahler_toolkit.growth import (
    GrowthClass,
    classify_by_roots,
    classify_empirical,
    classify_generalized,
    classify_series,
    coefficient_heights,
    denominator_from_operator,
    exponent_height,
    inverse_pullback,
    mahler_denominator_candidate,
    plot_data,
    pullback,
    pullback_parameters,
    purity_report,
)
from mahler_toolkit.operators import GuessResult, MahlerOperator
from mahler_toolkit.series import TruncatedPuiseux, z
from mahler_toolkit.xi import EMPTY, GeneralizedSeries, XiExpr, XiIndex


def _guess(*a0):
    operator = MahlerOperator(2, [TruncatedPuiseux.from_coefficients(a0), -1])
    return GuessResult(operator, 1, len(a0) - 1, Fraction(40))


def _constant_heights(count, value=1.0):
    return [(Fraction(n), value) for n in range(count)]


class TestHeights:
    @pytest.mark.parametrize("gamma, expected", [
        (Fraction(-3, 2), 3),
        (Fraction(0), 1),
        (5, 5),
        (Fraction(2, 7), 7),
    ])
    def test_exponent_height(self, gamma, expected):
        assert exponent_height(gamma) == expected

    def test_truncated_series(self):
        heights = coefficient_heights(TruncatedPuiseux.from_coefficients([1, 2, 0], 3))
        assert [g for g, _ in heights] == [0, 1, 2]
        assert [h for _, h in heights] == pytest.approx([0.0, math.log(2), 0.0])

    def test_exact_series_stops_after_last_term(self):
        heights = coefficient_heights(TruncatedPuiseux.from_coefficients([1, 1]))
        assert [g for g, _ in heights] == [0, 1]

    def test_stop_beyond_precision(self):
        with pytest.raises(PrecisionLoss):
            coefficient_heights(TruncatedPuiseux.from_coefficients([1, 2], 3), stop=5)

    def test_generalized_needs_p(self):
        with pytest.raises(ValueError):
            coefficient_heights(GeneralizedSeries.from_xi(XiExpr.from_series(z())))

    def test_plot_data(self):
        text = plot_data([(Fraction(0), 0.0), (Fraction(1, 2), 1.5)])
        assert text == "gamma\theight\n0\t0\n1/2\t1.5\n"


class TestGrowthClass:
    def test_rank_and_satisfies(self):
        cls = GrowthClass("C3", "empirical")
        assert cls.rank == 3
        assert cls.satisfies(2) is True
        assert cls.satisfies(3) is True
        assert cls.satisfies(4) is False

    def test_violation_overrides_rank(self):
        cls = GrowthClass("C5", "empirical", violations=("C4",))
        assert cls.satisfies(4) is False
        assert cls.satisfies(5) is True

    def test_unknown_is_undecided(self):
        cls = GrowthClass("UNKNOWN", "empirical")
        assert cls.rank == 0
        assert cls.satisfies(1) is None

    def test_to_dict(self):
        cls = GrowthClass("C2", "certified-by-roots", {"roots": []}, (Fraction(0), Fraction(9, 2)))
        assert cls.to_dict() == {
            "class": "C2",
            "mode": "certified-by-roots",
            "violations": [],
            "omega_visible": None,
            "evidence": {"roots": []},
            "sample_range": ["0", "9/2"],
        }


class TestClassifyEmpirical:
    def test_bounded_heights(self):
        result = classify_empirical(_constant_heights(100), 0.05, 2.0)
        assert result.label == "C5"
        assert result.mode == "empirical"
        assert result.omega_visible is None
        assert result.sample_range == (Fraction(0), Fraction(99))

    def test_violations_push_to_log_regime(self):
        result = classify_empirical(_constant_heights(100), 0.05, 2.0, violations=("C4", "C5"))
        assert result.label == "C3"
        assert result.omega_visible is True
        assert result.evidence["fits"]["C5"] == {"skipped": "violated"}
        assert result.satisfies(4) is False

    def test_polynomial_growth_is_unknown(self):
        heights = [(Fraction(n), float(n) ** 3) for n in range(100)]
        result = classify_empirical(heights, 0.05, 2.0)
        assert result.label == "UNKNOWN"
        assert result.satisfies(1) is None

    def test_too_few_samples(self):
        with pytest.raises(InsufficientData):
            classify_empirical(_constant_heights(10))

    def test_configuration_does_not_reach_the_fit(self, monkeypatch):
        monkeypatch.setattr(config, "outlier_fraction", 0.5)
        monkeypatch.setattr(config, "envelope_slack", 100.0)
        heights = [(Fraction(n), float(n) ** 3) for n in range(100)]
        result = classify_empirical(heights)
        # 97 samples with H(gamma) >= 3, 5% of them may miss
        assert result.evidence["allowed_misses"] == 4
        assert result.label == "UNKNOWN"


class TestClassifySeries:
    def test_constant_coefficients(self):
        f = TruncatedPuiseux.from_coefficients([1] * 100, 100)
        result = classify_series(f, 2, outlier_fraction=0.05, slack=2.0)
        assert result.label == "C5"
        assert "p_power_valuations" not in result.evidence

    def test_generalized_takes_worst_part(self):
        f = TruncatedPuiseux.from_coefficients([1] * 100, 100)
        result, parts = classify_generalized(f, 2, outlier_fraction=0.05, slack=2.0)
        assert result.label == "C5"
        assert len(parts) == 1


class TestDenominators:
    def test_root_off_the_unit_circle(self):
        report = denominator_from_operator(_guess(1, -2))
        assert report.polynomial == (Fraction(-1, 2), Fraction(1))
        assert not report.minimality_checked
        assert classify_by_roots(report, 2).label == "C1"

    def test_roots_of_unity_prime_to_p(self):
        report = denominator_from_operator(_guess(1, 0, -1))
        assert [f.order for f in report.factors] == [1, 2]
        assert classify_by_roots(report, 3).label == "C2"

    def test_only_one_root_of_order_p(self):
        report = denominator_from_operator(_guess(1, 1))
        assert report.factors[0].order == 2
        assert report.factors[0].in_p_roots(2)
        result = classify_by_roots(report, 2)
        assert result.label == "C3"
        assert result.evidence["basis"] == "via candidate multiple"

    def test_mixed_roots_fall_to_c2(self):
        report = denominator_from_operator(_guess(1, 0, -1))
        assert classify_by_roots(report, 2).label == "C2"

    def test_inexact_a0(self):
        operator = MahlerOperator(2, [TruncatedPuiseux.from_coefficients([1, 1], 5), -1])
        with pytest.raises(UnsupportedSplitting):
            denominator_from_operator(GuessResult(operator, 1, 1, Fraction(5)))

    def test_non_integral_exponents(self):
        report = mahler_denominator_candidate(TruncatedPuiseux({Fraction(1, 2): 1}, 10), p=2)
        assert report.zero
        assert report.to_dict()["polynomial"] is None
        assert classify_by_roots(report, 2).label == "UNKNOWN"


class TestPullback:
    def test_series(self):
        assert pullback(z(), 3, 1, 2) == z(6)
        assert inverse_pullback(z(6), 3, 1, 2) == z()

    def test_operator_keeps_p(self):
        L = pullback(MahlerOperator(2, [z(), 1]), 3, 0)
        assert L.p == 2
        assert L.coefficient(0) == z(3)

    def test_nu_must_be_prime_to_p(self):
        with pytest.raises(ValueError):
            pullback(z(), 2, 0, 2)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            pullback(z(), 1, -1, 2)

    def test_log_shifts(self):
        g = GeneralizedSeries.from_xi(XiExpr.from_series(z()), 2, 1)
        pulled = pullback(g, 1, 1, 2)
        assert [(str(c), j) for c, j in pulled.labels()] == [("2", 0), ("2", 1)]
        parts = {j: expr.coefficient(EMPTY) for (_, j), expr in pulled.items()}
        assert parts == {0: TruncatedPuiseux.monomial(2, 2), 1: TruncatedPuiseux.monomial(2, 2)}
        assert (inverse_pullback(pulled, 1, 1, 2) - g).is_zero()

    def test_parameters_clear_denominators(self):
        omega = XiIndex.create([0], [1], [Fraction(1, 6)])
        g = GeneralizedSeries.from_xi(XiExpr.xi(omega))
        assert pullback_parameters(g, 2) == (3, 1)

    def test_parameters_of_laurent_series(self):
        g = GeneralizedSeries.from_xi(XiExpr.from_series(z(-1) + z(3)))
        assert pullback_parameters(g, 2) == (1, 0)


class TestPurity:
    def test_constant_solution(self):
        f = TruncatedPuiseux.from_coefficients([1], 100)
        report = purity_report(f, operator=MahlerOperator(2, [-1, 1]), precision=80)
        assert report.series_class.label == "C5"
        assert (report.nu, report.k) == (1, 0)
        assert len(report.basis) == 1
        data = report.to_dict()
        assert data["pullback"] == {"nu": 1, "k": 0}
        assert data["denominator"] is None
