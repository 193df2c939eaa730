#!/usr/bin/env python

import json
from fractions import Fraction

import pytest

from mahler_toolkit.errors import ParseError
from mahler_toolkit.formats import (
    document,
    generalized_to_json,
    operator_from_json,
    operator_to_json,
    parse_operator,
    parse_series,
    parse_window,
    parse_xi_expr,
    parse_xi_index,
    read_document,
    render_generalized,
    render_operator,
    render_series,
    render_xi,
    series_from_json,
    series_to_json,
)
from mahler_toolkit.series import TruncatedPuiseux, z
from mahler_toolkit.xi import EMPTY, GeneralizedSeries, XiExpr, XiIndex

BASIC = XiIndex.create([0], [1], [1])


class TestSeriesFormatting:
    def test_parse_with_order_term(self):
        f = parse_series("1 + 2*z - z^2 + O(z^3)")
        assert f == TruncatedPuiseux.from_coefficients([1, 2, -1], 3)

    def test_parse_puiseux_exponents(self):
        f = parse_series("-z^-1 + 3*z^(1/2)")
        assert f.is_exact
        assert f.terms == {Fraction(-1): -1, Fraction(1, 2): 3}

    def test_render(self):
        assert render_series(TruncatedPuiseux.from_coefficients([1, 2, -1], 3)) == "1 + 2*z - z^2 + O(z^3)"
        assert render_series(TruncatedPuiseux({-1: -1, Fraction(1, 2): 3})) == "-z^-1 + 3*z^(1/2)"
        assert render_series(TruncatedPuiseux.zero()) == "0"

    def test_order_one(self):
        f = parse_series("O(1)")
        assert f.is_zero()
        assert f.precision == 0
        assert render_series(f) == "O(1)"

    @pytest.mark.parametrize("text", ["", "1 + x", "1 + O(z^2 + z^3)", "1 +* z"])
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_series(text)

    def test_to_json(self):
        data = series_to_json(parse_series("1/2 - z^3 + O(z^5)"))
        assert data == {"terms": [[0, 1, "1/2"], [3, 1, "-1"]], "precision": "5"}

    def test_from_json(self):
        f = series_from_json({"terms": [[-1, 2, "3"]], "precision": None})
        assert f == TruncatedPuiseux.monomial(3, Fraction(-1, 2))

    def test_bad_json(self):
        with pytest.raises(ParseError):
            series_from_json({"terms": [[1]]})


class TestOperatorFormatting:
    def test_parse(self, rs_operator):
        assert rs_operator.p == 2
        assert rs_operator.order == 2
        assert rs_operator.coefficient(1) == z() - 1
        assert rs_operator.coefficient(2) == -2 * z()

    def test_render(self, rs_operator):
        assert render_operator(rs_operator) == "(1) + (-1 + z)*M + (-2*z)*M^2 @ p=2"

    def test_p_from_argument(self):
        assert parse_operator("1 + M", p=3).p == 3

    @pytest.mark.parametrize("text", ["1 + M", "M^-1 @ p=2", "0 @ p=2", "1 + M @ p=1"])
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse_operator(text)

    def test_json_document(self, rs_operator):
        data = operator_to_json(rs_operator)
        assert data["p"] == 2
        assert len(data["coefficients"]) == 3
        assert str(operator_from_json(data)) == str(rs_operator)

    def test_bad_json(self):
        with pytest.raises(ParseError):
            operator_from_json({"p": 2})


class TestXiFormatting:
    def test_named_fields(self):
        omega = parse_xi_index("xi[alpha=(0,1); lambda=(1,-2); a=(1,1/3)]")
        assert omega == XiIndex.create([0, 1], [1, -2], [1, Fraction(1, 3)])

    @pytest.mark.parametrize("text", [
        "xi[beta=(0);(1);(1)]",
        "xi[(0);(1)]",
        "xi[(0);(0);(1)]",
        "zeta[(0);(1);(1)]",
        "xi[0;(1);(1)]",
    ])
    def test_bad_indices(self, text):
        with pytest.raises(ParseError):
            parse_xi_index(text)

    def test_expression(self):
        expr = parse_xi_expr("z^-1 + xi[(0);(1);(1)]")
        assert expr.coefficient(EMPTY) == z(-1)
        assert expr.coefficient(BASIC) == TruncatedPuiseux.constant(1)
        assert render_xi(expr) == "z^-1 + xi[(0);(1);(1)]"

    def test_render_coefficients(self):
        assert render_xi(XiExpr({BASIC: 2 * z()})) == "2*z*xi[(0);(1);(1)]"
        assert render_xi(XiExpr({BASIC: 1 + z()})) == "(1 + z)*xi[(0);(1);(1)]"
        assert render_xi(XiExpr()) == "0"

    @pytest.mark.parametrize("text", [
        "xi[(0);(1);(1)]*xi[(0);(1);(2)]",
        "xi[(0);(1);(1)]^2",
    ])
    def test_nonlinear_literals(self, text):
        with pytest.raises(ParseError):
            parse_xi_expr(text)

    def test_generalized(self):
        g = GeneralizedSeries.from_xi(XiExpr.from_series(z()), 2, 1)
        assert render_generalized(g) == "e[2]*l*(z)"
        assert render_generalized(GeneralizedSeries()) == "0"
        assert generalized_to_json(g) == [{
            "c": "2",
            "j": 1,
            "expr": [{
                "index": {"alpha": [], "lambda": [], "a": []},
                "coefficient": {"terms": [[1, 1, "1"]], "precision": None},
            }],
        }]


class TestDocuments:
    def test_document_is_versioned(self):
        text = document({"command": "newton"})
        assert json.loads(text) == {"format": 1, "command": "newton"}
        assert read_document(text)["command"] == "newton"

    @pytest.mark.parametrize("text", ["{", "[1]", '{"format": 2}'])
    def test_read_errors(self, text):
        with pytest.raises(ParseError):
            read_document(text)

    def test_window(self):
        assert parse_window("-2, 1/8") == (Fraction(-2), Fraction(1, 8))
        assert parse_window(None) is None

    @pytest.mark.parametrize("text", ["1", "1,0", "a,b"])
    def test_window_errors(self, text):
        with pytest.raises(ParseError):
            parse_window(text)
