"""Text and JSON forms of series, operators and xi expressions.

Series:     ``-z^-1 + 3*z + 6*z^2 + O(z^9)``
Operators:  ``(1-2*z) + (-1+2*z-z^2)*M + (z^2)*M^2 @ p=2``, M standing for Phi_p
Xi indices: ``xi[alpha=(0,1); lambda=(1,-2); a=(1,1/3)]`` or ``xi[(0,1);(1,-2);(1,1/3)]``
JSON documents carry ``"format": 1``.
"""

import json
import re
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from sympy import QQ, Add, Rational, Symbol, expand
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from mahler_toolkit.algebra import element_str, fraction_str, to_field
from mahler_toolkit.errors import ParseError
from mahler_toolkit.operators import MahlerOperator
from mahler_toolkit.series import TruncatedPuiseux
from mahler_toolkit.xi import EMPTY, GeneralizedSeries, XiExpr, XiIndex

FORMAT_VERSION = 1

Z = Symbol("z")
M = Symbol("M")

_TRANSFORMS = standard_transformations + (convert_xor,)
_ORDER = re.compile(r"\+?\s*O\(\s*(?P<inner>[^()]*(?:\([^()]*\))?[^()]*)\s*\)\s*$")
_P_SUFFIX = re.compile(r"@\s*p\s*=\s*(?P<p>\d+)\s*$")
_XI = re.compile(r"xi\[(?P<body>[^\]]*)\]")


def _sympify(text: str, symbols: Dict[str, Symbol]):
    try:
        return expand(parse_expr(text, local_dict=dict(symbols), transformations=_TRANSFORMS))
    except Exception as e:
        raise ParseError(f"cannot parse {text!r}: {e}") from e


def _rational(value, what: str) -> Fraction:
    if not value.is_Rational:
        raise ParseError(f"{what} must be rational, got {value}")
    value = Rational(value)
    return Fraction(int(value.p), int(value.q))


def _series_from_sympy(expr, K, precision=None) -> TruncatedPuiseux:
    terms: Dict[Fraction, object] = {}
    for term in Add.make_args(expr):
        if term == 0:
            continue
        coeff, exponent = term.as_coeff_exponent(Z)
        if coeff.free_symbols:
            raise ParseError(f"unexpected symbols in term {term}")
        e = _rational(exponent, "exponents")
        try:
            c = K.from_sympy(coeff)
        except Exception as err:
            raise ParseError(f"coefficient {coeff} is not in {K}") from err
        terms[e] = terms[e] + c if e in terms else c
    return TruncatedPuiseux(terms, precision, K)


# --- series ----------------------------------------------------------------------------------


def parse_series(text: str, K=QQ) -> TruncatedPuiseux:
    """Series literal; a trailing ``O(z^n)`` sets the precision."""
    text = text.strip()
    if not text:
        raise ParseError("empty series")
    precision = None
    match = _ORDER.search(text)
    if match:
        order = _series_from_sympy(_sympify(match.group("inner"), {"z": Z}), QQ)
        if len(order.terms) != 1:
            raise ParseError(f"bad order term O({match.group('inner')})")
        precision = next(iter(order.terms))
        text = text[: match.start()].strip() or "0"
    return _series_from_sympy(_sympify(text, {"z": Z}), K, precision)


def _power_text(e: Fraction) -> str:
    if e == 1:
        return "z"
    if e.denominator == 1:
        return f"z^{e.numerator}"
    return f"z^({e.numerator}/{e.denominator})"


def render_series(f: TruncatedPuiseux) -> str:
    parts = []
    for e, c in f.items():
        coeff = element_str(c, f.domain)
        if e == 0:
            parts.append(coeff)
        elif coeff in ("1", "-1"):
            parts.append(("-" if coeff == "-1" else "") + _power_text(e))
        else:
            parts.append(f"{coeff}*{_power_text(e)}")
    if f.precision is not None:
        parts.append(f"O({_power_text(f.precision)})" if f.precision else "O(1)")
    if not parts:
        return "0"
    return " + ".join(parts).replace("+ -", "- ")


def series_to_json(f: TruncatedPuiseux) -> dict:
    return {
        "terms": [[e.numerator, e.denominator, element_str(c, f.domain)] for e, c in f.items()],
        "precision": None if f.precision is None else fraction_str(f.precision),
    }


def series_from_json(data: dict, K=QQ) -> TruncatedPuiseux:
    try:
        terms = {Fraction(n, d): to_field(Fraction(c), K) for n, d, c in data["terms"]}
        precision = data.get("precision")
        return TruncatedPuiseux(terms, None if precision is None else Fraction(precision), K)
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise ParseError(f"bad series document: {e}") from e


# --- operators -------------------------------------------------------------------------------


def parse_operator(text: str, p: Optional[int] = None, K=QQ) -> MahlerOperator:
    text = text.strip()
    match = _P_SUFFIX.search(text)
    if match:
        p = int(match.group("p"))
        text = text[: match.start()].strip()
    if p is None:
        raise ParseError("operator needs p, either '@ p=...' or --p")
    expr = _sympify(text, {"z": Z, "M": M})
    grouped: Dict[int, object] = {}
    for term in Add.make_args(expr):
        if term == 0:
            continue
        rest, power = term.as_coeff_exponent(M)
        if rest.has(M) or not power.is_Integer or power < 0:
            raise ParseError(f"M must appear with a nonnegative integer power in {term}")
        grouped[int(power)] = grouped.get(int(power), 0) + rest
    if not grouped:
        raise ParseError("zero operator")
    order = max(grouped)
    coefficients = [_series_from_sympy(expand(grouped.get(i, 0)), K) for i in range(order + 1)]
    try:
        return MahlerOperator(p, coefficients)
    except ValueError as e:
        raise ParseError(str(e)) from e


def render_operator(L: MahlerOperator) -> str:
    parts = []
    for i, c in enumerate(L.coefficients):
        if c.is_exact and c.is_zero():
            continue
        power = "" if i == 0 else ("*M" if i == 1 else f"*M^{i}")
        parts.append(f"({render_series(c)}){power}")
    return (" + ".join(parts) or "0") + f" @ p={L.p}"


def operator_to_json(L: MahlerOperator) -> dict:
    return {"p": L.p, "coefficients": [series_to_json(c) for c in L.coefficients]}


def operator_from_json(data: dict, K=QQ) -> MahlerOperator:
    try:
        return MahlerOperator(int(data["p"]), [series_from_json(c, K) for c in data["coefficients"]])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad operator document: {e}") from e


# --- xi ----------------------------------------------------------------------------------------


def _tuple(text: str) -> List[str]:
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise ParseError(f"expected a parenthesised list, got {text!r}")
    inner = text[1:-1].strip()
    return [part.strip() for part in inner.split(",")] if inner else []


def parse_xi_index(text: str, K=QQ) -> XiIndex:
    text = text.strip()
    match = _XI.fullmatch(text)
    if not match:
        raise ParseError(f"not a xi index: {text!r}")
    fields = [part.strip() for part in match.group("body").split(";")]
    if len(fields) != 3:
        raise ParseError("a xi index has three fields: alpha, lambda, a")
    values = []
    for name, part in zip(("alpha", "lambda", "a"), fields):
        if "=" in part:
            key, part = (s.strip() for s in part.split("=", 1))
            if key != name:
                raise ParseError(f"expected field {name}, got {key}")
        values.append(_tuple(part))
    try:
        return XiIndex.create(
            [int(x) for x in values[0]],
            [Fraction(x) for x in values[1]],
            [Fraction(x) for x in values[2]],
            K,
        )
    except ValueError as e:
        raise ParseError(str(e)) from e


def parse_xi_expr(text: str, K=QQ) -> XiExpr:
    """Sums of series times xi indices, e.g. ``z^-1 + 2*z*xi[(0);(1);(1)]``."""
    indices: Dict[str, XiIndex] = {}

    def placeholder(match) -> str:
        name = f"X{len(indices)}"
        indices[name] = parse_xi_index(match.group(0), K)
        return name

    body = _XI.sub(placeholder, text.strip())
    symbols = {name: Symbol(name) for name in indices}
    expr = _sympify(body, {"z": Z, **symbols})
    grouped: Dict[XiIndex, object] = {}
    for term in Add.make_args(expr):
        if term == 0:
            continue
        found = [name for name, s in symbols.items() if term.has(s)]
        if len(found) > 1:
            raise ParseError(f"products of xi series are not literals: {term}")
        omega = indices[found[0]] if found else EMPTY
        rest = term
        if found:
            rest, power = term.as_coeff_exponent(symbols[found[0]])
            if power != 1:
                raise ParseError(f"xi series must appear linearly in {term}")
        grouped[omega] = grouped.get(omega, 0) + rest
    return XiExpr({omega: _series_from_sympy(expand(c), K) for omega, c in grouped.items()}, K)


def render_xi_index(omega: XiIndex, K=QQ) -> str:
    if not omega.length:
        return "1"
    alpha = ",".join(str(x) for x in omega.alpha)
    lam = ",".join(element_str(l, K) for l in omega.lam)
    a = ",".join(fraction_str(x) for x in omega.a)
    return f"xi[({alpha});({lam});({a})]"


def render_xi(expr: XiExpr) -> str:
    parts = []
    for omega, f in expr.items():
        if f.is_zero() and f.is_exact:
            continue
        if not omega.length:
            parts.append(render_series(f))
            continue
        label = render_xi_index(omega, expr.domain)
        if f.is_exact and f.terms == {Fraction(0): expr.domain.one}:
            parts.append(label)
        elif f.is_exact and len(f.terms) == 1 and 0 not in f.terms:
            parts.append(f"{render_series(f)}*{label}")
        else:
            parts.append(f"({render_series(f)})*{label}")
    return (" + ".join(parts) or "0").replace("+ -", "- ")


def render_generalized(g: GeneralizedSeries) -> str:
    parts = []
    for (c, j), expr in g.items():
        if expr.is_zero():
            continue
        label = []
        if c != g.domain.one:
            label.append(f"e[{element_str(c, g.domain)}]")
        if j:
            label.append("l" if j == 1 else f"l^{j}")
        body = render_xi(expr)
        parts.append("*".join(label + [f"({body})"]) if label else body)
    return " + ".join(parts) if parts else "0"


def xi_index_to_json(omega: XiIndex, K=QQ) -> dict:
    return {
        "alpha": list(omega.alpha),
        "lambda": [element_str(l, K) for l in omega.lam],
        "a": [fraction_str(x) for x in omega.a],
    }


def xi_to_json(expr: XiExpr) -> list:
    return [
        {"index": xi_index_to_json(omega, expr.domain), "coefficient": series_to_json(f)}
        for omega, f in expr.items()
    ]


def xi_from_json(data: list, K=QQ) -> XiExpr:
    try:
        terms = {}
        for entry in data:
            index = entry["index"]
            omega = XiIndex.create(index["alpha"], [Fraction(x) for x in index["lambda"]],
                                   [Fraction(x) for x in index["a"]], K)
            terms[omega] = series_from_json(entry["coefficient"], K)
        return XiExpr(terms, K)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad xi document: {e}") from e


def generalized_to_json(g: GeneralizedSeries) -> list:
    return [
        {"c": element_str(c, g.domain), "j": j, "expr": xi_to_json(expr)}
        for (c, j), expr in g.items()
        if not expr.is_zero()
    ]


# --- documents ----------------------------------------------------------------------------------


def document(payload: dict) -> str:
    """Versioned JSON document with stable key order."""
    return json.dumps({"format": FORMAT_VERSION, **payload}, indent=2, default=str)


def read_document(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}") from e
    if not isinstance(data, dict) or data.get("format") != FORMAT_VERSION:
        raise ParseError(f"expected a JSON object with format {FORMAT_VERSION}")
    return data


def parse_window(text: Optional[str]) -> Optional[Tuple[Fraction, Fraction]]:
    """``L,eps`` for a Hahn window."""
    if not text:
        return None
    try:
        lower, epsilon = (Fraction(part.strip()) for part in text.split(","))
    except ValueError as e:
        raise ParseError(f"window must be 'L,eps', got {text!r}") from e
    if epsilon <= 0:
        raise ParseError("window epsilon must be positive")
    return lower, epsilon
