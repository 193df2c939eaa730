"""Built-in equations, their reference series, and the check table behind ``verify-paper``."""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Tuple

from mahler_toolkit.algebra import element_to_fraction, p_adic_valuation
from mahler_toolkit.errors import MahlerError
from mahler_toolkit.formats import parse_operator, parse_series, render_xi
from mahler_toolkit.growth import purity_report
from mahler_toolkit.operators import (
    MahlerOperator,
    equation_to_companion,
    guess_minimal_operator,
    laurent_solution,
    newton_polygon,
    normalize,
    solve_inhomogeneous,
)
from mahler_toolkit.reduction import reduce_to_constant, verify_gauge
from mahler_toolkit.series import TruncatedPuiseux
from mahler_toolkit.xi import XiExpr, XiIndex, standardize

logger = logging.getLogger(__name__)

RS_EQUATION = "1 + (z-1)*M - 2*z*M^2 @ p=2"
NON_MINIMAL_EQUATION = "(1-2*z) + (-1+2*z-z^2+3*z^3-3*z^4)*M + (z^2-3*z^3+3*z^4)*M^2 @ p=2"
G_EQUATION = "1 - 1/2*(z-1)*M - 1/2*z*M^2 @ p=2"

LAURENT_COEFFICIENTS = {-1: -1, 1: 3, 2: 6, 3: 6, 4: 21, 5: 21, 6: 60, 7: 99, 8: 234}


def rs_operator() -> MahlerOperator:
    return parse_operator(RS_EQUATION)


def non_minimal_operator() -> MahlerOperator:
    return parse_operator(NON_MINIMAL_EQUATION)


def g_operator() -> MahlerOperator:
    return parse_operator(G_EQUATION)


def rudin_shapiro(n: int) -> int:
    """(-1) to the number of (overlapping) 11 blocks in the binary digits of n."""
    digits = bin(n)[2:]
    blocks = sum(1 for i in range(len(digits) - 1) if digits[i:i + 2] == "11")
    return -1 if blocks % 2 else 1


def rudin_shapiro_series(precision: int) -> TruncatedPuiseux:
    return TruncatedPuiseux.from_coefficients([rudin_shapiro(n) for n in range(precision)], precision)


def non_minimal_laurent(precision: int = 9) -> TruncatedPuiseux:
    """The Laurent solution -z^-1 + 3z + 6z^2 + ... of the non-minimal equation."""
    return laurent_solution(non_minimal_operator(), -1, -1, precision)


def g_series(precision: int) -> TruncatedPuiseux:
    """Series solution of the g equation, right side (f_RS(z) - f_RS(z^4)) / (2z)."""
    f = rudin_shapiro_series(precision + 2)
    rhs = (f - f.sigma(2, 2)).shift(-1).scale(Fraction(1, 2))
    return solve_inhomogeneous(g_operator(), rhs, precision)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _check_exponents() -> Check:
    exponents = sorted(e.fast_path for e in newton_polygon(rs_operator()).exponents if e.is_rational)
    return Check("rs exponents", exponents == [Fraction(-1, 2), Fraction(1)],
                 ", ".join(str(e) for e in exponents))


def _check_xi_shift() -> Check:
    xi = XiExpr.xi(XiIndex.create([0], [-2], [1]))
    lhs = standardize(xi.sigma(2), 2)
    rhs = standardize(xi * -2 - TruncatedPuiseux.monomial(2, -1), 2)
    return Check("xi(z^2) = -2 xi - 2/z", lhs == rhs, render_xi(lhs))


def _check_rs_residual(precision: int) -> Check:
    A = equation_to_companion(rs_operator(), 2 * precision)
    result = reduce_to_constant(A, precision)
    report = verify_gauge(A, result, precision)
    return Check("rs gauge residual", report.zero, f"checked below z^{report.precision}")


def _check_g_start() -> Check:
    g = g_series(4)
    values = (element_to_fraction(g.coefficient(0)), element_to_fraction(g.coefficient(1)))
    passed = values == (Fraction(1, 3), Fraction(5, 6))
    return Check("g_0 and g_1", passed, f"{values[0]}, {values[1]}")


def _check_g_valuations(top: int) -> Check:
    g = g_series(2 ** top + 1)
    found = [p_adic_valuation(element_to_fraction(g.coefficient(2 ** n)), 2) for n in range(1, top + 1)]
    expected = [n + 1 for n in range(1, top + 1)]
    return Check("v_2(g_(2^n)) = n + 1", found == expected, ",".join(str(v) for v in found))


def _check_laurent() -> Check:
    y = non_minimal_laurent(9)
    found = {e: element_to_fraction(y.coefficient(e)) for e in LAURENT_COEFFICIENTS}
    passed = all(found[e] == c for e, c in LAURENT_COEFFICIENTS.items()) and y.coefficient(0) == 0
    return Check("non-minimal Laurent coefficients", passed,
                 ", ".join(str(found[e]) for e in sorted(found)))


def _check_standardization() -> Check:
    lhs = standardize(XiExpr.xi(XiIndex.create([0], [1], [2])), 2)
    rhs = XiExpr.xi(XiIndex.create([0], [1], [1])) + TruncatedPuiseux.monomial(1, -1)
    return Check("standardization identity", lhs == standardize(rhs, 2), render_xi(lhs))


def _check_guessing() -> Check:
    rs = guess_minimal_operator(rudin_shapiro_series(64), 2, 2, 2).operator
    laurent = guess_minimal_operator(non_minimal_laurent(96), 2, 4, 2).operator
    passed = rs == normalize(rs_operator()) and laurent == normalize(non_minimal_operator())
    return Check("guessing recovers both equations", passed, f"{rs}; {laurent}")


def _check_purity(series_precision: int, basis_precision: int) -> Check:
    report = purity_report(rudin_shapiro_series(series_precision), 2, max_order=2, max_degree=2,
                           precision=basis_precision)
    a = report.agreement
    passed = a.get(3) is True and a.get(4) is False and a.get(5) is False
    return Check("purity contrast", passed,
                 "; ".join(f"C{r}: {a[r]}" for r in sorted(a)))


def verify_paper(precision: int = 12, top: int = 10, series_precision: int = 1024,
                 basis_precision: int = 80) -> List[Check]:
    """Run every reference check; failures are reported, not raised."""
    checks: List[Tuple[str, Callable[[], Check]]] = [
        ("rs exponents", _check_exponents),
        ("xi shift", _check_xi_shift),
        ("rs gauge residual", lambda: _check_rs_residual(precision)),
        ("g_0 and g_1", _check_g_start),
        ("g valuations", lambda: _check_g_valuations(top)),
        ("non-minimal Laurent coefficients", _check_laurent),
        ("standardization identity", _check_standardization),
        ("guessing", _check_guessing),
        ("purity contrast", lambda: _check_purity(series_precision, basis_precision)),
    ]
    results = []
    for name, check in checks:
        try:
            outcome = check()
        except MahlerError as e:
            outcome = Check(name, False, f"{type(e).__name__}: {e}")
        logger.info("%s: %s", outcome.name, "pass" if outcome.passed else "FAIL")
        results.append(outcome)
    return results


def check_table(checks: List[Check]) -> str:
    width = max((len(c.name) for c in checks), default=4)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for c in checks:
        lines.append(f"{c.name.ljust(width)}  {'pass' if c.passed else 'FAIL':6}  {c.detail}")
    return "\n".join(lines)


def series_literal(text: Optional[str], precision: int) -> TruncatedPuiseux:
    """Named reference series (rs, g, laurent) or a literal."""
    named = {
        "rs": lambda: rudin_shapiro_series(precision),
        "g": lambda: g_series(precision),
        "laurent": lambda: non_minimal_laurent(precision),
    }
    key = (text or "").strip().lower()
    if key in named:
        return named[key]()
    return parse_series(text or "")
