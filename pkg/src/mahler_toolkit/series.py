"""Truncated Puiseux series and matrices of them.

A ``TruncatedPuiseux`` stores finitely many nonzero terms and a precision
``N``: coefficients at exponents >= N are unknown. ``precision=None`` marks a
series that is known exactly (a Laurent polynomial in some z^(1/k)).
"""

import logging
import math
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from sympy import QQ

from mahler_toolkit.algebra import element_str, to_field, unify_fields
from mahler_toolkit.errors import (
    DivisionByZeroSeries,
    IndeterminateValuation,
    PrecisionLoss,
    SingularGauge,
)

logger = logging.getLogger(__name__)

SeriesMatrix = List[List["TruncatedPuiseux"]]


def _min_precision(*values: Optional[Fraction]) -> Optional[Fraction]:
    known = [v for v in values if v is not None]
    return min(known) if known else None


def _is_scalar(value) -> bool:
    return not isinstance(value, TruncatedPuiseux)


class TruncatedPuiseux:
    __slots__ = ("terms", "precision", "domain")

    def __init__(self, terms: Optional[Mapping] = None, precision=None, domain=QQ):
        precision = None if precision is None else Fraction(precision)
        clean = {}
        for e, c in (terms or {}).items():
            e = Fraction(e)
            if precision is not None and e >= precision:
                continue
            c = to_field(c, domain)
            if c:
                clean[e] = clean.get(e, domain.zero) + c
        self.terms: Dict[Fraction, object] = {e: c for e, c in clean.items() if c}
        self.precision: Optional[Fraction] = precision
        self.domain = domain

    @classmethod
    def _make(cls, terms: Dict, precision: Optional[Fraction], domain) -> "TruncatedPuiseux":
        obj = cls.__new__(cls)
        obj.terms = terms
        obj.precision = precision
        obj.domain = domain
        return obj

    @classmethod
    def zero(cls, precision=None, domain=QQ) -> "TruncatedPuiseux":
        return cls({}, precision, domain)

    @classmethod
    def constant(cls, c, domain=QQ) -> "TruncatedPuiseux":
        return cls({Fraction(0): c}, None, domain)

    @classmethod
    def monomial(cls, c, exponent, domain=QQ) -> "TruncatedPuiseux":
        return cls({Fraction(exponent): c}, None, domain)

    @classmethod
    def from_coefficients(cls, coeffs: Sequence, precision=None, start=0, step=1, domain=QQ):
        """Series sum coeffs[i] z^(start + i*step)."""
        start, step = Fraction(start), Fraction(step)
        return cls({start + i * step: c for i, c in enumerate(coeffs)}, precision, domain)

    @property
    def is_exact(self) -> bool:
        return self.precision is None

    @property
    def ramification(self) -> int:
        k = 1
        for e in self.terms:
            k = k * e.denominator // math.gcd(k, e.denominator)
        return k

    def is_zero(self) -> bool:
        """True when every known coefficient vanishes."""
        return not self.terms

    def lower_bound(self) -> Optional[Fraction]:
        """Lowest exponent that may be nonzero; None for the exact zero series."""
        if self.terms:
            return min(self.terms)
        return self.precision

    def valuation(self) -> Fraction:
        if self.terms:
            return min(self.terms)
        if self.is_exact:
            raise DivisionByZeroSeries("the zero series has no valuation")
        raise IndeterminateValuation(
            f"all coefficients vanish below precision {self.precision}"
        )

    def leading_coefficient(self):
        return self.terms[self.valuation()]

    def coefficient(self, exponent):
        exponent = Fraction(exponent)
        if self.precision is not None and exponent >= self.precision:
            raise PrecisionLoss(f"coefficient of z^{exponent} is beyond precision {self.precision}")
        return self.terms.get(exponent, self.domain.zero)

    def items(self) -> List[Tuple[Fraction, object]]:
        return sorted(self.terms.items())

    def convert(self, K) -> "TruncatedPuiseux":
        if K == self.domain:
            return self
        return TruncatedPuiseux._make(
            {e: to_field(c, K) for e, c in self.terms.items()}, self.precision, K
        )

    def _coerce(self, other) -> "TruncatedPuiseux":
        if _is_scalar(other):
            return TruncatedPuiseux.constant(other, self.domain)
        return other

    def _aligned(self, other) -> Tuple["TruncatedPuiseux", "TruncatedPuiseux"]:
        other = self._coerce(other)
        K = unify_fields(self.domain, other.domain)
        return self.convert(K), other.convert(K)

    def truncate(self, precision) -> "TruncatedPuiseux":
        N = _min_precision(self.precision, Fraction(precision))
        return TruncatedPuiseux._make(
            {e: c for e, c in self.terms.items() if e < N}, N, self.domain
        )

    def shift(self, exponent) -> "TruncatedPuiseux":
        """Multiply by z^exponent."""
        exponent = Fraction(exponent)
        precision = None if self.precision is None else self.precision + exponent
        return TruncatedPuiseux._make(
            {e + exponent: c for e, c in self.terms.items()}, precision, self.domain
        )

    def scale(self, c) -> "TruncatedPuiseux":
        c = to_field(c, self.domain)
        if not c:
            return TruncatedPuiseux._make({}, self.precision, self.domain)
        return TruncatedPuiseux._make(
            {e: c * v for e, v in self.terms.items()}, self.precision, self.domain
        )

    def __add__(self, other) -> "TruncatedPuiseux":
        f, g = self._aligned(other)
        N = _min_precision(f.precision, g.precision)
        terms = {e: c for e, c in f.terms.items() if N is None or e < N}
        for e, c in g.terms.items():
            if N is not None and e >= N:
                continue
            s = terms.get(e, f.domain.zero) + c
            if s:
                terms[e] = s
            else:
                terms.pop(e, None)
        return TruncatedPuiseux._make(terms, N, f.domain)

    __radd__ = __add__

    def __neg__(self) -> "TruncatedPuiseux":
        return TruncatedPuiseux._make(
            {e: -c for e, c in self.terms.items()}, self.precision, self.domain
        )

    def __sub__(self, other) -> "TruncatedPuiseux":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "TruncatedPuiseux":
        return (-self) + other

    def __mul__(self, other) -> "TruncatedPuiseux":
        if _is_scalar(other):
            return self.scale(other)
        f, g = self._aligned(other)
        K = f.domain
        if (f.is_exact and f.is_zero()) or (g.is_exact and g.is_zero()):
            return TruncatedPuiseux._make({}, None, K)
        bounds = []
        if f.precision is not None:
            bounds.append(f.precision + g.lower_bound())
        if g.precision is not None:
            bounds.append(g.precision + f.lower_bound())
        N = min(bounds) if bounds else None
        terms: Dict[Fraction, object] = {}
        g_items = g.items()
        for e1, c1 in f.items():
            for e2, c2 in g_items:
                e = e1 + e2
                if N is not None and e >= N:
                    break
                terms[e] = terms.get(e, K.zero) + c1 * c2
        return TruncatedPuiseux._make({e: c for e, c in terms.items() if c}, N, K)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "TruncatedPuiseux":
        if n < 0:
            return self.inverse() ** (-n)
        result = TruncatedPuiseux.constant(1, self.domain)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def inverse(self, precision=None) -> "TruncatedPuiseux":
        """Multiplicative inverse.

        A truncated input of precision N and valuation v yields precision
        N - 2v. Exact inputs other than monomials need an explicit precision.
        """
        if self.is_zero():
            if self.is_exact:
                raise DivisionByZeroSeries("cannot invert the zero series")
            raise IndeterminateValuation(
                f"cannot invert a series vanishing below precision {self.precision}"
            )
        K = self.domain
        v = self.valuation()
        c = self.terms[v]
        if self.is_exact and len(self.terms) == 1 and precision is None:
            return TruncatedPuiseux._make({-v: K.one / c}, None, K)
        bounds = [Fraction(precision)] if precision is not None else []
        if self.precision is not None:
            bounds.append(self.precision - 2 * v)
        if not bounds:
            raise ValueError("inverting an exact non-monomial series needs a precision")
        N = min(bounds)
        k = self.ramification
        steps = math.ceil((N + v) * k)
        unit = [((e - v) * k, t / c) for e, t in self.items() if e != v]
        unit = [(int(i), t) for i, t in unit]
        inv = [K.one] + [K.zero] * max(steps - 1, 0)
        for j in range(1, steps):
            acc = K.zero
            for i, t in unit:
                if i > j:
                    break
                acc += t * inv[j - i]
            inv[j] = -acc
        terms = {}
        for j in range(max(steps, 0)):
            if inv[j]:
                e = Fraction(j, k) - v
                if e < N:
                    terms[e] = inv[j] / c
        return TruncatedPuiseux._make(terms, N, K)

    def div(self, other, precision=None) -> "TruncatedPuiseux":
        f, g = self._aligned(other)
        if g.is_exact and len(g.terms) == 1:
            result = f * g.inverse()
            return result if precision is None else result.truncate(precision)
        lower = f.lower_bound()
        if lower is None:
            return TruncatedPuiseux._make({}, None, f.domain)
        target = None if precision is None else Fraction(precision)
        if f.precision is not None:
            bound = f.precision - g.valuation()
            target = bound if target is None else min(target, bound)
        if target is None:
            raise ValueError("dividing exact series needs a precision")
        return (f * g.inverse(target - lower)).truncate(target)

    def __truediv__(self, other) -> "TruncatedPuiseux":
        if _is_scalar(other):
            c = to_field(other, self.domain)
            if not c:
                raise DivisionByZeroSeries("division by a zero scalar")
            return self.scale(self.domain.one / c)
        return self.div(other)

    def mahler_substitute(self, m) -> "TruncatedPuiseux":
        """The series f(z^m)."""
        m = Fraction(m)
        if m <= 0:
            raise ValueError(f"substitution factor must be positive, got {m}")
        precision = None if self.precision is None else self.precision * m
        return TruncatedPuiseux._make(
            {e * m: c for e, c in self.terms.items()}, precision, self.domain
        )

    def sigma(self, p: int, j: int = 1) -> "TruncatedPuiseux":
        """Apply the Mahler substitution z -> z^(p^j); j may be negative."""
        if j == 0:
            return self
        return self.mahler_substitute(Fraction(p) ** j)

    def split_at_zero(self) -> Tuple["TruncatedPuiseux", object, "TruncatedPuiseux"]:
        """Parts with negative exponents, the constant term, positive exponents."""
        negative_precision = None
        if self.precision is not None and self.precision <= 0:
            negative_precision = self.precision
        negative = TruncatedPuiseux._make(
            {e: c for e, c in self.terms.items() if e < 0}, negative_precision, self.domain
        )
        constant = self.terms.get(Fraction(0), self.domain.zero)
        positive = TruncatedPuiseux._make(
            {e: c for e, c in self.terms.items() if e > 0}, self.precision, self.domain
        )
        return negative, constant, positive

    def agrees_with(self, other, precision) -> bool:
        """Equality of all coefficients below ``precision``."""
        difference = (self - other)
        N = Fraction(precision)
        if difference.precision is not None and difference.precision < N:
            return False
        return all(e >= N for e in difference.terms)

    def __eq__(self, other) -> bool:
        if _is_scalar(other):
            other = TruncatedPuiseux.constant(other, self.domain)
        if not isinstance(other, TruncatedPuiseux):
            return NotImplemented
        if self.precision != other.precision:
            return False
        f, g = self._aligned(other)
        return f.terms == g.terms

    __hash__ = None

    def __str__(self) -> str:
        parts = []
        for e, c in self.items():
            parts.append(_term_str(c, e, self.domain))
        if self.precision is not None:
            parts.append(f"O({_power_str(self.precision)})")
        if not parts:
            return "0"
        text = " + ".join(parts)
        return text.replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"TruncatedPuiseux({self})"


def _power_str(e: Fraction) -> str:
    if e == 0:
        return "1"
    if e == 1:
        return "z"
    if e.denominator == 1 and e > 0:
        return f"z^{e.numerator}"
    return f"z^({e.numerator}/{e.denominator})" if e.denominator != 1 else f"z^({e.numerator})"


def _term_str(c, e: Fraction, K) -> str:
    coeff = element_str(c, K)
    if e == 0:
        return coeff
    if coeff == "1":
        return _power_str(e)
    if coeff == "-1":
        return "-" + _power_str(e)
    return f"{coeff}*{_power_str(e)}"


def series_from_rational(numerator: TruncatedPuiseux, denominator: TruncatedPuiseux, precision):
    """Expansion of numerator/denominator known below ``precision``."""
    N = Fraction(precision)
    if numerator.is_zero():
        return TruncatedPuiseux.zero(N, unify_fields(numerator.domain, denominator.domain))
    inverse = denominator.inverse(N - numerator.valuation())
    return (numerator * inverse).truncate(N)


def z(exponent=1, domain=QQ) -> TruncatedPuiseux:
    return TruncatedPuiseux.monomial(1, exponent, domain)


# --- matrices of series -------------------------------------------------------


def identity_matrix(n: int, domain=QQ) -> SeriesMatrix:
    one = TruncatedPuiseux.constant(1, domain)
    zero = TruncatedPuiseux.zero(None, domain)
    return [[one if i == j else zero for j in range(n)] for i in range(n)]


def zero_matrix(rows: int, cols: int, domain=QQ) -> SeriesMatrix:
    zero = TruncatedPuiseux.zero(None, domain)
    return [[zero] * cols for _ in range(rows)]


def constant_series_matrix(M, domain=None) -> SeriesMatrix:
    """Series matrix from a DomainMatrix or nested lists of scalars."""
    if hasattr(M, "to_list"):
        domain = domain or M.domain
        rows = M.to_list()
    else:
        rows = M
        domain = domain or QQ
    return [[TruncatedPuiseux.constant(c, domain) for c in row] for row in rows]


def matrix_domain(A: SeriesMatrix):
    return unify_fields(*(f.domain for row in A for f in row))


def matrix_convert(A: SeriesMatrix, K) -> SeriesMatrix:
    return [[f.convert(K) for f in row] for row in A]


def matrix_add(A: SeriesMatrix, B: SeriesMatrix) -> SeriesMatrix:
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def matrix_sub(A: SeriesMatrix, B: SeriesMatrix) -> SeriesMatrix:
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def matrix_scale(A: SeriesMatrix, c) -> SeriesMatrix:
    return [[a * c for a in row] for row in A]


def matrix_multiply(A: SeriesMatrix, B: SeriesMatrix) -> SeriesMatrix:
    K = unify_fields(matrix_domain(A), matrix_domain(B))
    rows, inner, cols = len(A), len(B), len(B[0]) if B else 0
    result = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = TruncatedPuiseux.zero(None, K)
            for k in range(inner):
                a, b = A[i][k], B[k][j]
                if a.is_exact and a.is_zero() or b.is_exact and b.is_zero():
                    continue
                acc = acc + a * b
            row.append(acc)
        result.append(row)
    return result


def matrix_sigma(A: SeriesMatrix, p: int, j: int = 1) -> SeriesMatrix:
    return [[f.sigma(p, j) for f in row] for row in A]


def matrix_truncate(A: SeriesMatrix, precision) -> SeriesMatrix:
    return [[f.truncate(precision) for f in row] for row in A]


def matrix_precision(A: SeriesMatrix) -> Optional[Fraction]:
    return _min_precision(*(f.precision for row in A for f in row))


def matrix_valuation(A: SeriesMatrix) -> Optional[Fraction]:
    """Smallest valuation among the nonzero entries, None for a zero matrix."""
    values = [f.valuation() for row in A for f in row if f.terms]
    return min(values) if values else None


def matrix_is_zero(A: SeriesMatrix, precision=None) -> bool:
    if precision is None:
        return all(f.is_zero() for row in A for f in row)
    N = Fraction(precision)
    return all(e >= N for row in A for f in row for e in f.terms)


def matrix_agrees(A: SeriesMatrix, B: SeriesMatrix, precision) -> bool:
    return all(a.agrees_with(b, precision) for ra, rb in zip(A, B) for a, b in zip(ra, rb))


def matrix_inverse(A: SeriesMatrix, precision=None) -> SeriesMatrix:
    """Gauss-Jordan inverse choosing pivots of minimal valuation.

    ``precision`` bounds the expansion of non-monomial pivot inverses.
    """
    n = len(A)
    K = matrix_domain(A)
    work = [[f.convert(K) for f in row] + [e for e in ident] for row, ident in zip(A, identity_matrix(n, K))]
    for col in range(n):
        candidates = [r for r in range(col, n) if work[r][col].terms]
        if not candidates:
            raise SingularGauge(f"matrix is singular at working precision (column {col})")
        pivot_row = min(candidates, key=lambda r: (work[r][col].valuation(), r))
        work[col], work[pivot_row] = work[pivot_row], work[col]
        pivot = work[col][col]
        if pivot.is_exact and len(pivot.terms) > 1 and precision is None:
            raise ValueError("a precision is needed to invert a non-monomial pivot")
        inv = pivot.inverse(None if pivot.is_exact and len(pivot.terms) == 1 else precision)
        work[col] = [f * inv for f in work[col]]
        for r in range(n):
            if r == col or work[r][col].is_zero():
                continue
            factor = work[r][col]
            work[r] = [a - factor * b for a, b in zip(work[r], work[col])]
    result = [row[n:] for row in work]
    if precision is not None:
        result = matrix_truncate(result, precision)
    return result


def matrix_str(A: SeriesMatrix) -> str:
    return "\n".join("[" + ", ".join(str(f) for f in row) + "]" for row in A)


def coefficient_matrix(A: SeriesMatrix, exponent):
    """Constant matrix of the z^exponent coefficients of A, as nested lists."""
    return [[f.coefficient(exponent) for f in row] for row in A]


def iter_entries(A: SeriesMatrix) -> Iterable[TruncatedPuiseux]:
    for row in A:
        yield from row
