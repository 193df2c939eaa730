"""Mahler operators, Mahler systems and their local invariants at 0."""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from mahler_toolkit.algebra import (
    AlgebraicNumber,
    element_str,
    element_to_fraction,
    number_field_for,
    roots_in_field,
    to_field,
    unify_fields,
)
from mahler_toolkit.errors import (
    CyclicSearchExhausted,
    FactorRecurrenceStuck,
    NoRelationFound,
    PrecisionLoss,
    SingularGauge,
)
from mahler_toolkit.series import (
    SeriesMatrix,
    TruncatedPuiseux,
    matrix_domain,
    matrix_inverse,
    matrix_multiply,
    matrix_precision,
    matrix_sigma,
    matrix_truncate,
)

logger = logging.getLogger(__name__)

DEFAULT_GUARD = 16


def _series(value, domain=QQ) -> TruncatedPuiseux:
    if isinstance(value, TruncatedPuiseux):
        return value
    return TruncatedPuiseux.constant(value, domain)


class MahlerOperator:
    """L = sum a_i Phi^i where Phi acts by f(z) -> f(z^p).

    Coefficients are normally exact; truncated coefficients appear in
    factorizations and quotients, which only hold up to a precision.
    """

    __slots__ = ("p", "coefficients")

    def __init__(self, p: int, coefficients: Sequence):
        if p < 2:
            raise ValueError(f"p must be at least 2, got {p}")
        coeffs = [_series(c) for c in coefficients]
        K = unify_fields(*(c.domain for c in coeffs))
        coeffs = [c.convert(K) for c in coeffs]
        while len(coeffs) > 1 and coeffs[-1].is_exact and coeffs[-1].is_zero():
            coeffs.pop()
        self.p = p
        self.coefficients: Tuple[TruncatedPuiseux, ...] = tuple(coeffs) or (
            TruncatedPuiseux.zero(),
        )

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def domain(self):
        return self.coefficients[0].domain

    @property
    def is_exact(self) -> bool:
        return all(c.is_exact for c in self.coefficients)

    @property
    def precision(self) -> Optional[Fraction]:
        known = [c.precision for c in self.coefficients if c.precision is not None]
        return min(known) if known else None

    def coefficient(self, i: int) -> TruncatedPuiseux:
        if 0 <= i <= self.order:
            return self.coefficients[i]
        return TruncatedPuiseux.zero(None, self.domain)

    def require_well_formed(self) -> None:
        if self.order < 1:
            raise ValueError("a Mahler operator needs order at least 1")
        if self.coefficients[0].is_zero() or self.coefficients[-1].is_zero():
            raise ValueError("a Mahler operator needs a_0 and a_d nonzero")

    def _coerce(self, other) -> "MahlerOperator":
        if isinstance(other, MahlerOperator):
            if other.p != self.p:
                raise ValueError(f"cannot combine operators for p={self.p} and p={other.p}")
            return other
        return MahlerOperator(self.p, [_series(other, self.domain)])

    def __add__(self, other) -> "MahlerOperator":
        other = self._coerce(other)
        n = max(self.order, other.order) + 1
        return MahlerOperator(self.p, [self.coefficient(i) + other.coefficient(i) for i in range(n)])

    __radd__ = __add__

    def __neg__(self) -> "MahlerOperator":
        return MahlerOperator(self.p, [-c for c in self.coefficients])

    def __sub__(self, other) -> "MahlerOperator":
        return self + (-self._coerce(other))

    def __mul__(self, other) -> "MahlerOperator":
        """Composition: a Phi^i * b Phi^j = a sigma^i(b) Phi^(i+j)."""
        other = self._coerce(other)
        K = unify_fields(self.domain, other.domain)
        result: List[TruncatedPuiseux] = [
            TruncatedPuiseux.zero(None, K) for _ in range(self.order + other.order + 1)
        ]
        for i, a in enumerate(self.coefficients):
            if a.is_exact and a.is_zero():
                continue
            for j, b in enumerate(other.coefficients):
                if b.is_exact and b.is_zero():
                    continue
                result[i + j] = result[i + j] + a * b.sigma(self.p, i)
        return MahlerOperator(self.p, result)

    def __rmul__(self, other) -> "MahlerOperator":
        return self._coerce(other) * self

    def apply(self, f: TruncatedPuiseux) -> TruncatedPuiseux:
        """Evaluate sum a_i f(z^(p^i))."""
        f = _series(f, self.domain)
        total = TruncatedPuiseux.zero(None, unify_fields(self.domain, f.domain))
        for i, a in enumerate(self.coefficients):
            if a.is_exact and a.is_zero():
                continue
            total = total + a * f.sigma(self.p, i)
        return total

    def truncate(self, precision) -> "MahlerOperator":
        return MahlerOperator(self.p, [c.truncate(precision) for c in self.coefficients])

    def convert(self, K) -> "MahlerOperator":
        return MahlerOperator(self.p, [c.convert(K) for c in self.coefficients])

    def agrees_with(self, other: "MahlerOperator", precision) -> bool:
        n = max(self.order, other.order) + 1
        return all(
            self.coefficient(i).agrees_with(other.coefficient(i), precision) for i in range(n)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MahlerOperator):
            return NotImplemented
        return self.p == other.p and self.coefficients == other.coefficients

    __hash__ = None

    def __str__(self) -> str:
        parts = []
        for i, c in enumerate(self.coefficients):
            if c.is_exact and c.is_zero():
                continue
            power = "" if i == 0 else ("*M" if i == 1 else f"*M^{i}")
            parts.append(f"({c}){power}")
        return (" + ".join(parts) or "0") + f" @ p={self.p}"

    def __repr__(self) -> str:
        return f"MahlerOperator({self})"


def compose(L: MahlerOperator, M: MahlerOperator) -> MahlerOperator:
    return L * M


def add(L: MahlerOperator, M: MahlerOperator) -> MahlerOperator:
    return L + M


def apply_to_series(L: MahlerOperator, f: TruncatedPuiseux) -> TruncatedPuiseux:
    return L.apply(f)


def phi(p: int, power: int = 1, domain=QQ) -> MahlerOperator:
    """The operator Phi^power."""
    zero = TruncatedPuiseux.zero(None, domain)
    return MahlerOperator(p, [zero] * power + [TruncatedPuiseux.constant(1, domain)])


def normalize(L: MahlerOperator) -> MahlerOperator:
    """Scale L to polynomial coefficients with content 1 and positive leading term."""
    if not L.is_exact:
        raise PrecisionLoss("normalization needs exact coefficients")
    nonzero = [c for c in L.coefficients if not c.is_zero()]
    if not nonzero:
        return L
    shift = -min(c.valuation() for c in nonzero)
    coeffs = [c.shift(shift) for c in L.coefficients]
    K = L.domain
    top = max(coeffs[-1].terms)
    lead = coeffs[-1].terms[top]
    if K.is_QQ:
        values = [element_to_fraction(v) for c in coeffs for v in c.terms.values()]
        denominator = math.lcm(*(q.denominator for q in values))
        content = math.gcd(*(int(q * denominator) for q in values))
        scale = Fraction(denominator, content)
        if lead < 0:
            scale = -scale
        scale = to_field(scale, K)
    else:
        scale = K.one / lead
    return MahlerOperator(L.p, [c.scale(scale) for c in coeffs])


# --- systems -------------------------------------------------------------------


@dataclass(frozen=True)
class MahlerSystem:
    """sigma(Y) = A Y."""

    p: int
    matrix: SeriesMatrix

    @property
    def dimension(self) -> int:
        return len(self.matrix)

    @property
    def domain(self):
        return matrix_domain(self.matrix)

    @property
    def precision(self) -> Optional[Fraction]:
        return matrix_precision(self.matrix)


def equation_to_companion(L: MahlerOperator, precision=None) -> MahlerSystem:
    """Companion system acting on (y, sigma(y), ..., sigma^(d-1)(y)).

    Entries -a_k/a_d are exact when a_d is a monomial, otherwise they are
    expanded to ``precision``.
    """
    L.require_well_formed()
    d = L.order
    K = L.domain
    lead = L.coefficients[-1]
    zero = TruncatedPuiseux.zero(None, K)
    one = TruncatedPuiseux.constant(1, K)
    rows = [[one if j == i + 1 else zero for j in range(d)] for i in range(d - 1)]
    monomial = lead.is_exact and len(lead.terms) == 1
    if not monomial and precision is None and lead.is_exact:
        raise ValueError("a precision is needed when the leading coefficient is not a monomial")
    last = []
    for k in range(d):
        entry = -L.coefficients[k]
        last.append(entry / lead if monomial else entry.div(lead, precision))
    rows.append(last)
    return MahlerSystem(L.p, rows)


def gauge_apply(R: SeriesMatrix, A: MahlerSystem, precision=None) -> MahlerSystem:
    """R[A] = sigma(R) A R^-1."""
    inverse = matrix_inverse(R, precision)
    result = matrix_multiply(matrix_multiply(matrix_sigma(R, A.p), A.matrix), inverse)
    if precision is not None:
        result = matrix_truncate(result, precision)
    return MahlerSystem(A.p, result)


def _cyclic_candidates(d: int, K):
    zero = TruncatedPuiseux.zero(None, K)
    one = TruncatedPuiseux.constant(1, K)
    for i in range(d):
        yield [one if k == i else zero for k in range(d)]
    j = 0
    while True:
        for i in range(d):
            for k in range(d):
                if k == i:
                    continue
                vector = [zero] * d
                vector[i] = one
                vector[k] = TruncatedPuiseux.monomial(1, j, K)
                yield vector
        j += 1


@dataclass(frozen=True)
class CyclicVectorResult:
    operator: MahlerOperator
    gauge: SeriesMatrix
    vector: Tuple[TruncatedPuiseux, ...]
    candidates_tried: int


def cyclic_vector(A: MahlerSystem, budget: int = 50, precision=None) -> CyclicVectorResult:
    """Search a cyclic vector u and the operator it satisfies.

    Rows of ``gauge`` are u, sigma(u)A, ...; the gauge takes A to the
    companion system of the returned monic operator.
    """
    d = A.dimension
    K = A.domain
    working = precision if precision is not None else (A.precision or DEFAULT_GUARD)
    for tried, u in enumerate(_cyclic_candidates(d, K), start=1):
        if tried > budget:
            break
        rows = [u]
        for _ in range(d):
            rows.append(matrix_multiply(matrix_sigma([rows[-1]], A.p), A.matrix)[0])
        P = rows[:d]
        try:
            inverse = matrix_inverse(P, working)
        except SingularGauge:
            logger.debug("cyclic candidate %d is not cyclic", tried)
            continue
        beta = matrix_multiply([rows[d]], inverse)[0]
        coeffs = [-b for b in beta] + [TruncatedPuiseux.constant(1, K)]
        logger.debug("cyclic vector found after %d candidates", tried)
        return CyclicVectorResult(MahlerOperator(A.p, coeffs), P, tuple(u), tried)
    raise CyclicSearchExhausted(f"no cyclic vector among {budget} candidates")


def system_to_operator(A: MahlerSystem, budget: int = 50, precision=None) -> MahlerOperator:
    return cyclic_vector(A, budget, precision).operator


# --- Newton polygon --------------------------------------------------------------


@dataclass(frozen=True)
class NewtonEdge:
    start: int
    end: int
    slope: Fraction
    exponents: Tuple[AlgebraicNumber, ...]
    roots: Tuple = field(compare=False, default=())

    @property
    def multiplicity(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class NewtonData:
    p: int
    vertices: Tuple[Tuple[int, Fraction], ...]
    edges: Tuple[NewtonEdge, ...]
    field: object = field(compare=False, default=QQ)

    @property
    def slopes(self) -> Tuple[Fraction, ...]:
        return tuple(e.slope for e in self.edges)

    @property
    def multiplicities(self) -> Tuple[int, ...]:
        return tuple(e.multiplicity for e in self.edges)

    @property
    def exponents(self) -> Tuple[AlgebraicNumber, ...]:
        return tuple(c for e in self.edges for c in e.exponents)

    def slope_profile(self) -> Tuple[Tuple[Fraction, int], ...]:
        return tuple((e.slope, e.multiplicity) for e in self.edges)


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _lower_hull(points: List[Tuple[int, Fraction, int]]) -> List[Tuple[int, Fraction, int]]:
    hull: List[Tuple[int, Fraction, int]] = []
    for pt in points:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], pt) <= 0:
            hull.pop()
        hull.append(pt)
    return hull


def newton_polygon(L: MahlerOperator, max_degree: int = 6) -> NewtonData:
    """Lower hull of the points (p^i, val a_i) with edge exponents."""
    L.require_well_formed()
    p = L.p
    points = [
        (p ** i, c.valuation(), i) for i, c in enumerate(L.coefficients) if not c.is_zero()
    ]
    hull = _lower_hull(points)
    valuations = {i: v for _, v, i in points}
    K = L.domain
    edge_polys = []
    for left, right in zip(hull, hull[1:]):
        i0, i1 = left[2], right[2]
        slope = Fraction(right[1] - left[1]) / (right[0] - left[0])
        coeffs = []
        for l in range(i0, i1 + 1):
            on_edge = l in valuations and valuations[l] == left[1] + slope * (p ** l - left[0])
            coeffs.append(L.coefficients[l].leading_coefficient() if on_edge else K.zero)
        edge_polys.append((i0, i1, slope, coeffs))
    F = number_field_for([c for *_, c in edge_polys], base=K, max_degree=max_degree)
    edges = []
    for i0, i1, slope, coeffs in edge_polys:
        roots = roots_in_field([to_field(c, F) for c in coeffs], F)
        labels = tuple(AlgebraicNumber.from_element(r, F) for r in roots)
        edges.append(NewtonEdge(i0, i1, slope, labels, tuple(roots)))
    vertices = tuple((x, v) for x, v, _ in hull)
    return NewtonData(p, vertices, tuple(edges), F)


# --- division and factorization --------------------------------------------------


def right_divide(L: MahlerOperator, M: MahlerOperator, precision) -> Tuple[MahlerOperator, MahlerOperator]:
    """L = Q M + R with order(R) < order(M), coefficients known below ``precision``."""
    N = Fraction(precision)
    p = L.p
    k = M.order
    lead = M.coefficients[-1]
    lead.valuation()
    remainder = list(L.truncate(N).coefficients)
    K = unify_fields(L.domain, M.domain)
    quotient: Dict[int, TruncatedPuiseux] = {}
    while len(remainder) - 1 >= k and len(remainder) > 0:
        n = len(remainder) - 1
        top = remainder[n]
        if top.is_zero():
            remainder.pop()
            continue
        shift = n - k
        shifted = [m.sigma(p, shift) for m in M.coefficients]
        floor = min((m.lower_bound() for m in shifted if m.lower_bound() is not None), default=0)
        q = top.div(shifted[-1], N - min(floor, 0))
        quotient[shift] = quotient.get(shift, TruncatedPuiseux.zero(None, K)) + q
        for i, m in enumerate(shifted[:-1]):
            remainder[i + shift] = (remainder[i + shift] - q * m).truncate(N)
        remainder.pop()
        if not remainder:
            break
    order = max(quotient) if quotient else 0
    Q = MahlerOperator(
        p, [quotient.get(i, TruncatedPuiseux.zero(None, K)).truncate(N) for i in range(order + 1)]
    )
    R = MahlerOperator(p, remainder or [TruncatedPuiseux.zero(N, K)])
    return Q, R


@dataclass(frozen=True)
class FirstOrderFactor:
    """(z^nu Phi - c) h^-1 with val h = 0 and cld h = 1."""

    p: int
    nu: Fraction
    c: object
    h: TruncatedPuiseux

    @property
    def exponent(self) -> AlgebraicNumber:
        return AlgebraicNumber.from_element(self.c, self.h.domain)

    def operator(self) -> MahlerOperator:
        K = self.h.domain
        N = self.h.precision
        inv_h = self.h.inverse(N) if N is not None else self.h.inverse()
        sigma_h = self.h.sigma(self.p)
        inv_sigma_h = sigma_h.inverse(sigma_h.precision) if sigma_h.precision is not None else sigma_h.inverse()
        a0 = inv_h.scale(-to_field(self.c, K))
        a1 = inv_sigma_h.shift(self.nu)
        return MahlerOperator(self.p, [a0, a1])


@dataclass(frozen=True)
class Factorization:
    unit: TruncatedPuiseux
    factors: Tuple[FirstOrderFactor, ...]
    slope_profile: Tuple[Tuple[Fraction, int], ...]
    nu_formula_ok: bool
    field: object
    precision: Fraction

    def product(self) -> MahlerOperator:
        """a L_s ... L_1 with factors stored outermost first."""
        p = self.factors[0].p if self.factors else 2
        result = MahlerOperator(p, [self.unit])
        for f in self.factors:
            result = result * f.operator()
        return result


def _solve_factor_series(L: MahlerOperator, mu: Fraction, c, K, working: Fraction) -> TruncatedPuiseux:
    """h = 1 + ... with sum_i a_i c^i z^(-p^i mu) sigma^i(h) = 0."""
    p = L.p
    b = []
    for i, a in enumerate(L.coefficients):
        b.append(a.convert(K).scale(c ** i).shift(-(p ** i) * mu))
    m0 = min(bi.lower_bound() for bi in b if bi.lower_bound() is not None)
    pivot = b[0].terms.get(m0)
    if not pivot:
        raise FactorRecurrenceStuck(f"no pivot at z^{m0} for exponent {c}")
    k = 1
    for bi in b:
        k = math.lcm(k, bi.ramification)
        if bi.precision is not None:
            k = math.lcm(k, bi.precision.denominator)
    limits = [bi.precision - m0 for bi in b if bi.precision is not None]
    H = min([working] + limits)
    h = {Fraction(0): K.one}
    gamma = Fraction(1, k)
    while gamma < H:
        target = m0 + gamma
        acc = K.zero
        for i, bi in enumerate(b):
            scale = p ** i
            for s, coeff in bi.terms.items():
                if s > target:
                    continue
                prev = (target - s) / scale
                if i == 0 and s == m0:
                    continue
                value = h.get(prev)
                if value:
                    acc += coeff * value
        value = -acc / pivot
        if value:
            h[gamma] = value
        gamma += Fraction(1, k)
    return TruncatedPuiseux._make(h, H, K)


def factor_by_slopes(L: MahlerOperator, precision, guard: Optional[int] = None,
                     max_degree: int = 6) -> Factorization:
    """Split L = a L_s ... L_1 into first-order factors, one slope at a time."""
    N = Fraction(precision)
    working = N + (guard if guard is not None else int(N) + 8)
    p = L.p
    data = newton_polygon(L, max_degree)
    K = data.field
    current = L.convert(K)
    predicted = [mu for mu, r in data.slope_profile() for _ in range(r)]
    nu_ok = True
    factors: List[FirstOrderFactor] = []
    while current.order > 0:
        local = newton_polygon(current, max_degree)
        mu = local.edges[0].slope
        if local.field != K:
            raise FactorRecurrenceStuck("quotient exponents left the working field")
        c = local.edges[0].roots[0]
        if predicted and predicted[0] != mu:
            logger.warning("slope %s differs from the predicted %s", mu, predicted[0])
            nu_ok = False
        nu = (p - 1) * mu
        h = _solve_factor_series(current, mu, c, K, working)
        factor = FirstOrderFactor(p, nu, c, h)
        quotient, remainder = right_divide(current, factor.operator(), working)
        for r in remainder.coefficients:
            if not r.is_zero():
                raise FactorRecurrenceStuck(f"first-order factor with exponent {c} does not divide")
        logger.debug("factor nu=%s c=%s", nu, element_str(c, K))
        factors.append(factor)
        if predicted:
            mu1 = predicted.pop(0)
            predicted = [p * (m - mu1) + mu1 for m in predicted]
        current = quotient
        working = min(working, quotient.precision or working)
    unit = current.coefficients[0]
    a0 = L.coefficients[0].convert(K)
    expected = a0.leading_coefficient()
    for f in factors:
        expected = expected / -f.c
    if unit.valuation() != a0.valuation() or unit.leading_coefficient() != expected:
        raise FactorRecurrenceStuck("unit does not match the leading data of a_0")
    factors = [
        FirstOrderFactor(f.p, f.nu, f.c, f.h.truncate(N)) for f in reversed(factors)
    ]
    out_precision = min([N] + [f.h.precision for f in factors if f.h.precision is not None])
    return Factorization(unit.truncate(N), tuple(factors), data.slope_profile(), nu_ok, K, out_precision)


# --- series solutions --------------------------------------------------------------


def _grid(*series: TruncatedPuiseux, extra: Sequence[Fraction] = ()) -> int:
    k = 1
    for f in series:
        k = math.lcm(k, f.ramification)
    for e in extra:
        k = math.lcm(k, Fraction(e).denominator)
    return k


def _solve_particular(rows: List[List], rhs: List, K) -> Optional[List]:
    """A solution of rows * x = rhs with free unknowns set to 0, or None."""
    if not rows:
        return []
    n = len(rows[0])
    augmented = DomainMatrix([row + [r] for row, r in zip(rows, rhs)], (len(rows), n + 1), K)
    reduced, pivots = augmented.rref()
    if n in pivots:
        return None
    solution = [K.zero] * n
    dense = reduced.to_list()
    for row, col in enumerate(pivots):
        solution[col] = dense[row][n]
    return solution


def laurent_solution(L: MahlerOperator, valuation, leading, precision, guard: int = 4) -> TruncatedPuiseux:
    """A series solution y = leading z^valuation + ... known below ``precision``.

    Undetermined higher coefficients that the equations leave free are set to 0.
    """
    v = Fraction(valuation)
    N = Fraction(precision)
    p = L.p
    K = L.domain
    k = _grid(*L.coefficients, extra=[v])
    E = N + guard
    unknowns = [v + Fraction(j, k) for j in range(int((E - v) * k))]
    index = {e: j for j, e in enumerate(unknowns)}
    T = min(c.valuation() + p ** i * E for i, c in enumerate(L.coefficients) if not c.is_zero())
    equations: Dict[Fraction, Dict[int, object]] = {}
    for i, a in enumerate(L.coefficients):
        for s, coeff in a.terms.items():
            for e in unknowns:
                t = s + p ** i * e
                if t >= T:
                    break
                row = equations.setdefault(t, {})
                row[index[e]] = row.get(index[e], K.zero) + coeff
        if a.precision is not None:
            T = min(T, a.precision + p ** i * v)
    lead = to_field(leading, K)
    rows, rhs = [], []
    for t in sorted(equations):
        if t >= T:
            continue
        row = equations[t]
        rhs.append(-row.get(0, K.zero) * lead)
        rows.append([row.get(j, K.zero) for j in range(1, len(unknowns))])
    solution = _solve_particular(rows, rhs, K)
    if solution is None:
        raise NoRelationFound(f"no series solution with valuation {v} and leading term {leading}")
    terms = {v: lead}
    for e, value in zip(unknowns[1:], solution):
        if value and e < N:
            terms[e] = value
    return TruncatedPuiseux._make({e: c for e, c in terms.items() if c}, N, K)


def solve_inhomogeneous(L: MahlerOperator, rhs: TruncatedPuiseux, precision) -> TruncatedPuiseux:
    """The series y with L(y) = rhs when the recurrence is triangular."""
    L.require_well_formed()
    p = L.p
    K = unify_fields(L.domain, rhs.domain)
    coeffs = [a.convert(K) for a in L.coefficients]
    rhs = rhs.convert(K)
    v0 = coeffs[0].valuation()
    N = Fraction(precision)
    if rhs.precision is not None:
        N = min(N, rhs.precision - v0)
    if rhs.is_zero():
        return TruncatedPuiseux.zero(N, K)
    start = rhs.valuation() - v0
    gamma_min = max(
        (Fraction(v0 - a.valuation()) / (p ** i - 1) for i, a in enumerate(coeffs) if i and not a.is_zero()),
        default=start,
    )
    if start < gamma_min:
        raise NoRelationFound(f"recurrence is not triangular from z^{start}")
    for i, a in enumerate(coeffs):
        if a.precision is not None:
            N = min(N, a.precision + p ** i * start - v0)
    k = _grid(rhs, *coeffs, extra=[start])
    y: Dict[Fraction, object] = {}
    gamma = start
    while gamma < N:
        t = gamma + v0
        acc = rhs.terms.get(t, K.zero)
        pivot = K.zero
        for i, a in enumerate(coeffs):
            for s, coeff in a.terms.items():
                prev = (t - s) / p ** i
                if prev == gamma:
                    pivot += coeff
                elif prev in y:
                    acc -= coeff * y[prev]
        if pivot:
            value = acc / pivot
            if value:
                y[gamma] = value
        elif acc:
            raise NoRelationFound(f"inconsistent equation at z^{t}")
        gamma += Fraction(1, k)
    return TruncatedPuiseux._make(y, N, K)


# --- guessing ----------------------------------------------------------------------


@dataclass(frozen=True)
class GuessResult:
    operator: MahlerOperator
    order: int
    degree: int
    verified_to: Fraction

    @property
    def label(self) -> str:
        return f"candidate, verified to order {self.verified_to}"


def guess_minimal_operator(f: TruncatedPuiseux, max_order: int, max_degree: int, p: int = 2,
                           slack: int = 4) -> GuessResult:
    """Lowest order, then lowest degree, polynomial operator annihilating f."""
    K = f.domain
    if f.is_exact:
        f = f.truncate((max_order + 1) * (max_degree + 2) + slack + 8)
    N = f.precision
    lower = f.lower_bound()
    for order in range(1, max_order + 1):
        for degree in range(0, max_degree + 1):
            columns = []
            for i in range(order + 1):
                sigma_f = f.sigma(p, i)
                for j in range(degree + 1):
                    columns.append((i, j, sigma_f.shift(j)))
            k = _grid(*(c for _, _, c in columns))
            start = min(lower * p ** i for i in range(order + 1))
            exponents = [start + Fraction(n, k) for n in range(int((N - start) * k))]
            if len(exponents) <= len(columns) + slack:
                continue
            rows = [[col.terms.get(e, K.zero) for _, _, col in columns] for e in exponents]
            M = DomainMatrix(rows, (len(rows), len(columns)), K)
            basis = M.nullspace().to_list()
            if not basis:
                continue
            candidates = list(basis)
            if len(basis) > 1:
                combo = [sum((b[n] * (idx + 1) for idx, b in enumerate(basis)), K.zero) for n in range(len(columns))]
                candidates.append(combo)
            for vector in candidates:
                coeffs = []
                for i in range(order + 1):
                    chunk = vector[i * (degree + 1):(i + 1) * (degree + 1)]
                    coeffs.append(TruncatedPuiseux({j: c for j, c in enumerate(chunk)}, None, K))
                if coeffs[0].is_zero() or coeffs[-1].is_zero():
                    continue
                operator = normalize(MahlerOperator(p, coeffs))
                logger.debug("relation of order %d degree %d", order, degree)
                return GuessResult(operator, order, degree, N)
    raise NoRelationFound(
        f"no relation of order <= {max_order} and degree <= {max_degree} "
        f"from {len(f.terms)} known terms"
    )
