"""Exact scalar arithmetic over Q and single number-field extensions.

Field elements are sympy domain elements (``QQ`` or an ``AlgebraicField``).
``AlgebraicNumber`` is the field-independent label used for reporting,
ordering and serialization.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Tuple

import mpmath
from sympy import Poly, QQ, Symbol, cyclotomic_poly, totient
from sympy.polys.densebasic import dup_strip
from sympy.polys.matrices import DomainMatrix
from sympy.polys.polyclasses import ANP, DMP

from mahler_toolkit.errors import UnsupportedSplitting

logger = logging.getLogger(__name__)

x = Symbol("x")

HEIGHT_DPS = 50


def to_field(value, K=QQ):
    """Convert an int, Fraction, AlgebraicNumber or domain element into ``K``."""
    if isinstance(value, Fraction):
        return K.convert_from(QQ(value.numerator, value.denominator), QQ)
    if isinstance(value, AlgebraicNumber):
        return value.to_element(K)
    if isinstance(value, ANP):
        if K.is_AlgebraicField and value.mod_to_list() == K.mod.to_list():
            return value
        rational = element_to_fraction(value, None)
        if rational is None:
            raise UnsupportedSplitting(f"cannot move {value} into {K}")
        return to_field(rational, K)
    return K.convert(value)


def element_to_fraction(c, K=None) -> Optional[Fraction]:
    """Rational value of a field element, or None when it is irrational."""
    if isinstance(c, ANP):
        rep = c.to_list()
        if len(rep) > 1:
            return None
        c = rep[0] if rep else QQ.zero
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, Fraction):
        return c
    return Fraction(int(c.numerator), int(c.denominator))


def field_poly(coeffs: Sequence, K=QQ) -> Poly:
    """Univariate Poly in ``x`` over ``K`` from ascending coefficients."""
    desc = dup_strip([to_field(c, K) for c in reversed(list(coeffs))])
    return Poly.new(DMP(desc, K, 0), x)


def _primitive_integer_coeffs(poly: Poly) -> Tuple[int, ...]:
    _, cleared = poly.clear_denoms(convert=True)
    _, prim = cleared.primitive()
    desc = [int(c) for c in prim.all_coeffs()]
    if desc[0] < 0:
        desc = [-c for c in desc]
    return tuple(reversed(desc))


def _theta_value(K) -> complex:
    return complex(K.to_sympy(K.unit).evalf(HEIGHT_DPS))


def element_value(c, K) -> complex:
    """Numerical value of a field element."""
    if not K.is_AlgebraicField:
        q = element_to_fraction(c)
        return complex(q.numerator / q.denominator)
    theta = _theta_value(K)
    value = 0j
    for coeff in c.to_list():
        q = element_to_fraction(coeff)
        value = value * theta + q.numerator / q.denominator
    return value


def _element_minpoly(c, K) -> Poly:
    n = K.mod.degree()
    columns = []
    for j in range(n):
        theta_j = K([K.dom.one] + [K.dom.zero] * j)
        rep = (c * theta_j).to_list()
        rep = [K.dom.zero] * (n - len(rep)) + rep
        columns.append(list(reversed(rep)))
    mult = DomainMatrix(columns, (n, n), K.dom).transpose()
    charpoly = Poly.new(DMP(mult.charpoly(), K.dom, 0), x)
    value = element_value(c, K)
    factors = [f for f, _ in charpoly.factor_list()[1]]
    return min(factors, key=lambda f: abs(_horner(f, value)))


def _horner(poly: Poly, value: complex) -> complex:
    result = 0j
    for coeff in poly.rep.to_list():
        q = element_to_fraction(coeff)
        result = result * value + q.numerator / q.denominator
    return result


@dataclass(frozen=True)
class AlgebraicNumber:
    minimal_polynomial: Tuple[int, ...]
    root_index: int = 0
    fast_path: Optional[Fraction] = None

    @classmethod
    def rational(cls, value) -> "AlgebraicNumber":
        q = Fraction(value)
        return cls((-q.numerator, q.denominator), 0, q)

    @classmethod
    def root_of(cls, coeffs: Sequence[int], root_index: int) -> "AlgebraicNumber":
        poly = field_poly(coeffs, QQ)
        if poly.degree() == 1:
            a, b = poly.rep.to_list()
            return cls.rational(-element_to_fraction(b) / element_to_fraction(a))
        if not poly.is_irreducible:
            raise ValueError(f"minimal polynomial {coeffs} is reducible")
        return cls(_primitive_integer_coeffs(poly), root_index)

    @classmethod
    def from_element(cls, c, K=QQ) -> "AlgebraicNumber":
        q = element_to_fraction(c, K)
        if q is not None:
            return cls.rational(q)
        minpoly = _element_minpoly(c, K)
        if minpoly.degree() == 1:
            a, b = minpoly.rep.to_list()
            return cls.rational(-element_to_fraction(b) / element_to_fraction(a))
        value = element_value(c, K)
        roots = [complex(r.evalf(HEIGHT_DPS)) for r in minpoly.all_roots()]
        index = min(range(len(roots)), key=lambda i: abs(roots[i] - value))
        return cls(_primitive_integer_coeffs(minpoly), index)

    @property
    def degree(self) -> int:
        return len(self.minimal_polynomial) - 1

    @property
    def is_rational(self) -> bool:
        return self.fast_path is not None

    def numeric(self) -> complex:
        if self.is_rational:
            return complex(self.fast_path.numerator / self.fast_path.denominator)
        root = field_poly(self.minimal_polynomial).all_roots()[self.root_index]
        return complex(root.evalf(HEIGHT_DPS))

    def to_element(self, K=QQ):
        if self.is_rational:
            return to_field(self.fast_path, K)
        target = self.numeric()
        candidates = roots_in_field(self.minimal_polynomial, K)
        return min(candidates, key=lambda r: abs(element_value(r, K) - target))

    def sort_key(self):
        rational = self.fast_path if self.is_rational else Fraction(0)
        return (self.degree, rational, self.minimal_polynomial, self.root_index)

    def to_json(self):
        if self.is_rational:
            return fraction_str(self.fast_path)
        return {"minpoly": list(self.minimal_polynomial), "root": self.root_index}

    def __str__(self) -> str:
        if self.is_rational:
            return fraction_str(self.fast_path)
        coeffs = ",".join(str(c) for c in self.minimal_polynomial)
        return f"root([{coeffs}];{self.root_index})"


def fraction_str(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def element_str(c, K=QQ) -> str:
    q = element_to_fraction(c, K)
    if q is not None:
        return fraction_str(q)
    return f"({K.to_sympy(c)})"


def mahler_measure(coeffs: Sequence[int]) -> float:
    """Mahler measure |lead| * prod max(1, |root|) of an integer polynomial."""
    desc = [int(c) for c in reversed(list(coeffs))]
    while desc and desc[0] == 0:
        desc.pop(0)
    if len(desc) <= 1:
        return float(abs(desc[0])) if desc else 0.0
    with mpmath.workdps(HEIGHT_DPS):
        roots = mpmath.polyroots(desc, maxsteps=200, extraprec=4 * HEIGHT_DPS)
        measure = mpmath.mpf(abs(desc[0]))
        for r in roots:
            measure *= max(mpmath.mpf(1), abs(r))
        return float(measure)


def weil_height(value) -> float:
    """Logarithmic Weil height of a rational or algebraic number."""
    if isinstance(value, AlgebraicNumber):
        if value.is_rational:
            value = value.fast_path
        else:
            return math.log(mahler_measure(value.minimal_polynomial)) / value.degree
    q = Fraction(value) if not isinstance(value, Fraction) else value
    if q == 0:
        return 0.0
    return math.log(max(abs(q.numerator), q.denominator))


def is_root_of_unity(value) -> Optional[int]:
    """Order of ``value`` as a root of unity, or None."""
    if not isinstance(value, AlgebraicNumber):
        value = AlgebraicNumber.rational(value)
    if value.is_rational:
        if value.fast_path == 0:
            raise ValueError("0 is not a root of unity candidate")
        return {1: 1, -1: 2}.get(value.fast_path)
    degree = value.degree
    for n in range(1, 2 * degree * degree + 1):
        if int(totient(n)) != degree:
            continue
        cyclo = cyclotomic_poly(n, x, polys=True)
        if tuple(reversed([int(c) for c in cyclo.all_coeffs()])) == value.minimal_polynomial:
            return n
    return None


def roots_in_field(coeffs: Sequence, K=QQ) -> list:
    """Roots with multiplicity of a polynomial that splits over ``K``."""
    poly = field_poly(coeffs, K)
    roots = []
    for factor, mult in poly.factor_list()[1]:
        if factor.degree() != 1:
            raise UnsupportedSplitting(f"{poly.as_expr()} does not split over {K}")
        a, b = (K.convert_from(c, factor.rep.dom) for c in factor.rep.to_list())
        roots.extend([-b / a] * mult)
    return sorted(roots, key=lambda r: AlgebraicNumber.from_element(r, K).sort_key())


def _field_degree(K) -> int:
    return 1 if K.is_QQ else K.mod.degree()


def _root_of_factor(factor: Poly, K):
    """A root of the irreducible ``factor`` over ``K``, as a sympy number."""
    over_q = factor if K.is_QQ else factor.norm()
    values = [element_value(K.convert_from(c, factor.rep.dom), K) for c in factor.rep.to_list()]

    def residual(root) -> float:
        point = complex(root.evalf(HEIGHT_DPS))
        result = 0j
        for v in values:
            result = result * point + v
        return abs(result)

    candidates = [r for g, _ in over_q.factor_list()[1] for r in g.all_roots(radicals=False)]
    return min(candidates, key=residual)


def number_field_for(polys: Iterable[Sequence], base=QQ, max_degree: int = 6):
    """Smallest supported field in which all given polynomials split.

    Roots of factors that do not split yet are adjoined one at a time and the
    composite is rebuilt from all adjoined roots through a primitive element.
    """
    given = [field_poly(coeffs, base) for coeffs in polys]
    generators = []
    K = base
    while True:
        pending = [
            factor
            for poly in given
            for factor, _ in poly.set_domain(K).factor_list()[1]
            if factor.degree() > 1
        ]
        if not pending:
            break
        if not base.is_QQ:
            raise UnsupportedSplitting(f"a second extension over {base} is required")
        factor = max(pending, key=lambda f: f.degree())
        degree = _field_degree(K) * factor.degree()
        if degree > max_degree:
            raise UnsupportedSplitting(
                f"splitting field of degree at least {degree} exceeds the bound {max_degree}"
            )
        generators.append(_root_of_factor(factor, K))
        K = QQ.algebraic_field(*generators)
    if generators:
        logger.debug("working over %s of degree %d", K, _field_degree(K))
    return K


def constant_matrix(rows: Sequence[Sequence], K=QQ) -> DomainMatrix:
    data = [[to_field(v, K) for v in row] for row in rows]
    return DomainMatrix(data, (len(data), len(data[0]) if data else 0), K)


def identity(n: int, K=QQ) -> DomainMatrix:
    return DomainMatrix.eye(n, K).to_dense()


def scalar_matrix(c, n: int, K=QQ) -> DomainMatrix:
    return DomainMatrix.diag([c] * n, K).to_dense()


def evaluate_polynomial(poly: Poly, M: DomainMatrix) -> DomainMatrix:
    n = M.shape[0]
    K = M.domain
    result = DomainMatrix.zeros((n, n), K).to_dense()
    for c in poly.rep.to_list():
        result = result * M + scalar_matrix(K.convert(c), n, K)
    return result


def dunford_additive(M: DomainMatrix) -> Tuple[DomainMatrix, DomainMatrix]:
    """Split M = D + N with D semisimple, N nilpotent and DN = ND."""
    K = M.domain
    n = M.shape[0]
    squarefree = Poly.new(DMP(M.charpoly(), K, 0), x).sqf_part()
    derivative = squarefree.diff(x)
    D = M.to_dense()
    for _ in range(2 * n + 2):
        residue = evaluate_polynomial(squarefree, D)
        if residue.is_zero_matrix:
            break
        D = D - residue * evaluate_polynomial(derivative, D).inv()
    else:
        raise ArithmeticError("Jordan-Chevalley iteration did not converge")
    return D, M.to_dense() - D


def dunford_multiplicative(M: DomainMatrix) -> Tuple[DomainMatrix, DomainMatrix]:
    """Split an invertible M = U D with U unipotent, D semisimple, UD = DU."""
    if not M.det():
        raise ValueError("multiplicative decomposition needs an invertible matrix")
    D, N = dunford_additive(M)
    U = identity(M.shape[0], M.domain) + N * D.inv()
    return U, D


@dataclass(frozen=True)
class EigenStructure:
    field: object
    spectrum: Tuple[Tuple[AlgebraicNumber, int], ...]
    eigenvalues: Tuple
    P: DomainMatrix
    semisimple: DomainMatrix
    nilpotent: DomainMatrix

    def diagonal(self) -> DomainMatrix:
        return DomainMatrix.diag(list(self.eigenvalues), self.field).to_dense()


def eigen_structure(M: DomainMatrix, max_degree: int = 6) -> EigenStructure:
    """Eigenvalues and an eigenbasis of the semisimple part of M.

    Columns of P are grouped by eigenvalue in AlgebraicNumber order, so that
    D = P diag(eigenvalues) P^-1.
    """
    charpoly = list(reversed(M.charpoly()))
    K = number_field_for([charpoly], base=M.domain, max_degree=max_degree)
    MK = M.convert_to(K).to_dense()
    D, N = dunford_additive(MK)
    n = M.shape[0]
    roots = roots_in_field([K.convert_from(c, M.domain) for c in charpoly], K)
    distinct = []
    for r in roots:
        if not distinct or distinct[-1] != r:
            distinct.append(r)
    columns, eigenvalues, spectrum = [], [], []
    for c in distinct:
        basis = (D - scalar_matrix(c, n, K)).nullspace().to_list()
        columns.extend(basis)
        eigenvalues.extend([c] * len(basis))
        spectrum.append((AlgebraicNumber.from_element(c, K), roots.count(c)))
    P = DomainMatrix(columns, (n, n), K).transpose().to_dense()
    return EigenStructure(K, tuple(spectrum), tuple(eigenvalues), P, D, N)


def unify_fields(*fields):
    """The common coefficient field of several operands."""
    result = QQ
    for K in fields:
        if K is None or K == result or K.is_QQ:
            continue
        if result.is_QQ:
            result = K
        else:
            raise UnsupportedSplitting(f"cannot combine {result} and {K}")
    return result


def p_adic_valuation(value, p: int) -> Optional[int]:
    """v_p of a nonzero rational; None for 0."""
    q = Fraction(value)
    if q == 0:
        return None
    v = 0
    num, den = q.numerator, q.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v
