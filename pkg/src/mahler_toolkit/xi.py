"""The xi-algebra: Hahn series xi_omega indexed by (alpha, lambda, a).

xi_omega = sum over k_1..k_t >= 1 of
    k_1^alpha_1 ... k_t^alpha_t * lambda_1^(l_1) ... lambda_t^(l_t) * z^(-sum a_j / p^(l_j))
with l_j = k_1 + ... + k_j. The empty index is the constant 1.

Expressions are finite sums of Puiseux coefficients times xi_omega. They are
rewritten symbolically and checked against finite window expansions.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

from sympy import QQ, Poly, Symbol, binomial, interpolate, symbols
from sympy.polys.matrices import DomainMatrix

from mahler_toolkit.algebra import (
    AlgebraicNumber,
    element_str,
    element_to_fraction,
    p_adic_valuation,
    to_field,
    unify_fields,
)
from mahler_toolkit.errors import NoRelationFound, RecursionBudgetExceeded
from mahler_toolkit.operators import MahlerOperator, normalize
from mahler_toolkit.series import TruncatedPuiseux

logger = logging.getLogger(__name__)

RAW = "raw"
STANDARD = "standard"
TILDE = "tilde"


def _lam_key(value) -> Tuple[Fraction, ...]:
    if hasattr(value, "to_list"):
        return tuple(element_to_fraction(c) for c in value.to_list())
    return (element_to_fraction(value),)


@dataclass(frozen=True)
class XiIndex:
    alpha: Tuple[int, ...] = ()
    lam: Tuple = ()
    a: Tuple[Fraction, ...] = ()

    def __post_init__(self):
        if not len(self.alpha) == len(self.lam) == len(self.a):
            raise ValueError("alpha, lambda and a must have the same length")
        if any(x < 0 for x in self.alpha):
            raise ValueError("alpha entries must be nonnegative")
        if any(not l for l in self.lam):
            raise ValueError("lambda entries must be nonzero")
        if any(x <= 0 for x in self.a):
            raise ValueError("a entries must be positive")

    @classmethod
    def create(cls, alpha: Sequence[int], lam: Sequence, a: Sequence, K=QQ) -> "XiIndex":
        return cls(
            tuple(int(x) for x in alpha),
            tuple(to_field(l, K) for l in lam),
            tuple(Fraction(x) for x in a),
        )

    @property
    def length(self) -> int:
        return len(self.alpha)

    @property
    def tail(self) -> "XiIndex":
        return XiIndex(self.alpha[1:], self.lam[1:], self.a[1:])

    def product(self, K):
        result = K.one
        for l in self.lam:
            result = result * l
        return result

    def prepend(self, alpha: int, lam, a) -> "XiIndex":
        return XiIndex((alpha,) + self.alpha, (lam,) + self.lam, (Fraction(a),) + self.a)

    def with_first_alpha(self, alpha: int) -> "XiIndex":
        return XiIndex((alpha,) + self.alpha[1:], self.lam, self.a)

    def is_standard(self, p: int) -> bool:
        return all(p_adic_valuation(x, p) == 0 for x in self.a)

    def minimal_exponent(self, p: int) -> Fraction:
        """Exponent of the term k_1 = ... = k_t = 1, the smallest one."""
        return -sum((x / Fraction(p) ** (j + 1) for j, x in enumerate(self.a)), Fraction(0))

    def sort_key(self):
        return (self.length, self.alpha, self.a, tuple(_lam_key(l) for l in self.lam))

    def label(self, K=QQ) -> str:
        if not self.length:
            return "1"
        alpha = ",".join(str(x) for x in self.alpha)
        lam = ",".join(element_str(l, K) for l in self.lam)
        a = ",".join(str(x) for x in self.a)
        return f"xi[alpha=({alpha}); lambda=({lam}); a=({a})]"

    def __str__(self) -> str:
        return self.label()


EMPTY = XiIndex()


def xi_scale(omega: XiIndex, m) -> XiIndex:
    """Rescale the a-entries; sigma^j(xi_omega) is xi_omega with a scaled by p^j."""
    m = Fraction(m)
    if m <= 0:
        raise ValueError(f"scale factor must be positive, got {m}")
    return XiIndex(omega.alpha, omega.lam, tuple(x * m for x in omega.a))


class XiExpr:
    """Finite sum of Puiseux coefficients times xi_omega."""

    __slots__ = ("terms", "domain", "basis")

    def __init__(self, terms=None, domain=QQ, basis: str = RAW):
        terms = dict(terms or {})
        domain = unify_fields(domain, *(f.domain for f in terms.values() if isinstance(f, TruncatedPuiseux)))
        clean: Dict[XiIndex, TruncatedPuiseux] = {}
        for omega, f in terms.items():
            if not isinstance(f, TruncatedPuiseux):
                f = TruncatedPuiseux.constant(f, domain)
            f = f.convert(domain)
            clean[omega] = clean[omega] + f if omega in clean else f
        self.terms = {k: v for k, v in clean.items() if not (v.is_exact and v.is_zero())}
        self.domain = domain
        self.basis = basis

    @classmethod
    def one(cls, K=QQ) -> "XiExpr":
        return cls({EMPTY: TruncatedPuiseux.constant(1, K)}, K, STANDARD)

    @classmethod
    def xi(cls, omega: XiIndex, coefficient=1, K=QQ) -> "XiExpr":
        return cls({omega: coefficient}, K)

    @classmethod
    def from_series(cls, f: TruncatedPuiseux) -> "XiExpr":
        return cls({EMPTY: f}, f.domain, STANDARD)

    def _combine(self, other: "XiExpr", sign: int) -> "XiExpr":
        K = unify_fields(self.domain, other.domain)
        terms = {k: v.convert(K) for k, v in self.terms.items()}
        for omega, f in other.terms.items():
            f = f.convert(K) if sign > 0 else -f.convert(K)
            terms[omega] = terms[omega] + f if omega in terms else f
        basis = self.basis if self.basis == other.basis else RAW
        return XiExpr(terms, K, basis)

    def _coerce(self, other) -> "XiExpr":
        if isinstance(other, XiExpr):
            return other
        if isinstance(other, TruncatedPuiseux):
            return XiExpr.from_series(other)
        return XiExpr.from_series(TruncatedPuiseux.constant(other, self.domain))

    def __add__(self, other) -> "XiExpr":
        return self._combine(self._coerce(other), 1)

    __radd__ = __add__

    def __sub__(self, other) -> "XiExpr":
        return self._combine(self._coerce(other), -1)

    def __neg__(self) -> "XiExpr":
        return XiExpr({k: -v for k, v in self.terms.items()}, self.domain, self.basis)

    def __mul__(self, other) -> "XiExpr":
        """Multiply every coefficient by a scalar or a Puiseux series."""
        if isinstance(other, XiExpr):
            raise TypeError("use xi_multiply for products of xi expressions")
        if isinstance(other, TruncatedPuiseux):
            K = unify_fields(self.domain, other.domain)
            return XiExpr({k: v * other for k, v in self.terms.items()}, K, self.basis)
        return XiExpr({k: v * other for k, v in self.terms.items()}, self.domain, self.basis)

    __rmul__ = __mul__

    def convert(self, K) -> "XiExpr":
        return XiExpr({k: v.convert(K) for k, v in self.terms.items()}, K, self.basis)

    def truncate(self, precision) -> "XiExpr":
        return XiExpr({k: v.truncate(precision) for k, v in self.terms.items()}, self.domain, self.basis)

    def is_zero(self) -> bool:
        return all(f.is_zero() for f in self.terms.values())

    @property
    def precision(self) -> Optional[Fraction]:
        known = [f.precision for f in self.terms.values() if f.precision is not None]
        return min(known) if known else None

    def coefficient(self, omega: XiIndex) -> TruncatedPuiseux:
        return self.terms.get(omega, TruncatedPuiseux.zero(None, self.domain))

    def items(self) -> List[Tuple[XiIndex, TruncatedPuiseux]]:
        return sorted(self.terms.items(), key=lambda kv: kv[0].sort_key())

    def sigma(self, p: int, j: int = 1) -> "XiExpr":
        result = XiExpr({}, self.domain, self.basis)
        for omega, f in self.terms.items():
            result = result + xi_shift(omega, j, p, self.domain) * f.sigma(p, j)
        result.basis = self.basis
        return result

    def agrees_with(self, other: "XiExpr", precision) -> bool:
        difference = self - other
        return all(f.agrees_with(TruncatedPuiseux.zero(None, f.domain), precision)
                   for f in difference.terms.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, XiExpr):
            return NotImplemented
        difference = self - other
        return all(f.is_exact and f.is_zero() for f in difference.terms.values()) and (
            self.precision == other.precision
        )

    __hash__ = None

    def __str__(self) -> str:
        parts = []
        for omega, f in self.items():
            if not omega.length:
                parts.append(f"({f})")
            else:
                parts.append(f"({f})*{omega.label(self.domain)}")
        return " + ".join(parts) if parts else "0"

    def __repr__(self) -> str:
        return f"XiExpr({self})"


def filtration_degree(e: XiExpr) -> int:
    """Largest index length carried by a nonzero term."""
    return max((omega.length for omega, f in e.terms.items() if not f.is_zero()), default=0)


# --- Mahler shifts -------------------------------------------------------------------


@lru_cache(maxsize=4096)
def _shift_up(omega: XiIndex, p: int, K) -> XiExpr:
    """sigma(xi_omega) = L xi_omega + L z^(-a_1) xi_tail + L sum_{j<alpha_1} C(alpha_1, j) xi_(j, ...)."""
    if not omega.length:
        return XiExpr.one(K)
    lam = omega.product(K)
    terms = {omega: TruncatedPuiseux.constant(lam, K)}
    terms[omega.tail] = TruncatedPuiseux.monomial(lam, -omega.a[0], K)
    for j in range(omega.alpha[0]):
        terms[omega.with_first_alpha(j)] = TruncatedPuiseux.constant(
            lam * K.convert(int(binomial(omega.alpha[0], j))), K
        )
    return XiExpr(terms, K)


@lru_cache(maxsize=4096)
def _shift_down(omega: XiIndex, p: int, K) -> XiExpr:
    """sigma^-1(xi_omega) = L^-1 sum_j C(alpha_1, j)(-1)^(alpha_1-j) xi_(j, ...) - [alpha_1 = 0] z^(-a_1/p) sigma^-1(xi_tail)."""
    if not omega.length:
        return XiExpr.one(K)
    inv = K.one / omega.product(K)
    alpha1 = omega.alpha[0]
    terms = {}
    for j in range(alpha1 + 1):
        c = int(binomial(alpha1, j)) * (-1) ** (alpha1 - j)
        terms[omega.with_first_alpha(j)] = TruncatedPuiseux.constant(inv * K.convert(c), K)
    result = XiExpr(terms, K)
    if alpha1 == 0:
        monomial = TruncatedPuiseux.monomial(-1, -omega.a[0] / p, K)
        result = result + _shift_down(omega.tail, p, K) * monomial
    return result


def xi_shift(omega: XiIndex, j: int, p: int, K=QQ) -> XiExpr:
    """sigma^j(xi_omega) rewritten over indices with the same a-entries."""
    expr = XiExpr.xi(omega, 1, K)
    if j == 0:
        return expr
    step = _shift_up if j > 0 else _shift_down
    direction = 1 if j > 0 else -1
    for _ in range(abs(j)):
        result = XiExpr({}, K)
        for tau, f in expr.terms.items():
            result = result + step(tau, p, K) * f.sigma(p, direction)
        expr = result
    return expr


# --- tilde basis and products --------------------------------------------------------


@lru_cache(maxsize=1024)
def _difference_expansion(alpha: Tuple[int, ...]) -> Tuple[Tuple[Tuple[int, ...], Fraction], ...]:
    """prod (l_i - l_(i-1))^alpha_i as a polynomial in l_1..l_t."""
    t = len(alpha)
    ls = symbols(f"l1:{t + 1}")
    expr = 1
    for i, e in enumerate(alpha):
        expr *= (ls[i] - (ls[i - 1] if i else 0)) ** e
    poly = Poly(expr, *ls, domain=QQ)
    return tuple((m, element_to_fraction(c)) for m, c in poly.terms())


@lru_cache(maxsize=1024)
def _partial_sum_expansion(beta: Tuple[int, ...]) -> Tuple[Tuple[Tuple[int, ...], Fraction], ...]:
    """prod (k_1 + ... + k_i)^beta_i as a polynomial in k_1..k_t."""
    t = len(beta)
    ks = symbols(f"k1:{t + 1}")
    expr = 1
    for i, e in enumerate(beta):
        expr *= sum(ks[: i + 1]) ** e
    poly = Poly(expr, *ks, domain=QQ)
    return tuple((m, element_to_fraction(c)) for m, c in poly.terms())


def xi_to_tilde(e: XiExpr) -> XiExpr:
    """Rewrite over the tilde basis sum prod l_i^beta_i lambda_i^l_i z^(-sum a_i/p^l_i)."""
    K = e.domain
    terms: Dict[XiIndex, TruncatedPuiseux] = {}
    for omega, f in e.terms.items():
        if not omega.length:
            terms[omega] = terms[omega] + f if omega in terms else f
            continue
        for beta, c in _difference_expansion(omega.alpha):
            idx = XiIndex(tuple(beta), omega.lam, omega.a)
            part = f * to_field(c, K)
            terms[idx] = terms[idx] + part if idx in terms else part
    return XiExpr(terms, K, TILDE)


def tilde_to_xi(e: XiExpr) -> XiExpr:
    K = e.domain
    terms: Dict[XiIndex, TruncatedPuiseux] = {}
    for omega, f in e.terms.items():
        if not omega.length:
            terms[omega] = terms[omega] + f if omega in terms else f
            continue
        for alpha, c in _partial_sum_expansion(omega.alpha):
            idx = XiIndex(tuple(alpha), omega.lam, omega.a)
            part = f * to_field(c, K)
            terms[idx] = terms[idx] + part if idx in terms else part
    return XiExpr(terms, K, RAW)


Letter = Tuple[int, object, Fraction]


def _letters(omega: XiIndex) -> Tuple[Letter, ...]:
    return tuple(zip(omega.alpha, omega.lam, omega.a))


def _from_letters(word: Sequence[Letter]) -> XiIndex:
    if not word:
        return EMPTY
    alpha, lam, a = zip(*word)
    return XiIndex(tuple(alpha), tuple(lam), tuple(a))


@lru_cache(maxsize=8192)
def _stuffle(u: Tuple[Letter, ...], v: Tuple[Letter, ...]) -> Tuple[Tuple[Tuple[Letter, ...], int], ...]:
    """Quasi-shuffle of two strictly increasing summation words."""
    if not u:
        return ((v, 1),)
    if not v:
        return ((u, 1),)
    out: Dict[Tuple[Letter, ...], int] = {}
    merged = (u[0][0] + v[0][0], u[0][1] * v[0][1], u[0][2] + v[0][2])
    for head, rest in ((u[0], _stuffle(u[1:], v)), (v[0], _stuffle(u, v[1:])), (merged, _stuffle(u[1:], v[1:]))):
        for word, mult in rest:
            key = (head,) + word
            out[key] = out.get(key, 0) + mult
    return tuple(out.items())


def xi_multiply(e1: XiExpr, e2: XiExpr, p: int) -> XiExpr:
    """Product in the xi-algebra, via the tilde basis and quasi-shuffles."""
    K = unify_fields(e1.domain, e2.domain)
    t1 = xi_to_tilde(e1.convert(K))
    t2 = xi_to_tilde(e2.convert(K))
    terms: Dict[XiIndex, TruncatedPuiseux] = {}
    for w1, f1 in t1.terms.items():
        for w2, f2 in t2.terms.items():
            coeff = f1 * f2
            for word, mult in _stuffle(_letters(w1), _letters(w2)):
                idx = _from_letters(word)
                part = coeff * mult
                terms[idx] = terms[idx] + part if idx in terms else part
    return tilde_to_xi(XiExpr(terms, K, TILDE))


# --- sigma^-1 sums -------------------------------------------------------------------


@lru_cache(maxsize=256)
def _faulhaber(beta: int) -> Tuple[Fraction, ...]:
    """Coefficients (ascending) of T(n) = sum_{k=1}^{n-1} k^beta."""
    n = Symbol("n")
    points = []
    total = Fraction(0)
    for m in range(1, beta + 3):
        points.append((m, total))
        total += Fraction(m) ** beta
    expr = interpolate([(x, QQ(y.numerator, y.denominator)) for x, y in points], n)
    coeffs = Poly(expr, n, domain=QQ).rep.to_list()
    return tuple(element_to_fraction(c) for c in reversed(coeffs))


def _geometric_polynomial(beta: int, lam0, K) -> List:
    """U of degree beta with lam0 U(k+1) - U(k) = k^beta."""
    u = [K.zero] * (beta + 1)
    for j in range(beta, -1, -1):
        rhs = K.one if j == beta else K.zero
        for i in range(j + 1, beta + 1):
            rhs -= lam0 * u[i] * K.convert(int(binomial(i, j)))
        u[j] = rhs / (lam0 - K.one)
    return u


def _poly_add(target: List, coeffs: Sequence, scale, shift: int, K) -> None:
    for i, c in enumerate(coeffs):
        while len(target) <= i + shift:
            target.append(K.zero)
        target[i + shift] += scale * c


def _sum_bare(alpha: int, c, omega: XiIndex, K) -> XiExpr:
    """sum_{k>=1} k^alpha c^k sigma^-k(xi_omega) for a nonempty omega."""
    lam = omega.product(K)
    lam0 = c / lam
    alpha1 = omega.alpha[0]
    tail_product = omega.tail.product(K)
    q_poly: List = []
    r_poly: List = []
    for s in range(alpha1 + 1):
        weight = K.convert(int(binomial(alpha1, s)) * (-1) ** (alpha1 - s))
        beta = alpha + alpha1 - s
        if lam0 == K.one:
            _poly_add(r_poly, [to_field(x, K) for x in _faulhaber(beta)], weight, s, K)
        else:
            u = _geometric_polynomial(beta, lam0, K)
            u_at_one = sum(u, K.zero)
            _poly_add(q_poly, u, weight, s, K)
            _poly_add(r_poly, [-lam0 * u_at_one], weight, s, K)
    terms: Dict[XiIndex, TruncatedPuiseux] = {}
    for i, coeff in enumerate(r_poly):
        if coeff:
            idx = omega.with_first_alpha(i)
            terms[idx] = terms.get(idx, TruncatedPuiseux.zero(None, K)) + TruncatedPuiseux.constant(coeff, K)
    twisted = XiIndex(omega.alpha, (c / tail_product,) + omega.lam[1:], omega.a)
    for i, coeff in enumerate(q_poly):
        if coeff:
            idx = twisted.with_first_alpha(i)
            terms[idx] = terms.get(idx, TruncatedPuiseux.zero(None, K)) + TruncatedPuiseux.constant(coeff, K)
    return XiExpr(terms, K)


def xi_sigma_inverse_sum(alpha: int, c, h: XiExpr, p: int) -> XiExpr:
    """Closed form of sum_{k>=1} k^alpha c^k sigma^-k(h).

    ``h`` is a sum of terms z^(-gamma) xi_omega with gamma > 0, or gamma = 0
    and omega nonempty.
    """
    K = h.domain
    c = to_field(c, K)
    if not c:
        raise ValueError("the ratio c of a sigma^-1 sum must be nonzero")
    result = XiExpr({}, K)
    for omega, f in h.terms.items():
        if not f.is_exact:
            raise ValueError("sigma^-1 sums need exact coefficients")
        for e, coeff in f.terms.items():
            if e < 0:
                idx = omega.prepend(alpha, c / omega.product(K), -e)
                result = result + XiExpr.xi(idx, TruncatedPuiseux.constant(coeff, K), K)
            elif e == 0 and omega.length:
                result = result + _sum_bare(alpha, c, omega, K) * coeff
            else:
                raise ValueError(f"divergent sigma^-1 sum for z^{e} {omega}")
    return result


# --- standardization -------------------------------------------------------------------


_standard_cache: Dict[Tuple[XiIndex, int, object], XiExpr] = {}


def clear_caches() -> None:
    _standard_cache.clear()
    _shift_up.cache_clear()
    _shift_down.cache_clear()


def _split_p(gamma: Fraction, p: int) -> Tuple[Fraction, int]:
    u = p_adic_valuation(gamma, p)
    return gamma / Fraction(p) ** u, u


def _std_index(omega: XiIndex, p: int, K, budget: int) -> XiExpr:
    if not omega.length:
        return XiExpr.one(K)
    key = (omega, p, K)
    cached = _standard_cache.get(key)
    if cached is not None:
        return cached
    if budget <= 0:
        raise RecursionBudgetExceeded(f"standardization of {omega} exceeded its budget")
    tail = omega.tail
    tail_std = _std_index(tail, p, K, budget - 1)
    lam = omega.product(K)
    result = XiExpr({}, K)
    for tau, f in tail_std.terms.items():
        first_lam = lam / tau.product(K)
        for e, coeff in f.terms.items():
            if e > 0:
                raise ValueError(f"standard coefficient with positive exponent {e}")
            new = tau.prepend(omega.alpha[0], first_lam, omega.a[0] - e)
            if tau.length < tail.length:
                part = _std_index(new, p, K, budget - 1)
            else:
                part = _fix_first(new, p, K, budget - 1)
            result = result + part * coeff
    result.basis = STANDARD
    _standard_cache[key] = result
    return result


def _fix_first(omega: XiIndex, p: int, K, budget: int) -> XiExpr:
    """Standardize omega whose tail is already standard."""
    if budget <= 0:
        raise RecursionBudgetExceeded(f"standardization of {omega} exceeded its budget")
    eta, u = _split_p(omega.a[0], p)
    if u == 0:
        return XiExpr({omega: 1}, K, STANDARD)
    alpha1 = omega.alpha[0]
    tail = omega.tail
    lam = omega.product(K)
    result = XiExpr({}, K)
    if u > 0:
        for k in range(1, u + 1):
            coeff = K.convert(k ** alpha1) * lam ** k
            monomial = TruncatedPuiseux.monomial(coeff, -eta * Fraction(p) ** (u - k), K)
            result = result + _std_index(xi_scale(tail, Fraction(1, p ** k)), p, K, budget - 1) * monomial
        scaled = xi_scale(tail, Fraction(1, p ** u))
        for j in range(alpha1 + 1):
            weight = int(binomial(alpha1, j)) * u ** (alpha1 - j)
            idx = scaled.prepend(j, omega.lam[0], eta)
            result = result + _std_index(idx, p, K, budget - 1) * (lam ** u * K.convert(weight))
    else:
        v = -u
        inv = (K.one / lam) ** v
        scaled = xi_scale(tail, Fraction(p ** v))
        for j in range(alpha1 + 1):
            weight = int(binomial(alpha1, j)) * (-v) ** (alpha1 - j)
            idx = scaled.prepend(j, omega.lam[0], eta)
            result = result + _std_index(idx, p, K, budget - 1) * (inv * K.convert(weight))
        for m in range(1, v + 1):
            weight = (m - v) ** alpha1
            if not weight:
                continue
            coeff = inv * lam ** m * K.convert(weight)
            monomial = TruncatedPuiseux.monomial(-coeff, -eta / Fraction(p) ** m, K)
            result = result + _std_index(xi_scale(tail, Fraction(p ** (v - m))), p, K, budget - 1) * monomial
    result.basis = STANDARD
    return result


def standardize(g, p: int, budget: int = 64):
    """Rewrite an XiExpr or GeneralizedSeries over standard indices only."""
    if isinstance(g, GeneralizedSeries):
        return GeneralizedSeries(
            {key: standardize(expr, p, budget) for key, expr in g.terms.items()}, g.domain
        )
    K = g.domain
    if g.basis == TILDE:
        g = tilde_to_xi(g)
    result = XiExpr({}, K)
    for omega, f in g.terms.items():
        result = result + _std_index(omega, p, K, budget) * f
    result.basis = STANDARD
    return result


# --- annihilators ----------------------------------------------------------------------


def _closure(omega: XiIndex) -> List[XiIndex]:
    seen = []
    stack = [omega]
    while stack:
        tau = stack.pop()
        if tau in seen:
            continue
        seen.append(tau)
        if tau.length:
            stack.append(tau.tail)
            stack.extend(tau.with_first_alpha(j) for j in range(tau.alpha[0]))
    return sorted(seen, key=lambda t: t.sort_key())


def xi_annihilator(omega: XiIndex, p: int, K=QQ) -> MahlerOperator:
    """A Mahler operator with polynomial coefficients annihilating xi_omega."""
    closure = _closure(omega)
    position = {tau: i for i, tau in enumerate(closure)}
    n = len(closure)
    transition = []
    for tau in closure:
        row = [TruncatedPuiseux.zero(None, K)] * n
        for rho, f in _shift_up(tau, p, K).terms.items():
            row[position[rho]] = f
        transition.append(row)
    u = [TruncatedPuiseux.zero(None, K)] * n
    u[position[omega]] = TruncatedPuiseux.constant(1, K)
    rows = [u]
    w = Symbol("w")
    F = K.frac_field(w)
    W = F.field.gens[0]
    for d in range(1, n + 1):
        previous = rows[-1]
        nxt = []
        for col in range(n):
            acc = TruncatedPuiseux.zero(None, K)
            for r in range(n):
                if not previous[r].is_zero() and not transition[r][col].is_zero():
                    acc = acc + previous[r].sigma(p) * transition[r][col]
            nxt.append(acc)
        rows.append(nxt)
        q = 1
        for row in rows:
            for f in row:
                q = math.lcm(q, f.ramification)
        shifts, matrix = [], []
        for row in rows:
            low = min((f.valuation() for f in row if not f.is_zero()), default=Fraction(0))
            shifts.append(low)
            entries = []
            for f in row:
                value = F.field.zero
                for e, c in f.terms.items():
                    value += F.field.ground_new(c) * W ** int((e - low) * q)
                entries.append(value)
            matrix.append(entries)
        M = DomainMatrix(matrix, (d + 1, n), F).transpose()
        basis = M.nullspace().to_list()
        if not basis:
            continue
        vector = basis[0]
        denominator = None
        for c in vector:
            if c:
                denominator = c.denom if denominator is None else denominator.lcm(c.denom)
        coeffs = []
        for k, c in enumerate(vector):
            terms = {}
            if c:
                numerator = c.numer * denominator.exquo(c.denom)
                for (i,), value in numerator.terms():
                    terms[Fraction(i, q) - shifts[k]] = value
            coeffs.append(TruncatedPuiseux(terms, None, K))
        logger.debug("annihilator of %s has order %d", omega, d)
        return normalize(MahlerOperator(p, coeffs))
    raise NoRelationFound(f"no annihilator found for {omega}")


# --- generalized series ------------------------------------------------------------------


def _label_key(key):
    c, j = key
    return (_lam_key(c), j)


class GeneralizedSeries:
    """Finite sum over (c, j) of XiExpr * e_c * l^j."""

    __slots__ = ("terms", "domain")

    def __init__(self, terms=None, domain=QQ):
        self.terms: Dict[Tuple[object, int], XiExpr] = {}
        for (c, j), expr in (terms or {}).items():
            if not c:
                raise ValueError("e_c labels need c != 0")
            if j < 0:
                raise ValueError("powers of l must be nonnegative")
            key = (to_field(c, domain), int(j))
            self.terms[key] = self.terms[key] + expr if key in self.terms else expr
        self.domain = domain

    @classmethod
    def from_xi(cls, expr: XiExpr, c=1, j: int = 0) -> "GeneralizedSeries":
        return cls({(c, j): expr}, expr.domain)

    def __add__(self, other: "GeneralizedSeries") -> "GeneralizedSeries":
        K = unify_fields(self.domain, other.domain)
        terms = {k: v.convert(K) for k, v in self.terms.items()}
        for key, expr in other.terms.items():
            key = (to_field(key[0], K), key[1])
            terms[key] = terms[key] + expr.convert(K) if key in terms else expr.convert(K)
        return GeneralizedSeries(terms, K)

    def __neg__(self) -> "GeneralizedSeries":
        return GeneralizedSeries({k: -v for k, v in self.terms.items()}, self.domain)

    def __sub__(self, other: "GeneralizedSeries") -> "GeneralizedSeries":
        return self + (-other)

    def __mul__(self, other) -> "GeneralizedSeries":
        return GeneralizedSeries({k: v * other for k, v in self.terms.items()}, self.domain)

    __rmul__ = __mul__

    def sigma(self, p: int) -> "GeneralizedSeries":
        """sigma(e_c) = c e_c and sigma(l) = l + 1."""
        K = self.domain
        out: Dict[Tuple[object, int], XiExpr] = {}
        for (c, j), expr in self.terms.items():
            shifted = expr.sigma(p)
            for jj in range(j + 1):
                part = shifted * (c * K.convert(int(binomial(j, jj))))
                key = (c, jj)
                out[key] = out[key] + part if key in out else part
        return GeneralizedSeries(out, K)

    def truncate(self, precision) -> "GeneralizedSeries":
        return GeneralizedSeries({k: v.truncate(precision) for k, v in self.terms.items()}, self.domain)

    def is_zero(self) -> bool:
        return all(expr.is_zero() for expr in self.terms.values())

    @property
    def precision(self) -> Optional[Fraction]:
        known = [e.precision for e in self.terms.values() if e.precision is not None]
        return min(known) if known else None

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: _label_key(kv[0]))

    def labels(self) -> List[Tuple[AlgebraicNumber, int]]:
        return [(AlgebraicNumber.from_element(c, self.domain), j) for (c, j), _ in self.items()]

    def __str__(self) -> str:
        parts = []
        for (c, j), expr in self.items():
            if expr.is_zero():
                continue
            label = []
            if c != self.domain.one:
                label.append(f"e[{element_str(c, self.domain)}]")
            if j:
                label.append("l" if j == 1 else f"l^{j}")
            body = f"({expr})"
            parts.append("*".join(label + [body]) if label else body)
        return " + ".join(parts) if parts else "0"

    def __repr__(self) -> str:
        return f"GeneralizedSeries({self})"


def apply_operator(L: MahlerOperator, g: GeneralizedSeries, precision=None) -> GeneralizedSeries:
    """sum a_i sigma^i(g); zero means g solves L up to the stated precision."""
    K = unify_fields(L.domain, g.domain)
    total = GeneralizedSeries({}, K)
    current = g
    for i, a in enumerate(L.coefficients):
        if i:
            current = current.sigma(L.p)
        if a.is_exact and a.is_zero():
            continue
        total = total + current * a
    if precision is not None:
        total = total.truncate(precision)
    return total


# --- window expansions -------------------------------------------------------------------


@dataclass(frozen=True)
class HahnWindow:
    """Exponents in [lower, upper] whose p-adic valuation is at least -depth."""

    lower: Fraction
    upper: Fraction
    depth: int

    @classmethod
    def for_cutoff(cls, omega: XiIndex, epsilon, p: int) -> "HahnWindow":
        epsilon = Fraction(epsilon)
        if epsilon <= 0:
            raise ValueError("the cutoff must be positive")
        depth = 0
        while Fraction(1, p ** depth) > epsilon:
            depth += 1
        return cls(default_lower(omega), -epsilon, depth)

    def admits(self, e: Fraction, p: int) -> bool:
        if not self.lower <= e <= self.upper:
            return False
        v = p_adic_valuation(e, p)
        return v is None or v >= -self.depth


def default_lower(*indices: XiIndex) -> Fraction:
    return -sum((sum(omega.a, Fraction(0)) for omega in indices), Fraction(0)) - 1


class TruncatedHahn:
    """Finitely many terms of a Hahn series, all inside a window."""

    __slots__ = ("terms", "window", "precision", "domain")

    def __init__(self, terms: Dict[Fraction, object], window: HahnWindow, precision=None, domain=QQ):
        self.terms = {Fraction(e): c for e, c in terms.items() if c}
        self.window = window
        self.precision = None if precision is None else Fraction(precision)
        self.domain = domain

    def items(self) -> List[Tuple[Fraction, object]]:
        return sorted(self.terms.items())

    def known(self) -> Dict[Fraction, object]:
        if self.precision is None:
            return dict(self.terms)
        return {e: c for e, c in self.terms.items() if e < self.precision}

    def __add__(self, other: "TruncatedHahn") -> "TruncatedHahn":
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, self.domain.zero) + c
        precision = _min(self.precision, other.precision)
        return TruncatedHahn(terms, self.window, precision, self.domain)

    def __neg__(self) -> "TruncatedHahn":
        return TruncatedHahn({e: -c for e, c in self.terms.items()}, self.window, self.precision, self.domain)

    def __sub__(self, other: "TruncatedHahn") -> "TruncatedHahn":
        return self + (-other)

    def multiply(self, other: "TruncatedHahn", window: HahnWindow, p: int) -> "TruncatedHahn":
        terms: Dict[Fraction, object] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = e1 + e2
                if window.admits(e, p):
                    terms[e] = terms.get(e, self.domain.zero) + c1 * c2
        return TruncatedHahn(terms, window, _min(self.precision, other.precision), self.domain)

    def restrict(self, window: HahnWindow, p: int) -> "TruncatedHahn":
        return TruncatedHahn(
            {e: c for e, c in self.terms.items() if window.admits(e, p)}, window, self.precision, self.domain
        )

    def agrees_with(self, other: "TruncatedHahn") -> bool:
        precision = _min(self.precision, other.precision)
        difference = (self - other).terms
        return all(precision is not None and e >= precision for e in difference)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncatedHahn):
            return NotImplemented
        return self.known() == other.known()

    __hash__ = None

    def __str__(self) -> str:
        text = " + ".join(f"{element_str(c, self.domain)}*z^({e})" for e, c in self.items()) or "0"
        if self.precision is not None:
            text += f" + O(z^({self.precision}))"
        return text


def _min(*values):
    known = [v for v in values if v is not None]
    return min(known) if known else None


def _depth_bound(a: Sequence[Fraction], p: int, depth: int) -> int:
    """Largest l_t that can produce an exponent of valuation >= -depth."""
    t = len(a)
    s = max(0, max(-p_adic_valuation(x, p) for x in a))
    d = 1
    for x in a:
        den = x.denominator
        while den % p == 0:
            den //= p
        d = math.lcm(d, den)
    largest = max(int(x * d * p ** s) for x in a)
    g = 1
    while p ** g <= t * largest:
        g += 1
    return depth + t * g - s - 1


def _expand_index(omega: XiIndex, lower: Fraction, upper: Fraction, depth: int, p: int,
                  weights=None, K=QQ) -> Dict[Fraction, object]:
    """Terms of xi_omega (or its tilde version when ``weights`` is 'tilde')."""
    t = omega.length
    if not t:
        return {Fraction(0): K.one} if lower <= 0 <= upper else {}
    limit = _depth_bound(omega.a, p, depth)
    terms: Dict[Fraction, object] = {}

    def walk(j: int, prev: int, partial: Fraction, ls: List[int]):
        if j == t:
            if partial > upper:
                return
            v = p_adic_valuation(partial, p)
            if v is not None and v < -depth:
                return
            coeff = K.one
            for i, l in enumerate(ls):
                base = l if weights == TILDE else l - (ls[i - 1] if i else 0)
                coeff = coeff * K.convert(base ** omega.alpha[i]) * omega.lam[i] ** l
            terms[partial] = terms.get(partial, K.zero) + coeff
            return
        for l in range(prev + 1, limit - (t - j - 1) + 1):
            value = partial - omega.a[j] / Fraction(p) ** l
            if value < lower:
                continue
            walk(j + 1, l, value, ls + [l])

    walk(0, 0, Fraction(0), [])
    return {e: c for e, c in terms.items() if c}


def xi_expand(omega: XiIndex, window, p: int, K=QQ) -> TruncatedHahn:
    """Window expansion of xi_omega; ``window`` may be a cutoff epsilon > 0."""
    if not isinstance(window, HahnWindow):
        window = HahnWindow.for_cutoff(omega, window, p)
    return TruncatedHahn(_expand_index(omega, window.lower, window.upper, window.depth, p, None, K), window, None, K)


def xi_tilde_expand(omega: XiIndex, window: HahnWindow, p: int, K=QQ) -> TruncatedHahn:
    return TruncatedHahn(
        _expand_index(omega, window.lower, window.upper, window.depth, p, TILDE, K), window, None, K
    )


def hahn_window(expr, window: HahnWindow, p: int):
    """Expand an XiExpr (or each (c, j) block of a GeneralizedSeries) on a window."""
    if isinstance(expr, GeneralizedSeries):
        return {key: hahn_window(block, window, p) for key, block in expr.items()}
    K = expr.domain
    mode = TILDE if expr.basis == TILDE else None
    terms: Dict[Fraction, object] = {}
    precision = None
    for omega, f in expr.terms.items():
        if f.precision is not None:
            precision = _min(precision, f.precision + omega.minimal_exponent(p))
        for e_f, c_f in f.terms.items():
            v_f = p_adic_valuation(e_f, p)
            depth = window.depth if v_f is None else max(window.depth, -v_f)
            inner = _expand_index(omega, window.lower - e_f, window.upper - e_f, depth, p, mode, K)
            for e, c in inner.items():
                total = e + e_f
                if window.admits(total, p):
                    terms[total] = terms.get(total, K.zero) + c_f * c
    return TruncatedHahn(terms, window, precision, K)
