"""Reduction of Mahler systems to constant coefficients.

The pipeline has three stages:

1. ``block_triangularize``: cyclic vector, slope factorization, and a
   bidiagonal system whose diagonal entries are the factor exponents.
2. ``clear_positive_offdiag``: gauges away the positive powers of z above
   the diagonal, leaving entries in Q-bar[z^(-1/*)].
3. ``constantify``: solves for an upper unipotent matrix F2 with xi-series
   entries such that F2[C] = Theta, C being the constant part of Theta.

A fundamental matrix of sigma(Y) = A Y is then F1 F2 e_C, with e_C built
from the eigen data of C.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

from sympy import QQ, Poly, Symbol, binomial, expand_func
from sympy.polys.matrices import DomainMatrix

from mahler_toolkit.algebra import (
    AlgebraicNumber,
    dunford_multiplicative,
    eigen_structure,
    element_to_fraction,
    identity,
    to_field,
    unify_fields,
)
from mahler_toolkit.errors import NotRegularSingularShape, PrecisionLoss
from mahler_toolkit.operators import (
    Factorization,
    MahlerOperator,
    MahlerSystem,
    cyclic_vector,
    equation_to_companion,
    factor_by_slopes,
)
from mahler_toolkit.series import (
    SeriesMatrix,
    TruncatedPuiseux,
    coefficient_matrix,
    constant_series_matrix,
    identity_matrix,
    matrix_add,
    matrix_convert,
    matrix_domain,
    matrix_inverse,
    matrix_multiply,
    matrix_precision,
    matrix_sigma,
    matrix_sub,
    matrix_truncate,
    matrix_valuation,
    zero_matrix,
)
from mahler_toolkit.xi import (
    EMPTY,
    GeneralizedSeries,
    XiExpr,
    standardize,
    xi_multiply,
    xi_sigma_inverse_sum,
)

logger = logging.getLogger(__name__)

XiMatrix = List[List[XiExpr]]
SolutionMatrix = List[List[GeneralizedSeries]]

MAX_RETRIES = 3


# --- xi matrices ------------------------------------------------------------------------


def xi_zero(K=QQ) -> XiExpr:
    return XiExpr({}, K)


def xi_identity(n: int, K=QQ) -> XiMatrix:
    return [[XiExpr.one(K) if i == j else xi_zero(K) for j in range(n)] for i in range(n)]


def xi_matrix_domain(X: XiMatrix):
    return unify_fields(*(e.domain for row in X for e in row))


def xi_sigma_matrix(X: XiMatrix, p: int) -> XiMatrix:
    return [[e.sigma(p) for e in row] for row in X]


def series_times_xi(S: SeriesMatrix, X: XiMatrix) -> XiMatrix:
    K = unify_fields(matrix_domain(S), xi_matrix_domain(X))
    result = []
    for row in S:
        out = []
        for j in range(len(X[0])):
            acc = xi_zero(K)
            for f, xrow in zip(row, X):
                if f.is_exact and f.is_zero() or not xrow[j].terms:
                    continue
                acc = acc + xrow[j] * f
            out.append(acc)
        result.append(out)
    return result


def const_times_xi(M: DomainMatrix, X: XiMatrix) -> XiMatrix:
    return series_times_xi(constant_series_matrix(M), X)


def xi_times_const(X: XiMatrix, M: DomainMatrix) -> XiMatrix:
    K = unify_fields(M.domain, xi_matrix_domain(X))
    rows = M.to_list()
    result = []
    for xrow in X:
        out = []
        for j in range(len(rows[0])):
            acc = xi_zero(K)
            for e, mrow in zip(xrow, rows):
                if mrow[j] and e.terms:
                    acc = acc + e.convert(K) * to_field(mrow[j], K)
            out.append(acc)
        result.append(out)
    return result


def xi_times_xi(X: XiMatrix, Y: XiMatrix, p: int) -> XiMatrix:
    K = unify_fields(xi_matrix_domain(X), xi_matrix_domain(Y))
    result = []
    for xrow in X:
        out = []
        for j in range(len(Y[0])):
            acc = xi_zero(K)
            for e, yrow in zip(xrow, Y):
                if e.terms and yrow[j].terms:
                    acc = acc + xi_multiply(e, yrow[j], p)
            out.append(acc)
        result.append(out)
    return result


def xi_matrix_sub(X: XiMatrix, Y: XiMatrix) -> XiMatrix:
    return [[a - b for a, b in zip(rx, ry)] for rx, ry in zip(X, Y)]


def invert_unipotent(X: XiMatrix, p: int) -> XiMatrix:
    """(I + U)^-1 = sum (-U)^k for strictly upper triangular U."""
    n = len(X)
    K = xi_matrix_domain(X)
    U = xi_matrix_sub(X, xi_identity(n, K))
    negative = [[-e for e in row] for row in U]
    result = xi_identity(n, K)
    power = xi_identity(n, K)
    for _ in range(1, n):
        power = xi_times_xi(power, negative, p)
        result = [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(result, power)]
    return result


def _blocks_of(blocks: Sequence[int]) -> List[range]:
    ranges, start = [], 0
    for r in blocks:
        ranges.append(range(start, start + r))
        start += r
    return ranges


def _sweep_order(count: int) -> List[Tuple[int, int]]:
    """Pairs (i, j), i < j, by increasing j - i, then by i."""
    return [(i, i + delta) for delta in range(1, count) for i in range(count - delta)]


def _constant_block(A: SeriesMatrix, rows: range, cols: range, K) -> DomainMatrix:
    data = [[to_field(A[r][c].coefficient(0), K) for c in cols] for r in rows]
    return DomainMatrix(data, (len(rows), len(cols)), K).to_dense()


# --- results ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockTriangularForm:
    """gauge[A] = theta, theta upper triangular with constant diagonal blocks."""

    gauge: SeriesMatrix
    theta: SeriesMatrix
    blocks: Tuple[int, ...]
    slope_profile: Tuple[Tuple[Fraction, int], ...]
    field: object
    operator: Optional[MahlerOperator] = None
    factorization: Optional[Factorization] = None


@dataclass(frozen=True)
class ReductionResult:
    """A = F1[Theta] and Theta = F2[C] up to ``precision``."""

    p: int
    F1: SeriesMatrix
    F2: XiMatrix
    Theta: SeriesMatrix
    C: DomainMatrix
    blocks: Tuple[int, ...]
    slope_profile: Tuple[Tuple[Fraction, int], ...]
    exponents: Tuple[AlgebraicNumber, ...]
    gauge: SeriesMatrix
    precision: Optional[Fraction]
    regular_singular: bool = False

    @property
    def block_profile(self) -> Tuple[int, ...]:
        return self.blocks

    @property
    def field(self):
        return self.C.domain

    @property
    def dimension(self) -> int:
        return len(self.F1)


@dataclass(frozen=True)
class SymbolicSolutionMatrix:
    """Y = F1 F2 e_C, so that sigma(Y) = A Y."""

    p: int
    entries: SolutionMatrix
    precision: Optional[Fraction]

    def row(self, i: int) -> List[GeneralizedSeries]:
        return list(self.entries[i])


@dataclass(frozen=True)
class ResidualReport:
    zero: bool
    precision: Optional[Fraction]
    nonzero: Tuple[Tuple[str, int, int, str], ...] = ()

    def to_dict(self) -> dict:
        return {
            "zero": self.zero,
            "precision": None if self.precision is None else str(self.precision),
            "nonzero": [
                {"part": part, "row": i, "col": j, "residual": text}
                for part, i, j, text in self.nonzero
            ],
        }


# --- regular singular systems -----------------------------------------------------------


def _regular_singular_shape(A: MahlerSystem) -> bool:
    for row in A.matrix:
        for f in row:
            if f.terms and min(f.terms) < 0:
                return False
            if f.precision is not None and f.precision <= 0:
                return False
    K = A.domain
    A0 = DomainMatrix(coefficient_matrix(A.matrix, 0), (A.dimension, A.dimension), K)
    return bool(A0.det())


def reduce_regular_singular(A: MahlerSystem, precision) -> SeriesMatrix:
    """G = I + O(z^(1/k)) with G[A] = A(0) below ``precision``."""
    if not _regular_singular_shape(A):
        raise NotRegularSingularShape("entries must have nonnegative valuation and A(0) must be invertible")
    p = A.p
    n = A.dimension
    K = A.domain
    N = Fraction(precision)
    if A.precision is not None:
        N = min(N, A.precision)
    A0 = DomainMatrix(coefficient_matrix(A.matrix, 0), (n, n), K).to_dense()
    A0_inv = A0.inv()
    k = 1
    for row in A.matrix:
        for f in row:
            k = math.lcm(k, f.ramification)
    higher = {}
    for e in sorted({e for row in A.matrix for f in row for e in f.terms if e > 0}):
        data = [[A.matrix[i][j].terms.get(e, K.zero) for j in range(n)] for i in range(n)]
        higher[e] = DomainMatrix(data, (n, n), K).to_dense()
    G = {Fraction(0): identity(n, K)}
    step = Fraction(1, k)
    gamma = step
    while gamma < N:
        acc = DomainMatrix.zeros((n, n), K).to_dense()
        lower = gamma / p
        if lower in G:
            acc = acc + G[lower] * A0
        for e, Ae in higher.items():
            if e > gamma:
                break
            previous = (gamma - e) / p
            if previous in G:
                acc = acc + G[previous] * Ae
        value = A0_inv * acc
        if not value.is_zero_matrix:
            G[gamma] = value
        gamma += step
    dense = {e: M.to_list() for e, M in G.items()}
    result = zero_matrix(n, n, K)
    for i in range(n):
        for j in range(n):
            terms = {e: M[i][j] for e, M in dense.items()}
            result[i][j] = TruncatedPuiseux(terms, N, K)
    logger.debug("regular singular gauge computed below z^%s", N)
    return result


# --- step 1 -----------------------------------------------------------------------------


def block_triangularize(A: MahlerSystem, precision, budget: int = 50, max_degree: int = 6) -> BlockTriangularForm:
    """Gauge A to an upper bidiagonal system from a slope factorization.

    With L = a L_d ... L_1 and L_i = (z^(nu_i) Phi - c_i) h_i^-1, the
    unknowns x_i = z^(mu_i) h_i^-1 L_(i-1)...L_1(y), mu_i = nu_i / (p - 1),
    satisfy sigma(x_i) = c_i x_i + z^(mu_i - mu_(i+1)) h_(i+1) x_(i+1).

    Every factor has order one, so theta is written down directly from the
    factors with 1x1 diagonal blocks. No block is reduced separately through
    the companion system of a contragredient factor.
    """
    N = Fraction(precision)
    p = A.p
    found = cyclic_vector(A, budget, N)
    factorization = factor_by_slopes(found.operator, N, max_degree=max_degree)
    K = factorization.field
    inner = list(reversed(factorization.factors))
    d = len(inner)
    mus = [f.nu / (p - 1) for f in inner]
    partial = MahlerOperator(p, [TruncatedPuiseux.constant(1, K)])
    rows = []
    for i, factor in enumerate(inner):
        scale = factor.h.inverse().shift(mus[i])
        rows.append([partial.coefficient(k).convert(K) * scale for k in range(d)])
        partial = factor.operator() * partial
    gauge = matrix_truncate(matrix_multiply(rows, matrix_convert(found.gauge, K)), N)
    theta = zero_matrix(d, d, K)
    for i, factor in enumerate(inner):
        theta[i][i] = TruncatedPuiseux.constant(factor.c, K)
        if i + 1 < d:
            theta[i][i + 1] = inner[i + 1].h.shift(mus[i] - mus[i + 1])
    logger.debug("block triangular form with exponents %s", [str(f.exponent) for f in inner])
    return BlockTriangularForm(
        gauge, theta, (1,) * d, factorization.slope_profile, K, found.operator, factorization
    )


# --- step 2 -----------------------------------------------------------------------------


def _positive_part(f: TruncatedPuiseux) -> TruncatedPuiseux:
    return TruncatedPuiseux._make({e: c for e, c in f.terms.items() if e > 0}, f.precision, f.domain)


def solve_positive_sylvester(C1: DomainMatrix, C2: DomainMatrix, B: SeriesMatrix, precision, p: int) -> SeriesMatrix:
    """M = sum_{k>=0} C1^(-k-1) sigma^k(B) C2^k, so that C1 M - sigma(M) C2 = B."""
    K = unify_fields(C1.domain, C2.domain, matrix_domain(B))
    N = Fraction(precision)
    if matrix_precision(B) is not None:
        N = min(N, matrix_precision(B))
    rows, cols = len(B), len(B[0]) if B else 0
    v = matrix_valuation(B)
    if v is None:
        return zero_matrix(rows, cols, K)
    if v <= 0:
        raise ValueError(f"the right-hand side must have positive valuation, got {v}")
    inverse = constant_series_matrix(C1.convert_to(K).to_dense().inv())
    right_factor = constant_series_matrix(C2.convert_to(K).to_dense())
    left = inverse
    right = identity_matrix(cols, K)
    current = matrix_convert(B, K)
    M = zero_matrix(rows, cols, K)
    while True:
        v = matrix_valuation(current)
        if v is None or v >= N:
            break
        M = matrix_add(M, matrix_multiply(matrix_multiply(left, current), right))
        left = matrix_multiply(left, inverse)
        right = matrix_multiply(right, right_factor)
        current = matrix_sigma(current, p)
    return matrix_truncate(M, N)


def clear_positive_offdiag(A: MahlerSystem, blocks: Sequence[int], precision) -> Tuple[SeriesMatrix, MahlerSystem]:
    """H with H[A] having off-diagonal blocks in Q-bar[z^(-1/*)]."""
    N = Fraction(precision)
    p = A.p
    n = A.dimension
    K = A.domain
    ranges = _blocks_of(blocks)
    theta = matrix_convert(A.matrix, K)
    H = identity_matrix(n, K)
    for i, j in _sweep_order(len(ranges)):
        ri, rj = ranges[i], ranges[j]
        B = [[_positive_part(theta[r][c]) for c in rj] for r in ri]
        if matrix_valuation(B) is None:
            continue
        C1 = _constant_block(theta, ri, ri, K)
        C2 = _constant_block(theta, rj, rj, K)
        M = solve_positive_sylvester(C1, C2, B, N, p)
        step = identity_matrix(n, K)
        back = identity_matrix(n, K)
        for a, r in enumerate(ri):
            for b, c in enumerate(rj):
                step[r][c] = M[a][b]
                back[r][c] = -M[a][b]
        theta = matrix_truncate(matrix_multiply(matrix_multiply(matrix_sigma(step, p), theta), back), N)
        H = matrix_truncate(matrix_multiply(step, H), N)
        logger.debug("cleared positive part of block (%d, %d)", i, j)
    cleaned = zero_matrix(n, n, K)
    for r in range(n):
        for c in range(n):
            f = theta[r][c]
            if r > c:
                continue
            if f.precision is not None and f.precision <= 0:
                raise PrecisionLoss(f"entry ({r}, {c}) is unknown at z^0; raise the precision")
            negative, constant, positive = f.split_at_zero()
            if positive.terms:
                raise PrecisionLoss(f"positive part of entry ({r}, {c}) survived the sweep")
            terms = dict(negative.terms)
            if constant:
                terms[Fraction(0)] = constant
            cleaned[r][c] = TruncatedPuiseux(terms, None, K)
    return H, MahlerSystem(p, cleaned)


# --- step 3 -----------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _binomial_weights(s: int, t: int) -> Tuple[Fraction, ...]:
    """Coefficients (ascending in k) of C(k-1, s) C(k, t)."""
    k = Symbol("k")
    poly = Poly(expand_func(binomial(k - 1, s) * binomial(k, t)), k, domain=QQ)
    return tuple(element_to_fraction(c) for c in reversed(poly.rep.to_list()))


def solve_negative_sylvester(C1: DomainMatrix, C2: DomainMatrix, B: XiMatrix, p: int,
                             max_degree: int = 6) -> XiMatrix:
    """F = sum_{k>=1} C1^(k-1) sigma^-k(B) C2^-k, so that sigma(F) C2 - C1 F = B.

    Both matrices are split into semisimple and nilpotent parts; in the
    eigenbases every entry is a combination of scalar sums
    sum k^alpha c^k sigma^-k(h).
    """
    first = eigen_structure(C1.to_dense(), max_degree)
    second = eigen_structure(C2.to_dense().inv(), max_degree)
    K = unify_fields(first.field, second.field, xi_matrix_domain(B))
    P1 = first.P.convert_to(K).to_dense()
    P2 = second.P.convert_to(K).to_dense()
    P1_inv, P2_inv = P1.inv(), P2.inv()
    N1 = P1_inv * first.nilpotent.convert_to(K).to_dense() * P1
    N2 = P2_inv * second.nilpotent.convert_to(K).to_dense() * P2
    c1 = [to_field(c, K) for c in first.eigenvalues]
    c2 = [to_field(c, K) for c in second.eigenvalues]
    r1, r2 = len(c1), len(c2)
    powers1 = [identity(r1, K)]
    for _ in range(1, r1):
        powers1.append(powers1[-1] * N1)
    powers2 = [identity(r2, K)]
    for _ in range(1, r2):
        powers2.append(powers2[-1] * N2)
    rotated = const_times_xi(P1_inv, xi_times_const([[e.convert(K) for e in row] for row in B], P2))
    solution = [[xi_zero(K) for _ in range(r2)] for _ in range(r1)]
    for a in range(r1):
        for b in range(r2):
            ratio = c1[a] * c2[b]
            total = xi_zero(K)
            for s, Ns in enumerate(powers1):
                Ns = Ns.to_list()
                for t, Nt in enumerate(powers2):
                    Nt = Nt.to_list()
                    weights = _binomial_weights(s, t)
                    scalar = (K.one / c1[a]) ** (s + 1) * (K.one / c2[b]) ** t
                    for a2 in range(r1):
                        if not Ns[a][a2]:
                            continue
                        for b2 in range(r2):
                            if not Nt[b2][b] or not rotated[a2][b2].terms:
                                continue
                            coeff = scalar * Ns[a][a2] * Nt[b2][b]
                            for alpha, w in enumerate(weights):
                                if w:
                                    part = xi_sigma_inverse_sum(alpha, ratio, rotated[a2][b2], p)
                                    total = total + part * (coeff * to_field(w, K))
            solution[a][b] = total
    return const_times_xi(P1, xi_times_const(solution, P2_inv))


def constantify(A: MahlerSystem, blocks: Sequence[int], max_degree: int = 6) -> Tuple[XiMatrix, DomainMatrix]:
    """F2 upper unipotent with F2[C] = A, C the constant term of A.

    Block (i, j) of F2 solves
    sigma(F_ij) A_j - A_i F_ij = N_ij + sum_{i<l<j} (Theta_il F_lj - sigma(F_il) C_lj)
    where N_ij is the negative part of Theta_ij.
    """
    p = A.p
    n = A.dimension
    K = A.domain
    theta = A.matrix
    C = DomainMatrix(
        [[to_field(f.coefficient(0), K) for f in row] for row in theta], (n, n), K
    ).to_dense()
    ranges = _blocks_of(blocks)
    F = xi_identity(n, K)
    for i, j in _sweep_order(len(ranges)):
        ri, rj = ranges[i], ranges[j]
        rhs = []
        for r in ri:
            row = []
            for c in rj:
                negative, _, _ = theta[r][c].split_at_zero()
                row.append(XiExpr.from_series(TruncatedPuiseux(negative.terms, None, K)))
            rhs.append(row)
        for l in range(i + 1, j):
            rl = ranges[l]
            theta_il = [[theta[r][m] for m in rl] for r in ri]
            F_lj = [[F[m][c] for c in rj] for m in rl]
            F_il = [[F[r][m] for m in rl] for r in ri]
            C_lj = _constant_block(theta, rl, rj, K)
            forward = series_times_xi(theta_il, F_lj)
            backward = xi_times_const(xi_sigma_matrix(F_il, p), C_lj)
            rhs = [[x + y - w for x, y, w in zip(r0, r1, r2)] for r0, r1, r2 in zip(rhs, forward, backward)]
        C1 = _constant_block(theta, ri, ri, K)
        C2 = _constant_block(theta, rj, rj, K)
        block = solve_negative_sylvester(C1, C2, rhs, p, max_degree)
        for a, r in enumerate(ri):
            for b, c in enumerate(rj):
                F[r][c] = block[a][b]
        logger.debug("solved block (%d, %d) of the unipotent gauge", i, j)
    return F, C


# --- pipeline ---------------------------------------------------------------------------


def _diagonal_exponents(C: DomainMatrix) -> Tuple[AlgebraicNumber, ...]:
    K = C.domain
    data = C.to_list()
    return tuple(AlgebraicNumber.from_element(data[i][i], K) for i in range(len(data)))


def _reduce_once(A: MahlerSystem, N: Fraction, working: Fraction, budget: int, max_degree: int) -> ReductionResult:
    p = A.p
    n = A.dimension
    if _regular_singular_shape(A):
        G = reduce_regular_singular(A, working)
        K = A.domain
        C = DomainMatrix(coefficient_matrix(A.matrix, 0), (n, n), K).to_dense()
        F1 = matrix_truncate(matrix_inverse(G, working), N)
        spectrum = eigen_structure(C, max_degree)
        exponents = tuple(AlgebraicNumber.from_element(c, spectrum.field) for c in spectrum.eigenvalues)
        logger.debug("regular singular system, steps 2 and 3 skipped")
        return ReductionResult(
            p, F1, xi_identity(n, K), constant_series_matrix(C), C, (n,), ((Fraction(0), n),),
            exponents, matrix_truncate(G, N), matrix_precision(F1), True,
        )
    form = block_triangularize(A, working, budget, max_degree)
    H, theta = clear_positive_offdiag(MahlerSystem(p, form.theta), form.blocks, working)
    F2, C = constantify(theta, form.blocks, max_degree)
    gauge = matrix_truncate(matrix_multiply(H, form.gauge), working)
    F1 = matrix_truncate(matrix_inverse(gauge, working), N)
    return ReductionResult(
        p, F1, F2, theta.matrix, C, form.blocks, form.slope_profile, _diagonal_exponents(C),
        matrix_truncate(gauge, N), matrix_precision(F1),
    )


def reduce_to_constant(A: MahlerSystem, precision, guard: Optional[int] = None, budget: int = 50,
                       max_degree: int = 6) -> ReductionResult:
    """Run the three-step reduction, retrying with a doubled guard when precision is lost."""
    N = Fraction(precision)
    guard = guard if guard is not None else max(8, int(N))
    result = None
    for attempt in range(MAX_RETRIES + 1):
        result = _reduce_once(A, N, N + guard, budget, max_degree)
        if result.precision is None or result.precision >= N:
            return result
        logger.debug("reduction reached z^%s only, retrying with guard %d", result.precision, 2 * guard)
        guard *= 2
    logger.warning("reduction stays below the requested precision %s", N)
    return result


def fundamental_matrix(result: ReductionResult) -> XiMatrix:
    """F = F1 F2."""
    return series_times_xi(result.F1, result.F2)


# --- constant systems -------------------------------------------------------------------


@lru_cache(maxsize=64)
def _binomial_in_l(k: int) -> Tuple[Fraction, ...]:
    """Coefficients (ascending) of l^[k] = l (l-1) ... (l-k+1) / k!."""
    ell = Symbol("l")
    poly = Poly(expand_func(binomial(ell, k)), ell, domain=QQ)
    return tuple(element_to_fraction(c) for c in reversed(poly.rep.to_list()))


def constant_solution_matrix(C: DomainMatrix, max_degree: int = 6) -> SolutionMatrix:
    """e_C = e_D e_U with C = U D, e_D acting as e_c on each eigenspace and
    e_U = sum_k l^[k] (U - I)^k."""
    n = C.shape[0]
    structure = eigen_structure(C.to_dense(), max_degree)
    K = structure.field
    CK = C.convert_to(K).to_dense()
    U, _ = dunford_multiplicative(CK)
    nilpotent = U - identity(n, K)
    powers = [identity(n, K)]
    for _ in range(1, n):
        powers.append(powers[-1] * nilpotent)
    P = structure.P
    P_inv = P.inv()
    entries = [[{} for _ in range(n)] for _ in range(n)]
    distinct = []
    for c in structure.eigenvalues:
        if c not in distinct:
            distinct.append(c)
    for c in distinct:
        mask = DomainMatrix.diag([K.one if e == c else K.zero for e in structure.eigenvalues], K).to_dense()
        projection = P * mask * P_inv
        for k, power in enumerate(powers):
            block = (projection * power).to_list()
            weights = _binomial_in_l(k)
            for a in range(n):
                for b in range(n):
                    if not block[a][b]:
                        continue
                    for j, w in enumerate(weights):
                        if w:
                            bucket = entries[a][b]
                            bucket[(c, j)] = bucket.get((c, j), K.zero) + block[a][b] * to_field(w, K)
    return [
        [
            GeneralizedSeries({key: XiExpr.one(K) * value for key, value in bucket.items() if value}, K)
            for bucket in row
        ]
        for row in entries
    ]


def _scalar_of(expr: XiExpr):
    if set(expr.terms) <= {EMPTY}:
        f = expr.terms.get(EMPTY)
        if f is None:
            return expr.domain.zero
        if f.is_exact and set(f.terms) <= {Fraction(0)}:
            return f.terms.get(Fraction(0), f.domain.zero)
    return None


def _times_generalized(x: XiExpr, g: GeneralizedSeries, p: int) -> GeneralizedSeries:
    K = unify_fields(x.domain, g.domain)
    terms = {}
    for key, expr in g.terms.items():
        scalar = _scalar_of(expr)
        if scalar is not None:
            terms[key] = x.convert(K) * to_field(scalar, K)
        else:
            terms[key] = xi_multiply(x, expr, p)
    return GeneralizedSeries(terms, K)


def symbolic_solution(result: ReductionResult, max_degree: int = 6) -> SymbolicSolutionMatrix:
    """The fundamental matrix F1 F2 e_C over the (e_c, l^j) labels."""
    p = result.p
    F = fundamental_matrix(result)
    E = constant_solution_matrix(result.C, max_degree)
    n = len(F)
    K = unify_fields(xi_matrix_domain(F), *(g.domain for row in E for g in row))
    entries = []
    for a in range(n):
        row = []
        for b in range(n):
            acc = GeneralizedSeries({}, K)
            for l in range(n):
                if F[a][l].terms and E[l][b].terms:
                    acc = acc + _times_generalized(F[a][l], E[l][b], p)
            row.append(acc)
        entries.append(row)
    return SymbolicSolutionMatrix(p, entries, result.precision)


def solution_basis(L: MahlerOperator, precision, guard: Optional[int] = None, budget: int = 50,
                   max_degree: int = 6, recursion_budget: int = 64) -> List[GeneralizedSeries]:
    """First row of the fundamental matrix of the companion system, standardized."""
    L.require_well_formed()
    N = Fraction(precision)
    working = N + (guard if guard is not None else max(8, int(N)))
    A = equation_to_companion(L, working)
    result = reduce_to_constant(A, N, guard, budget, max_degree)
    Y = symbolic_solution(result, max_degree)
    return [standardize(g, L.p, recursion_budget) for g in Y.row(0)]


# --- verification -----------------------------------------------------------------------


def _nonconstant(expr: XiExpr) -> XiExpr:
    terms = dict(expr.terms)
    f = terms.get(EMPTY)
    if f is not None:
        terms[EMPTY] = TruncatedPuiseux._make(
            {e: c for e, c in f.terms.items() if e != 0}, f.precision, f.domain
        )
    return XiExpr(terms, expr.domain)


def verify_gauge(A: MahlerSystem, result, precision=None, recursion_budget: int = 64) -> ResidualReport:
    """Residuals of sigma(F1) Theta - A F1 and sigma(F2) C - Theta F2, or of sigma(Y) - A Y."""
    p = A.p
    bad = []
    if isinstance(result, SymbolicSolutionMatrix):
        Y = result.entries
        n = len(Y)
        worst = None
        for i in range(n):
            for j in range(len(Y[0])):
                shifted = Y[i][j].sigma(p)
                total = shifted
                for l in range(n):
                    a = A.matrix[i][l]
                    if a.is_exact and a.is_zero():
                        continue
                    total = total - Y[l][j] * a
                if precision is not None:
                    total = total.truncate(precision)
                total = standardize(total, p, recursion_budget)
                if total.precision is not None:
                    worst = total.precision if worst is None else min(worst, total.precision)
                if not total.is_zero():
                    bad.append(("solution", i, j, str(total)))
        return ResidualReport(not bad, worst, tuple(bad))
    series = matrix_sub(
        matrix_multiply(matrix_sigma(result.F1, p), result.Theta), matrix_multiply(A.matrix, result.F1)
    )
    if precision is not None:
        series = matrix_truncate(series, precision)
    for i, row in enumerate(series):
        for j, f in enumerate(row):
            if not f.is_zero():
                bad.append(("F1", i, j, str(f)))
    C = constant_series_matrix(result.C)
    left = xi_sigma_matrix(result.F2, p)
    left = [[sum((left[i][l] * C[l][j] for l in range(len(C))), xi_zero(result.field))
             for j in range(len(C))] for i in range(len(left))]
    right = series_times_xi(result.Theta, result.F2)
    for i, (lr, rr) in enumerate(zip(left, right)):
        for j, (x, y) in enumerate(zip(lr, rr)):
            difference = standardize(x - y, p, recursion_budget)
            if not difference.is_zero():
                bad.append(("F2", i, j, str(difference)))
    return ResidualReport(not bad, matrix_precision(series), tuple(bad))


def uniqueness_defect(A: MahlerSystem, first: ReductionResult, second: ReductionResult,
                      recursion_budget: int = 64) -> XiMatrix:
    """Nonconstant part of F^-1 G for two reductions F, G of the same system."""
    p = A.p
    F2_inverse = invert_unipotent(first.F2, p)
    middle = series_times_xi(matrix_multiply(first.gauge, second.F1), second.F2)
    R = xi_times_xi(F2_inverse, middle, p)
    return [[_nonconstant(standardize(e, p, recursion_budget)) for e in row] for row in R]
