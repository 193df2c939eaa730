"""Arithmetic growth of solution coefficients.

Heights are logarithmic Weil heights. Regimes, from loosest to tightest:
C1 O(H), C2 O(log^2 H), C3 O(log H), C4 O(loglog H), C5 O(1), where
H(a/b) = max(|a|, |b|) is the height of the exponent.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from sympy import QQ, binomial

from mahler_toolkit.algebra import (
    AlgebraicNumber,
    element_to_fraction,
    field_poly,
    fraction_str,
    is_root_of_unity,
    p_adic_valuation,
    to_field,
    weil_height,
)
from mahler_toolkit.errors import InsufficientData, NoRelationFound, PrecisionLoss, UnsupportedSplitting
from mahler_toolkit.operators import GuessResult, MahlerOperator, guess_minimal_operator
from mahler_toolkit.reduction import solution_basis
from mahler_toolkit.series import TruncatedPuiseux
from mahler_toolkit.xi import EMPTY, GeneralizedSeries, XiExpr, standardize, xi_scale

logger = logging.getLogger(__name__)

__all__ = [
    "p_adic_valuation",
    "coefficient_heights",
    "classify_empirical",
    "classify_series",
    "classify_generalized",
    "mahler_denominator_candidate",
    "classify_by_roots",
    "pullback",
    "inverse_pullback",
    "purity_report",
    "plot_data",
]

UNKNOWN = "UNKNOWN"
LABELS = ("C1", "C2", "C3", "C4", "C5")
EMPIRICAL = "empirical"
CERTIFIED = "certified-by-roots"

MIN_SAMPLES = 64
LOGLOG_THRESHOLD = 1.5
OUTLIER_FRACTION = 0.05
ENVELOPE_SLACK = 2.0
HEIGHT_TOLERANCE = 1e-9
GUESS_WINDOW = 8

Heights = List[Tuple[Fraction, float]]

ENVELOPES: Dict[str, Callable[[int], float]] = {
    "C5": lambda H: 1.0,
    "C4": lambda H: math.log(math.log(H)),
    "C3": lambda H: math.log(H),
    "C2": lambda H: math.log(H) ** 2,
    "C1": lambda H: float(H),
}


def exponent_height(gamma) -> int:
    gamma = Fraction(gamma)
    return max(abs(gamma.numerator), gamma.denominator)


def _rank(label: str) -> int:
    return LABELS.index(label) + 1 if label in LABELS else 0


@dataclass(frozen=True)
class GrowthClass:
    label: str
    mode: str
    evidence: Dict[str, object] = field(default_factory=dict)
    sample_range: Optional[Tuple[Fraction, Fraction]] = None
    violations: Tuple[str, ...] = ()
    omega_visible: Optional[bool] = None

    @property
    def rank(self) -> int:
        return _rank(self.label)

    def satisfies(self, r: int) -> Optional[bool]:
        """Whether the class lies in C_r; None when undecided."""
        if f"C{r}" in self.violations:
            return False
        if self.label == UNKNOWN:
            return None
        return self.rank >= r

    def to_dict(self) -> dict:
        data = {
            "class": self.label,
            "mode": self.mode,
            "violations": list(self.violations),
            "omega_visible": self.omega_visible,
            "evidence": self.evidence,
        }
        if self.sample_range is not None:
            data["sample_range"] = [fraction_str(x) for x in self.sample_range]
        return data


# --- heights -----------------------------------------------------------------------------


def element_height(c, K=QQ) -> float:
    q = element_to_fraction(c, K)
    if q is not None:
        return weil_height(q)
    return weil_height(AlgebraicNumber.from_element(c, K))


def _series_heights(f: TruncatedPuiseux, start=None, stop=None) -> Heights:
    k = f.ramification
    if stop is None:
        if f.precision is None:
            stop = (max(f.terms) if f.terms else Fraction(0)) + Fraction(1, k)
        else:
            stop = f.precision
    stop = Fraction(stop)
    if f.precision is not None and stop > f.precision:
        raise PrecisionLoss(f"heights up to {stop} need precision beyond {f.precision}")
    if start is None:
        start = min(f.lower_bound() or Fraction(0), Fraction(0))
    start = Fraction(start)
    # align to the grid of f
    first = Fraction(math.ceil(start * k), k)
    count = int((stop - first) * k)
    K = f.domain
    out = []
    for n in range(max(count, 0)):
        gamma = first + Fraction(n, k)
        out.append((gamma, element_height(f.terms.get(gamma, K.zero), K)))
    return out


def coefficient_heights(f, start=None, stop=None, p: Optional[int] = None, budget: int = 64):
    """Heights h(f_gamma) over [start, stop).

    A GeneralizedSeries is standardized first; the result then maps each
    (c, j, xi-index) of the standard decomposition to its height sequence.
    """
    if isinstance(f, TruncatedPuiseux):
        return _series_heights(f, start, stop)
    if p is None:
        raise ValueError("p is required for generalized series")
    std = standardize(f, p, budget) if isinstance(f, GeneralizedSeries) else standardize(
        GeneralizedSeries.from_xi(f), p, budget
    )
    out = {}
    for (c, j), expr in std.items():
        for omega, series in expr.items():
            if series.is_zero():
                continue
            out[(c, j, omega)] = _series_heights(series, start, stop)
    return out


def plot_data(heights: Sequence[Tuple[Fraction, float]]) -> str:
    lines = ["gamma\theight"]
    lines.extend(f"{fraction_str(g)}\t{h:.12g}" for g, h in heights)
    return "\n".join(lines) + "\n"


# --- empirical regimes ----------------------------------------------------------------------


def _fit(samples: Sequence[Tuple[int, float]], envelope: Callable[[int], float],
         outlier_fraction: float, slack: float) -> Tuple[float, int]:
    """Envelope constant fitted on the lower half, and the samples it misses."""
    lower = samples[: max(1, len(samples) // 2)]
    ratios = sorted(h / envelope(H) for H, h in lower)
    index = max(0, math.ceil((1 - outlier_fraction) * len(ratios)) - 1)
    constant = ratios[index]
    missed = sum(1 for H, h in samples if h > slack * constant * envelope(H) + HEIGHT_TOLERANCE)
    return constant, missed


def classify_empirical(heights: Sequence[Tuple[Fraction, float]],
                       outlier_fraction: float = OUTLIER_FRACTION,
                       slack: float = ENVELOPE_SLACK,
                       violations: Sequence[str] = (),
                       loglog_threshold: float = LOGLOG_THRESHOLD) -> GrowthClass:
    """Tightest regime whose fitted envelope bounds all but a fraction of the samples."""
    if len(heights) < MIN_SAMPLES:
        raise InsufficientData(f"{len(heights)} samples, at least {MIN_SAMPLES} needed")
    q = outlier_fraction
    samples = sorted(
        ((exponent_height(g), h) for g, h in heights if exponent_height(g) >= 3),
        key=lambda s: s[0],
    )
    if len(samples) < MIN_SAMPLES // 2:
        raise InsufficientData(f"only {len(samples)} samples with H(gamma) >= 3")
    allowed = math.floor(q * len(samples))
    loglog_max = math.log(math.log(samples[-1][0]))
    fits: Dict[str, dict] = {}
    chosen = UNKNOWN
    for label in reversed(LABELS):
        if label in violations:
            fits[label] = {"skipped": "violated"}
            continue
        if label == "C4" and loglog_max <= loglog_threshold:
            fits[label] = {"skipped": f"loglog H <= {loglog_threshold} in sample"}
            continue
        constant, missed = _fit(samples, ENVELOPES[label], q, slack)
        fits[label] = {"constant": constant, "missed": missed}
        if missed <= allowed:
            chosen = label
            break
    omega_visible = None
    if chosen in LABELS and chosen != "C5":
        tighter = [l for l in LABELS[LABELS.index(chosen) + 1:] if "missed" in fits.get(l, {})]
        omega_visible = bool(set(violations) & set(LABELS[LABELS.index(chosen) + 1:])) or any(
            fits[l]["missed"] > allowed for l in tighter
        )
    gammas = [g for g, _ in heights]
    logger.debug("empirical class %s from %d samples", chosen, len(samples))
    return GrowthClass(
        chosen,
        EMPIRICAL,
        {"fits": fits, "samples": len(samples), "allowed_misses": allowed},
        (min(gammas), max(gammas)),
        tuple(sorted(set(violations))),
        omega_visible,
    )


def valuation_certificate(f: TruncatedPuiseux, p: int, slack: float = ENVELOPE_SLACK) -> Optional[dict]:
    """Linear growth of |v_p(f_{p^n})| in n, when visible.

    h(f_{p^n}) >= |v_p(f_{p^n})| log p, so linear growth places the heights
    in Omega(log H) along the powers of p, outside C4 and C5.
    """
    limit = f.precision if f.precision is not None else (max(f.terms) + 1 if f.terms else 0)
    K = f.domain
    points = []
    n = 1
    while p ** n < limit:
        q = element_to_fraction(f.terms.get(Fraction(p ** n), K.zero), K)
        if q is None:
            return None
        if q:
            points.append((n, abs(p_adic_valuation(q, p))))
        n += 1
    if len(points) < 3:
        return None
    n0, v0 = points[0]
    rate = min(Fraction(v - v0, m - n0) for m, v in points[1:])
    if rate < Fraction(1) / Fraction(slack).limit_denominator(1000):
        return None
    return {"valuations": points, "rate": float(rate), "bound": f"h >= |v_{p}| log {p}"}


def classify_series(f: TruncatedPuiseux, p: int, start=None, stop=None,
                    outlier_fraction: float = OUTLIER_FRACTION,
                    slack: float = ENVELOPE_SLACK) -> GrowthClass:
    """Empirical class of one Puiseux series, with the p-power valuation check."""
    heights = _series_heights(f, start, stop)
    certificate = valuation_certificate(f, p, slack)
    violations = ("C4", "C5") if certificate else ()
    result = classify_empirical(heights, outlier_fraction, slack, violations)
    if certificate:
        result.evidence["p_power_valuations"] = certificate
    return result


def _worst(classes: Sequence[GrowthClass]) -> GrowthClass:
    if not classes:
        return GrowthClass("C5", EMPIRICAL, {"note": "no nonzero coefficient"})
    if any(c.label == UNKNOWN for c in classes):
        worst = next(c for c in classes if c.label == UNKNOWN)
    else:
        worst = min(classes, key=lambda c: c.rank)
    violations = tuple(sorted({v for c in classes for v in c.violations}))
    return GrowthClass(worst.label, worst.mode, worst.evidence, worst.sample_range, violations,
                       worst.omega_visible)


def classify_generalized(g, p: int, stop=None, outlier_fraction: float = OUTLIER_FRACTION,
                         slack: float = ENVELOPE_SLACK,
                         budget: int = 64) -> Tuple[GrowthClass, Dict[str, GrowthClass]]:
    """Class of a generalized series: the worst class over its standard decomposition."""
    if isinstance(g, TruncatedPuiseux):
        g = GeneralizedSeries.from_xi(XiExpr.from_series(g))
    std = standardize(g, p, budget)
    parts: Dict[str, GrowthClass] = {}
    for (c, j), expr in std.items():
        for omega, series in expr.items():
            if series.is_zero():
                continue
            key = f"e[{AlgebraicNumber.from_element(c, std.domain)}] l^{j} {omega.label(std.domain)}"
            parts[key] = classify_series(series, p, None, stop, outlier_fraction, slack)
    return _worst(list(parts.values())), parts


# --- Mahler denominators -------------------------------------------------------------------


@dataclass(frozen=True)
class DenominatorFactor:
    coefficients: Tuple[Fraction, ...]
    multiplicity: int
    order: Optional[int]

    def in_unit_roots(self) -> bool:
        return self.order is not None

    def in_p_roots(self, p: int) -> bool:
        return self.order is not None and math.gcd(self.order, p) > 1

    def to_dict(self) -> dict:
        return {
            "factor": [fraction_str(c) for c in self.coefficients],
            "multiplicity": self.multiplicity,
            "root_order": self.order,
        }


@dataclass(frozen=True)
class DenominatorReport:
    """A certified multiple of the Mahler denominator, ascending coefficients, monic."""

    polynomial: Tuple[Fraction, ...]
    provenance: str
    certificates: Tuple[str, ...]
    factors: Tuple[DenominatorFactor, ...]
    zero: bool = False
    minimality_checked: bool = False

    def to_dict(self) -> dict:
        return {
            "polynomial": None if self.zero else [fraction_str(c) for c in self.polynomial],
            "zero": self.zero,
            "provenance": self.provenance,
            "certificates": list(self.certificates),
            "factors": [f.to_dict() for f in self.factors],
            "minimality_checked": self.minimality_checked,
        }


def _root_order(coeffs: Tuple[int, ...]) -> Optional[int]:
    if len(coeffs) == 2:
        return is_root_of_unity(Fraction(-coeffs[0], coeffs[1]))
    return is_root_of_unity(AlgebraicNumber.root_of(coeffs, 0))


def denominator_from_operator(guess: GuessResult, minimality_checked: bool = False) -> DenominatorReport:
    """Monic part of a_0 with z-power factors removed."""
    a0 = guess.operator.coefficient(0)
    if not a0.is_exact or any(e.denominator != 1 for e in a0.terms):
        raise UnsupportedSplitting("a_0 must be an exact polynomial")
    values = {int(e): element_to_fraction(c, a0.domain) for e, c in a0.terms.items()}
    if any(v is None for v in values.values()):
        raise UnsupportedSplitting("denominator candidates are factored over the rationals only")
    low, high = min(values), max(values)
    lead = values[high]
    coeffs = tuple(values.get(n, Fraction(0)) / lead for n in range(low, high + 1))
    factors = []
    if len(coeffs) > 1:
        _, parts = field_poly(coeffs, QQ).factor_list()
        for poly, mult in parts:
            _, cleared = poly.clear_denoms(convert=True)
            ints = tuple(int(c) for c in reversed(cleared.all_coeffs()))
            factors.append(DenominatorFactor(
                tuple(Fraction(c, ints[-1]) for c in ints), int(mult), _root_order(ints)
            ))
    factors.sort(key=lambda f: (len(f.coefficients), f.coefficients))
    certificates = (
        f"a0*f + sum_(i>=1) a_i*f(z^(p^i)) = 0 checked through z^{fraction_str(guess.verified_to)}",
        "the denominator divides this candidate" if minimality_checked
        else "via candidate multiple: minimality of the relation is not verified",
    )
    return DenominatorReport(
        coeffs, f"a0 of {guess.operator} ({guess.label})", certificates, tuple(factors),
        False, minimality_checked,
    )


def mahler_denominator_candidate(f: TruncatedPuiseux, max_order: int = 3,
                                 max_degree: int = 4, p: int = 2,
                                 confirm: bool = False) -> DenominatorReport:
    """Candidate multiple of the p-Mahler denominator of a Laurent series."""
    if any(e.denominator != 1 for e in f.terms):
        return DenominatorReport(
            (), "non-integral exponents", ("the ideal of denominators is trivial",), (), True,
        )
    guess = guess_minimal_operator(f, max_order, max_degree, p)
    checked = False
    if confirm:
        wider = guess_minimal_operator(f, max_order, 2 * max_degree, p)
        checked = wider.order == guess.order and wider.degree == guess.degree
    return denominator_from_operator(guess, checked)


def classify_by_roots(report: DenominatorReport, p: int) -> GrowthClass:
    """Certified regime from the nonzero roots of the denominator candidate."""
    if report.zero:
        return GrowthClass(UNKNOWN, CERTIFIED, {"note": "denominator is zero"})
    evidence = {
        "roots": [f.to_dict() for f in report.factors],
        "basis": "exact denominator" if report.minimality_checked else "via candidate multiple",
    }
    if all(f.in_p_roots(p) for f in report.factors):
        label = "C3"
    elif all(f.in_unit_roots() for f in report.factors):
        label = "C2"
    else:
        label = "C1"
    return GrowthClass(label, CERTIFIED, evidence)


# --- pullbacks ----------------------------------------------------------------------------


def _shifted_powers(j: int, k: int) -> Dict[int, Fraction]:
    """(l + k)^j over the powers of l."""
    return {i: Fraction(int(binomial(j, i))) * Fraction(k) ** (j - i) for i in range(j + 1)}


def _rescale(target, m: Fraction, shift: int, p: int):
    if isinstance(target, MahlerOperator):
        return MahlerOperator(target.p, [a.mahler_substitute(m) for a in target.coefficients])
    if isinstance(target, TruncatedPuiseux):
        return target.mahler_substitute(m)
    if isinstance(target, XiExpr):
        return XiExpr(
            {xi_scale(omega, m): f.mahler_substitute(m) for omega, f in target.terms.items()},
            target.domain,
        )
    K = target.domain
    out: Dict[Tuple[object, int], XiExpr] = {}
    for (c, j), expr in target.terms.items():
        moved = _rescale(expr, m, shift, p)
        factor = K.one
        base = c if shift >= 0 else K.one / c
        for _ in range(abs(shift)):
            factor = factor * base
        for i, weight in _shifted_powers(j, shift).items():
            if not weight:
                continue
            part = moved * (factor * to_field(weight, K))
            out[(c, i)] = out[(c, i)] + part if (c, i) in out else part
    return GeneralizedSeries(out, K)


def _check_pullback(nu: int, k: int, p: int) -> None:
    if nu < 1 or k < 0:
        raise ValueError(f"need nu >= 1 and k >= 0, got nu={nu}, k={k}")
    if math.gcd(nu, p) != 1:
        raise ValueError(f"nu={nu} must be coprime with p={p}")


def pullback(target, nu: int, k: int, p: int = 2):
    """Substitute z -> z^(nu p^k); e_c picks up c^k and l becomes l + k."""
    p = target.p if isinstance(target, MahlerOperator) else p
    _check_pullback(nu, k, p)
    return _rescale(target, Fraction(nu * p ** k), k, p)


def inverse_pullback(target, nu: int, k: int, p: int = 2):
    p = target.p if isinstance(target, MahlerOperator) else p
    _check_pullback(nu, k, p)
    return _rescale(target, Fraction(1, nu * p ** k), -k, p)


def pullback_parameters(g: GeneralizedSeries, p: int) -> Tuple[int, int]:
    """Smallest k, then smallest nu, clearing xi-index and exponent denominators."""
    denominators = set()
    for _, expr in g.terms.items():
        for omega, f in expr.terms.items():
            denominators.update(a.denominator for a in omega.a)
            denominators.update(e.denominator for e in f.terms)
    k, nu = 0, 1
    for d in denominators:
        v = 0
        while d % p == 0:
            d //= p
            v += 1
        k = max(k, v)
        nu = nu * d // math.gcd(nu, d)
    return nu, k


# --- purity ----------------------------------------------------------------------------------


@dataclass
class PurityReport:
    series_class: GrowthClass
    operator: MahlerOperator
    nu: int
    k: int
    basis: List[GeneralizedSeries]
    basis_classes: List[GrowthClass]
    agreement: Dict[int, Optional[bool]]
    denominator: Optional[DenominatorReport] = None
    warnings: List[str] = field(default_factory=list)
    uncertified: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "class": self.series_class.label,
            "mode": self.series_class.mode,
            "operator": str(self.operator),
            "pullback": {"nu": self.nu, "k": self.k},
            "denominator": self.denominator.to_dict() if self.denominator else None,
            "basis_classes": [
                {"element": str(b), **c.to_dict()} for b, c in zip(self.basis, self.basis_classes)
            ],
            "agreement": {f"C{r}": v for r, v in self.agreement.items()},
            "warnings": self.warnings,
            "uncertified": self.uncertified,
        }


def _laurent_part(g: GeneralizedSeries) -> Optional[TruncatedPuiseux]:
    live = [(key, expr) for key, expr in g.terms.items() if not expr.is_zero()]
    if len(live) != 1:
        return None
    (c, j), expr = live[0]
    if c != g.domain.one or j or set(o for o, f in expr.terms.items() if not f.is_zero()) != {EMPTY}:
        return None
    return expr.coefficient(EMPTY)


def _minimality_warnings(L: MahlerOperator, f: Optional[TruncatedPuiseux], max_degree: int) -> List[str]:
    warnings = []
    K = L.domain
    if L.is_exact and L.order > 1:
        total = TruncatedPuiseux.zero(None, K)
        for a in L.coefficients:
            total = total + a
        if total.is_zero():
            warnings.append(
                "the equation is not minimal with respect to the constant solution 1, "
                "which already satisfies y(z^p) = y(z)"
            )
    if f is not None and L.order > 1:
        try:
            lower = guess_minimal_operator(f, L.order - 1, max_degree, L.p)
        except NoRelationFound:
            lower = None
        if lower is not None:
            warnings.append(f"the series satisfies a relation of lower order: {lower.operator}")
    return warnings


def purity_report(f: Union[TruncatedPuiseux, GeneralizedSeries], p: int = 2,
                  operator: Optional[MahlerOperator] = None,
                  max_order: int = 3, max_degree: int = 4,
                  precision: int = 80, recursion_budget: int = 64,
                  cyclic_budget: int = 50, max_extension_degree: int = 6) -> PurityReport:
    """Compare the growth class of f with that of every solution of its equation."""
    p = operator.p if operator is not None else p
    budget = recursion_budget
    g = f if isinstance(f, GeneralizedSeries) else GeneralizedSeries.from_xi(XiExpr.from_series(f))
    g = standardize(g, p, budget)
    series_class, _ = classify_generalized(g, p, budget=budget)

    nu, k = pullback_parameters(g, p)
    pulled = pullback(g, nu, k, p)
    laurent = _laurent_part(pulled)
    uncertified = [f"{series_class.mode} class for the series"]
    denominator = None
    if operator is None:
        if laurent is None:
            raise NoRelationFound("guessing needs a Laurent series; supply the operator")
        sample = laurent if laurent.precision is None else laurent.truncate(
            min(laurent.precision, GUESS_WINDOW * (max_order + 1) * (max_degree + 2))
        )
        guess = guess_minimal_operator(sample, max_order, max_degree, p)
        L = guess.operator
        denominator = denominator_from_operator(guess)
        uncertified.append(f"operator is a {guess.label}")
    else:
        L = pullback(operator, nu, k)
    warnings = _minimality_warnings(L, laurent, max_degree)

    basis = solution_basis(L, precision, budget=cyclic_budget,
                           max_degree=max_extension_degree, recursion_budget=budget)
    basis_classes = []
    for element in basis:
        try:
            cls, _ = classify_generalized(element, p, budget=budget)
        except InsufficientData as e:
            warnings.append(f"basis element left unclassified: {e}")
            cls = GrowthClass(UNKNOWN, EMPIRICAL, {"error": str(e)})
        basis_classes.append(cls)
    uncertified.append("basis classes are empirical over the computed precision")

    agreement: Dict[int, Optional[bool]] = {}
    for r in range(1, 6):
        expected = series_class.satisfies(r)
        found = [c.satisfies(r) for c in basis_classes]
        if expected is None or any(x is None for x in found):
            agreement[r] = None
        else:
            agreement[r] = all(x == expected for x in found)
    for r in (1, 2, 3):
        if agreement[r] is False:
            warnings.append(f"classes disagree at C{r}; expected agreement, check the operator or precision")
    logger.info("purity report: class %s, basis %s", series_class.label,
                [c.label for c in basis_classes])
    return PurityReport(series_class, L, nu, k, basis, basis_classes, agreement, denominator,
                        warnings, uncertified)
