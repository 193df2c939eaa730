#!/usr/bin/env python
"""The ``mahler`` command line.

Every command builds a JobSpec and hands it to ``run``, which returns the
exit status and the text to print. Exit statuses: 0 success, 2 parse
error, 3 precision error, 4 unsupported splitting, 5 no relation found.
"""

import dataclasses
import logging
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import typer
from pydantic import BaseModel, Field, ValidationError, field_validator
from sympy.polys.matrices import DomainMatrix

from mahler_toolkit.algebra import element_str, fraction_str
from mahler_toolkit.config import config, configure_logging
from mahler_toolkit.errors import MahlerError, NoRelationFound, ParseError, UnsupportedSplitting
from mahler_toolkit.formats import (
    document,
    generalized_to_json,
    operator_from_json,
    operator_to_json,
    parse_operator,
    parse_window,
    parse_xi_expr,
    read_document,
    render_generalized,
    render_operator,
    render_series,
    render_xi,
    series_to_json,
    xi_to_json,
)
from mahler_toolkit.growth import (
    classify_by_roots,
    classify_series,
    coefficient_heights,
    mahler_denominator_candidate,
    plot_data,
    purity_report,
)
from mahler_toolkit.operators import (
    MahlerOperator,
    equation_to_companion,
    factor_by_slopes,
    newton_polygon,
)
from mahler_toolkit.reduction import reduce_to_constant, solution_basis, verify_gauge
from mahler_toolkit.regression import check_table, series_literal, verify_paper
from mahler_toolkit.series import TruncatedPuiseux
from mahler_toolkit.xi import (
    EMPTY,
    GeneralizedSeries,
    HahnWindow,
    XiExpr,
    default_lower,
    hahn_window,
    standardize,
    xi_annihilator,
    xi_multiply,
)

logger = logging.getLogger(__name__)

Command = Literal["solve", "reduce", "newton", "factor", "classify", "purity", "xi", "verify-paper"]
XiAction = Literal["expand", "shift", "standardize", "multiply", "annihilator"]


class JobSpec(BaseModel):
    command: Command
    expr: Optional[str] = None
    input_path: Optional[Path] = None
    action: Optional[XiAction] = None
    other: Optional[str] = None
    operator: Optional[str] = None
    shift: int = 1
    p: int = Field(default_factory=lambda: config.p, ge=2)
    precision: int = Field(default_factory=lambda: config.precision, gt=0)
    window: Optional[str] = None
    max_order: int = Field(default_factory=lambda: config.max_order, ge=1)
    max_degree: int = Field(default_factory=lambda: config.max_degree, ge=0)
    output_format: Literal["text", "json", "tsv-plot"] = Field(default_factory=lambda: config.output_format)

    @field_validator("window")
    @classmethod
    def _window_is_valid(cls, value: Optional[str]) -> Optional[str]:
        if value:
            try:
                parse_window(value)
            except ParseError as e:
                raise ValueError(str(e)) from e
        return value

    def source(self) -> str:
        if self.expr is not None:
            return self.expr
        if self.input_path is not None:
            try:
                return self.input_path.read_text()
            except OSError as e:
                raise ParseError(f"cannot read {self.input_path}: {e}") from e
        raise ParseError("no input: pass a file or --expr")


# --- rendering helpers -------------------------------------------------------------------------


def _constant_rows(M: DomainMatrix) -> List[List[str]]:
    return [[element_str(c, M.domain) for c in row] for row in M.to_list()]


def _grid_text(rows: List[List[str]]) -> str:
    return "\n".join("  [" + ", ".join(row) + "]" for row in rows)


def _load_operator(spec: JobSpec, text: Optional[str] = None) -> MahlerOperator:
    text = spec.source() if text is None else text
    if text.lstrip().startswith("{"):
        return operator_from_json(read_document(text)["operator"])
    return parse_operator(text, spec.p)


def _hahn_pairs(h) -> List[List[str]]:
    return [[fraction_str(e), element_str(c, h.domain)] for e, c in h.items()]


def _laurent_echelon(basis: List[GeneralizedSeries]) -> Optional[List[TruncatedPuiseux]]:
    """Reduced echelon form of a basis made of plain series, lowest exponents first."""
    series = []
    for g in basis:
        live = {key: expr for key, expr in g.terms.items() if not expr.is_zero()}
        if set(live) - {(g.domain.one, 0)}:
            return None
        expr = live.get((g.domain.one, 0))
        if expr is None or set(o for o, f in expr.terms.items() if not f.is_zero()) != {EMPTY}:
            return None
        series.append(expr.coefficient(EMPTY))
    if not series:
        return None
    K = series[0].domain
    known = [f.precision for f in series if f.precision is not None]
    N = min(known) if known else None
    exponents = sorted({e for f in series for e in f.terms if N is None or e < N})
    rows = [[f.terms.get(e, K.zero) for e in exponents] for f in series]
    reduced, pivots = DomainMatrix(rows, (len(rows), len(exponents)), K).rref()
    dense = reduced.to_list()
    return [
        TruncatedPuiseux({e: c for e, c in zip(exponents, dense[r])}, N, K)
        for r in range(len(pivots))
    ]


# --- commands -------------------------------------------------------------------------------------


def _solve(spec: JobSpec) -> str:
    L = _load_operator(spec)
    basis = solution_basis(L, spec.precision, budget=config.cyclic_budget,
                           max_degree=config.max_extension_degree,
                           recursion_budget=config.recursion_budget)
    laurent = _laurent_echelon(basis)
    windows = None
    if spec.window:
        window = _window(spec, *(block for g in basis for _, block in g.items()))
        windows = [
            [(element_str(c, g.domain), j, hahn_window(block, window, spec.p)) for (c, j), block in g.items()]
            for g in basis
        ]
    if spec.output_format == "json":
        payload = {"command": "solve", "operator": operator_to_json(L),
                   "basis": [generalized_to_json(g) for g in basis]}
        if laurent is not None:
            payload["laurent_basis"] = [series_to_json(f) for f in laurent]
        if windows is not None:
            payload["windows"] = [
                [{"c": c, "j": j, "terms": _hahn_pairs(h)} for c, j, h in blocks] for blocks in windows
            ]
        return document(payload)
    lines = [f"operator: {render_operator(L)}"]
    if laurent is not None:
        lines.extend(f"y{i + 1} = {render_series(f)}" for i, f in enumerate(laurent))
    else:
        lines.extend(f"y{i + 1} = {render_generalized(g)}" for i, g in enumerate(basis))
    for i, blocks in enumerate(windows or []):
        lines.extend(f"y{i + 1} [e_{c} l^{j}] on window: {h}" for c, j, h in blocks)
    return "\n".join(lines)


def _reduce(spec: JobSpec) -> str:
    L = _load_operator(spec)
    N = Fraction(spec.precision)
    A = equation_to_companion(L, 2 * N)
    result = reduce_to_constant(A, N, budget=config.cyclic_budget, max_degree=config.max_extension_degree)
    report = verify_gauge(A, result, N, config.recursion_budget)
    F1 = [[render_series(f) for f in row] for row in result.F1]
    F2 = [[render_xi(x) for x in row] for row in result.F2]
    Theta = [[render_series(f) for f in row] for row in result.Theta]
    C = _constant_rows(result.C)
    windows = []
    if spec.window:
        window = _window(spec, *(x for row in result.F2 for x in row))
        windows = [[hahn_window(x, window, spec.p) for x in row] for row in result.F2]
    if spec.output_format == "json":
        extra = {"F2_windows": [[_hahn_pairs(h) for h in row] for row in windows]} if windows else {}
        return document({
            "command": "reduce",
            "F1": F1, "F2": F2, "Theta": Theta, "C": C, **extra,
            "exponents": [str(e) for e in result.exponents],
            "block_profile": list(result.block_profile),
            "slope_profile": [[fraction_str(s), m] for s, m in result.slope_profile],
            "residual_report": report.to_dict(),
        })
    return "\n".join([
        f"exponents: {', '.join(str(e) for e in result.exponents)}",
        f"blocks: {list(result.block_profile)}",
        "F1:", _grid_text(F1), "F2:", _grid_text(F2), "Theta:", _grid_text(Theta), "C:", _grid_text(C),
        f"residual: {'zero' if report.zero else 'NONZERO'} below z^{report.precision}",
    ] + [f"F2[{i}][{j}] on window: {h}" for i, row in enumerate(windows) for j, h in enumerate(row)])


def _newton(spec: JobSpec) -> str:
    data = newton_polygon(_load_operator(spec), config.max_extension_degree)
    edges = [
        {"slope": fraction_str(e.slope), "multiplicity": e.multiplicity,
         "exponents": [str(c) for c in e.exponents]}
        for e in data.edges
    ]
    if spec.output_format == "json":
        return document({
            "command": "newton",
            "vertices": [[x, fraction_str(v)] for x, v in data.vertices],
            "edges": edges,
        })
    lines = ["vertices: " + " ".join(f"({x}, {fraction_str(v)})" for x, v in data.vertices)]
    lines.extend(
        f"slope {e['slope']} x{e['multiplicity']}: exponents {', '.join(e['exponents'])}" for e in edges
    )
    return "\n".join(lines)


def _factor(spec: JobSpec) -> str:
    L = _load_operator(spec)
    result = factor_by_slopes(L, spec.precision, max_degree=config.max_extension_degree)
    factors = [
        {"nu": fraction_str(f.nu), "c": element_str(f.c, result.field), "h": render_series(f.h)}
        for f in result.factors
    ]
    if spec.output_format == "json":
        return document({
            "command": "factor",
            "unit": series_to_json(result.unit),
            "factors": factors,
            "slope_profile": [[fraction_str(s), m] for s, m in result.slope_profile],
            "nu_formula_ok": result.nu_formula_ok,
        })
    lines = [f"unit: {render_series(result.unit)}"]
    lines.extend(f"(z^{f['nu']}*M - {f['c']}) / h, h = {f['h']}" for f in factors)
    return "\n".join(lines)


def _classify(spec: JobSpec) -> str:
    f = series_literal(spec.source(), spec.precision)
    heights = coefficient_heights(f)
    if spec.output_format == "tsv-plot":
        return plot_data(heights).rstrip("\n")
    result = classify_series(f, spec.p, outlier_fraction=config.outlier_fraction,
                             slack=config.envelope_slack)
    warnings = []
    denominator = None
    certified = None
    try:
        denominator = mahler_denominator_candidate(f, spec.max_order, spec.max_degree, spec.p)
        certified = classify_by_roots(denominator, spec.p)
    except (NoRelationFound, UnsupportedSplitting) as e:
        warnings.append(f"no denominator candidate: {e}")
    if spec.output_format == "json":
        return document({
            "command": "classify",
            "class": result.label,
            "mode": result.mode,
            "empirical": result.to_dict(),
            "certified": certified.to_dict() if certified else None,
            "denominator": denominator.to_dict() if denominator else None,
            "basis_classes": [],
            "warnings": warnings,
        })
    lines = [f"class: {result.label} ({result.mode})"]
    if result.violations:
        lines.append(f"fails: {', '.join(result.violations)}")
    if certified is not None:
        lines.append(f"certified by roots: {certified.label} ({certified.evidence['basis']})")
    lines.extend(f"warning: {w}" for w in warnings)
    return "\n".join(lines)


def _purity(spec: JobSpec) -> str:
    f = series_literal(spec.source(), spec.precision)
    operator = parse_operator(spec.operator, spec.p) if spec.operator else None
    report = purity_report(
        f, spec.p, operator, spec.max_order, spec.max_degree, spec.precision,
        recursion_budget=config.recursion_budget, cyclic_budget=config.cyclic_budget,
        max_extension_degree=config.max_extension_degree,
    )
    if spec.output_format == "json":
        return document({"command": "purity", **report.to_dict()})
    lines = [f"series class: {report.series_class.label}", f"operator: {render_operator(report.operator)}"]
    for i, (b, c) in enumerate(zip(report.basis, report.basis_classes)):
        fails = f", fails {', '.join(c.violations)}" if c.violations else ""
        lines.append(f"y{i + 1}: {c.label}{fails}")
    lines.extend(
        f"C{r}: {'agree' if v else ('disagree' if v is False else 'undecided')}"
        for r, v in report.agreement.items()
    )
    lines.extend(f"warning: {w}" for w in report.warnings)
    return "\n".join(lines)


def _window(spec: JobSpec, *exprs: XiExpr) -> HahnWindow:
    parsed = parse_window(spec.window)
    indices = [omega for expr in exprs for omega in expr.terms]
    if parsed is None:
        lower = config.window_lower if config.window_lower is not None else default_lower(*indices)
        return HahnWindow(lower, -Fraction(1, spec.p ** config.window_depth), config.window_depth)
    lower, epsilon = parsed
    base = HahnWindow.for_cutoff(indices[0] if indices else EMPTY, epsilon, spec.p)
    return dataclasses.replace(base, lower=lower)


def _xi(spec: JobSpec) -> str:
    if spec.action is None:
        raise ParseError("xi needs an action: expand, shift, standardize, multiply or annihilator")
    expr = parse_xi_expr(spec.source())
    p = spec.p
    result: object
    if spec.action == "expand":
        result = hahn_window(expr, _window(spec, expr), p)
        text = str(result)
    elif spec.action == "shift":
        result = standardize(expr.sigma(p, spec.shift), p, config.recursion_budget)
        text = render_xi(result)
    elif spec.action == "standardize":
        result = standardize(expr, p, config.recursion_budget)
        text = render_xi(result)
    elif spec.action == "multiply":
        if not spec.other:
            raise ParseError("multiply needs --other")
        result = standardize(xi_multiply(expr, parse_xi_expr(spec.other), p), p, config.recursion_budget)
        text = render_xi(result)
    else:
        live = [omega for omega, f in expr.terms.items() if not f.is_zero()]
        if len(live) != 1 or expr.terms[live[0]] != TruncatedPuiseux.constant(1, expr.domain):
            raise ParseError("annihilator takes a single xi index")
        result = xi_annihilator(live[0], p, expr.domain)
        text = render_operator(result)
    if spec.output_format == "json":
        if isinstance(result, XiExpr):
            payload = xi_to_json(result)
        elif isinstance(result, MahlerOperator):
            payload = operator_to_json(result)
        else:
            payload = _hahn_pairs(result)
        return document({"command": "xi", "action": spec.action, "result": payload, "text": text})
    return text


def _verify_paper(spec: JobSpec) -> Tuple[int, str]:
    checks = verify_paper(spec.precision)
    status = 0 if all(c.passed for c in checks) else MahlerError.exit_code
    if spec.output_format == "json":
        return status, document({"command": "verify-paper", "checks": [c.to_dict() for c in checks]})
    return status, check_table(checks)


HANDLERS: Dict[str, Callable[[JobSpec], Union[str, Tuple[int, str]]]] = {
    "solve": _solve,
    "reduce": _reduce,
    "newton": _newton,
    "factor": _factor,
    "classify": _classify,
    "purity": _purity,
    "xi": _xi,
    "verify-paper": _verify_paper,
}


def run(spec: JobSpec) -> Tuple[int, str]:
    """Run one job; returns (exit status, output text)."""
    try:
        out = HANDLERS[spec.command](spec)
    except MahlerError as e:
        logger.error("%s failed: %s", spec.command, e)
        return e.exit_code, f"error: {e}"
    except ValueError as e:
        logger.error("%s rejected its input: %s", spec.command, e)
        return ParseError.exit_code, f"error: {e}"
    return out if isinstance(out, tuple) else (0, out)


# --- typer surface -----------------------------------------------------------------------------------

app = typer.Typer(name="mahler", help="Exact tools for p-Mahler equations.", no_args_is_help=True,
                  add_completion=False)

InputArg = typer.Argument(None, help="Input file; use --expr for inline input.")
ExprOpt = typer.Option(None, "--expr", help="Inline expression.")
POpt = typer.Option(None, "--p", help="The Mahler base p.")
PrecisionOpt = typer.Option(None, "--precision", help="Precision N in exponent units.")
WindowOpt = typer.Option(None, "--window", help="Hahn window as 'L,eps'.")
MaxOrderOpt = typer.Option(None, "--max-order", help="Order bound for guessing.")
MaxDegreeOpt = typer.Option(None, "--max-degree", help="Degree bound for guessing.")
FormatOpt = typer.Option(None, "--format", help="text, json or tsv-plot.")


def _emit(command: str, **fields) -> None:
    configure_logging()
    values = {k: v for k, v in fields.items() if v is not None}
    try:
        spec = JobSpec(command=command, **values)
    except ValidationError as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(ParseError.exit_code)
    status, text = run(spec)
    typer.echo(text, err=status != 0 and text.startswith("error:"))
    raise typer.Exit(status)


@app.command()
def solve(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt, p: Optional[int] = POpt,
          precision: Optional[int] = PrecisionOpt, window: Optional[str] = WindowOpt,
          output_format: Optional[str] = FormatOpt):
    """Basis of generalized series solutions of an operator."""
    _emit("solve", input_path=input_path, expr=expr, p=p, precision=precision, window=window,
          output_format=output_format)


@app.command()
def reduce(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt, p: Optional[int] = POpt,
           precision: Optional[int] = PrecisionOpt, window: Optional[str] = WindowOpt,
           output_format: Optional[str] = FormatOpt):
    """Gauge the companion system to constant form and check the residual."""
    _emit("reduce", input_path=input_path, expr=expr, p=p, precision=precision, window=window,
          output_format=output_format)


@app.command()
def newton(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt, p: Optional[int] = POpt,
           output_format: Optional[str] = FormatOpt):
    """Newton polygon, slopes and exponents."""
    _emit("newton", input_path=input_path, expr=expr, p=p, output_format=output_format)


@app.command()
def factor(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt, p: Optional[int] = POpt,
           precision: Optional[int] = PrecisionOpt, output_format: Optional[str] = FormatOpt):
    """Factor an operator into first-order factors by slope."""
    _emit("factor", input_path=input_path, expr=expr, p=p, precision=precision, output_format=output_format)


@app.command()
def classify(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt, p: Optional[int] = POpt,
             precision: Optional[int] = PrecisionOpt, max_order: Optional[int] = MaxOrderOpt,
             max_degree: Optional[int] = MaxDegreeOpt, output_format: Optional[str] = FormatOpt):
    """Growth class of a series (rs, g, laurent or a literal)."""
    _emit("classify", input_path=input_path, expr=expr, p=p, precision=precision, max_order=max_order,
          max_degree=max_degree, output_format=output_format)


@app.command()
def purity(input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt,
           operator: Optional[str] = typer.Option(None, "--operator", help="Equation to use instead of guessing."),
           p: Optional[int] = POpt, precision: Optional[int] = PrecisionOpt,
           max_order: Optional[int] = MaxOrderOpt, max_degree: Optional[int] = MaxDegreeOpt,
           output_format: Optional[str] = FormatOpt):
    """Compare the growth class of a series with that of every solution of its equation."""
    _emit("purity", input_path=input_path, expr=expr, operator=operator, p=p, precision=precision,
          max_order=max_order, max_degree=max_degree, output_format=output_format)


@app.command()
def xi(action: str = typer.Argument(..., help="expand, shift, standardize, multiply or annihilator"),
       input_path: Optional[Path] = InputArg, expr: Optional[str] = ExprOpt,
       other: Optional[str] = typer.Option(None, "--other", help="Second factor for multiply."),
       shift: Optional[int] = typer.Option(None, "--shift", help="Power of sigma for shift."),
       p: Optional[int] = POpt, window: Optional[str] = WindowOpt,
       output_format: Optional[str] = FormatOpt):
    """Operations on xi expressions."""
    _emit("xi", action=action, input_path=input_path, expr=expr, other=other, shift=shift, p=p,
          window=window, output_format=output_format)


@app.command("verify-paper")
def verify_paper_command(precision: Optional[int] = PrecisionOpt, output_format: Optional[str] = FormatOpt):
    """Run the built-in reference checks."""
    _emit("verify-paper", precision=precision, output_format=output_format)


if __name__ == "__main__":
    app()
