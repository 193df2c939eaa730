#!/usr/bin/env python

import asyncio
import json
from typing import Any, Dict, Optional

import dotenv
from mcp.server.fastmcp import FastMCP

from mahler_toolkit.cli import JobSpec, run
from mahler_toolkit.config import config

dotenv.load_dotenv()
mcp = FastMCP("Mahler Toolkit MCP")


async def run_job(**fields) -> Dict[str, Any]:
    """Run a JSON job off the event loop and return the decoded document."""
    spec = JobSpec(output_format="json", **{k: v for k, v in fields.items() if v is not None})
    status, text = await asyncio.to_thread(run, spec)
    if text.startswith("error:"):
        raise ValueError(text[len("error:"):].strip())
    result = json.loads(text)
    result["status"] = status
    return result


@mcp.tool(description="Computes a basis of generalized p-Mahler series solutions of a linear Mahler equation such as '1 + (z-1)*M - 2*z*M^2 @ p=2', where M stands for the substitution z -> z^p. Coefficients are exact up to the given precision.")
async def solve_equation(equation: str, p: int = config.p, precision: int = config.precision) -> Dict[str, Any]:
    return await run_job(command="solve", expr=equation, p=p, precision=precision)


@mcp.tool(description="Reduces the companion system of a Mahler equation to constant form and returns the gauge matrices F1 and F2, the intermediate system Theta, the constant matrix C and a residual report.")
async def reduce_system(equation: str, p: int = config.p, precision: int = config.precision) -> Dict[str, Any]:
    return await run_job(command="reduce", expr=equation, p=p, precision=precision)


@mcp.tool(description="Returns the Newton polygon of a Mahler equation at 0: its vertices, slopes, multiplicities and exponents.")
async def newton_data(equation: str, p: int = config.p) -> Dict[str, Any]:
    return await run_job(command="newton", expr=equation, p=p)


@mcp.tool(description="Factors a Mahler equation into first-order factors ordered by slope, with series h known up to the given precision.")
async def factor_operator(equation: str, p: int = config.p, precision: int = config.precision) -> Dict[str, Any]:
    return await run_job(command="factor", expr=equation, p=p, precision=precision)


@mcp.tool(description="Classifies the height growth of the coefficients of a series into the regimes C1 (O(H)) to C5 (O(1)). The series is 'rs', 'g', 'laurent' or a literal like '1 + z - z^2 + O(z^3)'; at least 64 coefficients are needed.")
async def classify_series(series: str, p: int = config.p, precision: int = 256,
                          max_order: int = config.max_order,
                          max_degree: int = config.max_degree) -> Dict[str, Any]:
    return await run_job(command="classify", expr=series, p=p, precision=precision,
                         max_order=max_order, max_degree=max_degree)


@mcp.tool(description="Compares the growth class of a series with the classes of all solutions of its (guessed or supplied) Mahler equation and reports where they agree.")
async def purity_check(series: str, operator: Optional[str] = None, p: int = config.p, precision: int = 80,
                       max_order: int = config.max_order,
                       max_degree: int = config.max_degree) -> Dict[str, Any]:
    return await run_job(command="purity", expr=series, operator=operator, p=p, precision=precision,
                         max_order=max_order, max_degree=max_degree)


@mcp.tool(description="Operations on xi series: action is one of expand, shift, standardize, multiply or annihilator. Expressions look like 'z^-1 + xi[(0);(1);(1)]'; window is 'L,eps' for expand.")
async def xi_tool(action: str, expression: str, other: Optional[str] = None, shift: int = 1,
                  p: int = config.p, window: Optional[str] = None) -> Dict[str, Any]:
    return await run_job(command="xi", action=action, expr=expression, other=other, shift=shift, p=p,
                         window=window)


@mcp.tool(description="Runs the built-in reference checks on the Rudin-Shapiro equation, the non-minimal Laurent example and the xi identities, and returns a pass/fail list.")
async def verify_paper_examples(precision: int = config.precision) -> Dict[str, Any]:
    return await run_job(command="verify-paper", precision=precision)


if __name__ == "__main__":
    mcp.run()
