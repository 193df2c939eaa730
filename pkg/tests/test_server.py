#!/usr/bin/env python

from unittest.mock import patch

import pytest

from mahler_toolkit import server
from mahler_toolkit.formats import document
from mahler_toolkit.regression import RS_EQUATION
from mahler_toolkit.server import (
    classify_series,
    factor_operator,
    newton_data,
    purity_check,
    reduce_system,
    solve_equation,
    verify_paper_examples,
    xi_tool,
)


def _ok(payload):
    return (0, document(payload))


class TestServerTools:
    @pytest.mark.asyncio
    async def test_solve_equation(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "solve", "basis": []})) as mock_run:
            result = await solve_equation(RS_EQUATION, p=2, precision=10)

        spec = mock_run.call_args[0][0]
        assert spec.command == "solve"
        assert spec.expr == RS_EQUATION
        assert spec.precision == 10
        assert spec.output_format == "json"
        assert result == {"format": 1, "command": "solve", "basis": [], "status": 0}

    @pytest.mark.asyncio
    async def test_reduce_system(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "reduce"})) as mock_run:
            result = await reduce_system(RS_EQUATION, precision=4)
        assert mock_run.call_args[0][0].command == "reduce"
        assert result["command"] == "reduce"

    @pytest.mark.asyncio
    async def test_factor_operator(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "factor"})) as mock_run:
            await factor_operator(RS_EQUATION)
        assert mock_run.call_args[0][0].command == "factor"

    @pytest.mark.asyncio
    async def test_classify_series_passes_bounds(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "classify"})) as mock_run:
            await classify_series("rs", precision=128, max_order=3, max_degree=5)
        spec = mock_run.call_args[0][0]
        assert (spec.command, spec.expr, spec.precision) == ("classify", "rs", 128)
        assert (spec.max_order, spec.max_degree) == (3, 5)

    @pytest.mark.asyncio
    async def test_purity_check_without_operator(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "purity"})) as mock_run:
            await purity_check("rs")
        spec = mock_run.call_args[0][0]
        assert spec.command == "purity"
        assert spec.operator is None

    @pytest.mark.asyncio
    async def test_xi_tool(self):
        with patch("mahler_toolkit.server.run", return_value=_ok({"command": "xi"})) as mock_run:
            await xi_tool("expand", "xi[(0);(1);(1)]", window="-2,1/8")
        spec = mock_run.call_args[0][0]
        assert (spec.action, spec.window, spec.shift) == ("expand", "-2,1/8", 1)

    @pytest.mark.asyncio
    async def test_verify_paper_keeps_failure_status(self):
        with patch("mahler_toolkit.server.run", return_value=(1, document({"checks": []}))):
            result = await verify_paper_examples(precision=8)
        assert result["status"] == 1

    @pytest.mark.asyncio
    async def test_newton_data_end_to_end(self):
        result = await newton_data(RS_EQUATION)
        assert result["status"] == 0
        assert [e["slope"] for e in result["edges"]] == ["0", "1/2"]

    def test_tools_use_config_defaults(self):
        spec = server.JobSpec(command="solve", expr=RS_EQUATION, output_format="json")
        assert spec.p == server.config.p
