#!/usr/bin/env python

import os
import sys
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import dotenv

dotenv.load_dotenv()


def _optional_fraction(value: str) -> Optional[Fraction]:
    return Fraction(value) if value else None


@dataclass
class MahlerConfig:
    p: int
    precision: int
    window_depth: int
    window_lower: Optional[Fraction]
    max_order: int
    max_degree: int
    cyclic_budget: int
    recursion_budget: int
    max_extension_degree: int
    outlier_fraction: float
    envelope_slack: float
    log_level: str
    output_format: str

    def validate(self) -> List[str]:
        """Return the list of configuration problems, empty when usable."""
        problems = []
        if self.p < 2:
            problems.append("MAHLER_P must be at least 2")
        if self.precision <= 0:
            problems.append("MAHLER_PRECISION must be positive")
        if self.window_depth <= 0:
            problems.append("MAHLER_WINDOW_DEPTH must be positive")
        if self.max_order < 1 or self.max_degree < 0:
            problems.append("MAHLER_MAX_ORDER must be >= 1 and MAHLER_MAX_DEGREE >= 0")
        if self.cyclic_budget < 1:
            problems.append("MAHLER_CYCLIC_BUDGET must be positive")
        if self.recursion_budget < 1:
            problems.append("MAHLER_RECURSION_BUDGET must be positive")
        if self.max_extension_degree < 1:
            problems.append("MAHLER_MAX_EXTENSION_DEGREE must be positive")
        if not 0 <= self.outlier_fraction < 1:
            problems.append("MAHLER_OUTLIER_FRACTION must lie in [0, 1)")
        if self.envelope_slack < 1:
            problems.append("MAHLER_ENVELOPE_SLACK must be >= 1")
        if self.output_format not in ("text", "json", "tsv-plot"):
            problems.append("MAHLER_FORMAT must be one of text, json, tsv-plot")
        return problems


def load_config() -> MahlerConfig:
    return MahlerConfig(
        p=int(os.environ.get("MAHLER_P", "2")),
        precision=int(os.environ.get("MAHLER_PRECISION", "12")),
        window_depth=int(os.environ.get("MAHLER_WINDOW_DEPTH", "8")),
        window_lower=_optional_fraction(os.environ.get("MAHLER_WINDOW_LOWER", "")),
        max_order=int(os.environ.get("MAHLER_MAX_ORDER", "3")),
        max_degree=int(os.environ.get("MAHLER_MAX_DEGREE", "4")),
        cyclic_budget=int(os.environ.get("MAHLER_CYCLIC_BUDGET", "50")),
        recursion_budget=int(os.environ.get("MAHLER_RECURSION_BUDGET", "64")),
        max_extension_degree=int(os.environ.get("MAHLER_MAX_EXTENSION_DEGREE", "6")),
        outlier_fraction=float(os.environ.get("MAHLER_OUTLIER_FRACTION", "0.05")),
        envelope_slack=float(os.environ.get("MAHLER_ENVELOPE_SLACK", "2.0")),
        log_level=os.environ.get("MAHLER_LOG_LEVEL", "WARNING").upper(),
        output_format=os.environ.get("MAHLER_FORMAT", "text"),
    )


config = load_config()


def configure_logging(level: Optional[str] = None) -> None:
    # stdout belongs to the MCP stdio transport, so logs go to stderr
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, (level or config.log_level), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
