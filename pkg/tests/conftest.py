#!/usr/bin/env python

import sys
from pathlib import Path

import pytest

# Add the source directory to the path so we can import the modules
src_dir = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_dir))

from mahler_toolkit import xi
from mahler_toolkit.formats import parse_operator


@pytest.fixture
def rs_operator():
    """The Rudin-Shapiro equation 1 + (z-1) M - 2z M^2 with p = 2."""
    return parse_operator("1 + (z-1)*M - 2*z*M^2 @ p=2")


@pytest.fixture(autouse=True)
def fresh_xi_caches():
    xi.clear_caches()
    yield
    xi.clear_caches()
