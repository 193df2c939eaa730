"""
Mahler Toolkit
--------------
Exact computer algebra for linear p-Mahler equations at 0: series and
operators, reduction of Mahler systems to constant form, xi Hahn series,
and height growth of solution coefficients. Available as the ``mahler``
command and as an MCP server.
"""

__version__ = "0.1.0"
