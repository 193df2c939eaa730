#!/usr/bin/env python
import logging
import sys

import dotenv

from mahler_toolkit.config import config, configure_logging
from mahler_toolkit.server import mcp

logger = logging.getLogger(__name__)


def setup_environment():
    dotenv.load_dotenv()
    configure_logging()
    # stdout is the MCP transport, so problems are only logged
    problems = config.validate()
    for problem in problems:
        logger.error("configuration: %s", problem)
    if problems:
        return False
    logger.info("Mahler toolkit configured with p=%d, precision=%d", config.p, config.precision)
    return True


def run_server():
    """Main entry point for the Mahler Toolkit MCP Server"""
    if not setup_environment():
        sys.exit(1)

    mcp.run(transport="stdio")


if __name__ == "__main__":
    run_server()
