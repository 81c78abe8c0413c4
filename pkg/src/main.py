"""
CLI entrypoint for adaptive-lookahead policy iteration.

This module serves as the main entry point, delegating to cli.py.
"""

import sys

from cli import cli


if __name__ == "__main__":
    sys.exit(cli())
