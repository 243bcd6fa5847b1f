"""Run the acceptance suite and show its per-criterion lines.

Usage: python3 scripts/run_acceptance.py [-k EXPR]
"""
import sys

import pytest

if __name__ == "__main__":
    here = __file__.rsplit("/", 2)[0] or "."
    sys.exit(pytest.main([f"{here}/tests/test_acceptance.py", "-q", "-s", *sys.argv[1:]]))
