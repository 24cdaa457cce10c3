#!/usr/bin/env python3
"""Run the acceptance suite and show one PASS/FAIL line per criterion.

    python scripts/run_acceptance.py            # all ten criteria (a few minutes on one core)
    python scripts/run_acceptance.py -k "not c08 and not c09"   # skip the budget grid
"""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider",
                          *sys.argv[1:]]))
