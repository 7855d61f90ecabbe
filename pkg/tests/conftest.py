"""Shared fixtures: the cached reference runs behind the acceptance gate."""

from pathlib import Path

import pytest

from qmaser import acceptance

CACHE_DIR = Path(__file__).parent / "_cache"


@pytest.fixture(scope="session")
def reference_runs():
    """Every reference run, loaded from the on-disk cache when present.

    A cold cache recomputes the runs in process, which takes hours;
    scripts/build_reference_runs.py populates it once ahead of time.
    """
    return acceptance.execute_all_runs(CACHE_DIR, log=print)
