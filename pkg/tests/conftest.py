import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

import pytest


@pytest.fixture(scope="session")
def small_dataset():
    from groundltl.dataset import GenConfig, generate

    return generate(GenConfig(n=60, seed=3))


def pytest_terminal_summary(terminalreporter):
    from helpers import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
