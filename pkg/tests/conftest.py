import math

import numpy as np
import pytest
import torch
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

curvatures = st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0])


def vectors(n_min=1, n_max=6, bound=3.0):
    """Spatial vectors of random length with bounded components."""
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(np.float64, n, elements=st.floats(-bound, bound, allow_nan=False, width=64))
    )


def fixed_vectors(n, bound=3.0):
    return arrays(np.float64, n, elements=st.floats(-bound, bound, allow_nan=False, width=64))


def t(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Acceptance reporting: tests marked ``acceptance("<criterion>")`` are grouped
# by criterion and summarized as one PASS/FAIL line each.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): test belongs to the named acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE.setdefault(marker.args[0], []).append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _ACCEPTANCE.items():
        ok = all(passed for _, passed, _ in results)
        details = "; ".join(d for _, _, d in results if d)
        failed = [test for test, passed, _ in results if not passed]
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if details:
            line += f"  [{details}]"
        if failed:
            line += f"  failed: {', '.join(failed)}"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a short measured summary to the acceptance line of this test."""

    def record(text: str) -> None:
        request.node.acceptance_detail = text

    return record
