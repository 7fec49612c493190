import numpy as np
import pytest

from cbranch.rngkit import make_stream


@pytest.fixture
def root():
    return make_stream(20240)


def assert_within(samples_or_est, target, k=4.0, bias=0.0):
    """Mean within ``k`` standard errors (plus ``bias``) of ``target``."""
    from cbranch.estimate import MCEstimate

    est = samples_or_est
    if not isinstance(est, MCEstimate):
        est = MCEstimate.from_samples(np.asarray(est, dtype=float))
    assert abs(est.mean - target) <= k * est.stderr + bias, (est, target)
    return est


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
