import numpy as np
import pytest

from momentopt import models
from momentopt.model import Weighting

# seeded p = 12 sample whose optimal-weighting rank grid fails by a sign change
P12_SEED = 1


@pytest.fixture(scope="session")
def calibrated():
    return models.ma1_calibrated()


@pytest.fixture(scope="session")
def p12_identity():
    return models.ma1_moment_model(models.MA1Spec(p=12, seed=P12_SEED), "identity")


@pytest.fixture(scope="session")
def p12_optimal():
    return models.ma1_moment_model(models.MA1Spec(p=12, seed=P12_SEED), "optimal")


@pytest.fixture(scope="session")
def gaussian():
    return models.gaussian_moment_model(theta_true=(0.0, 1.0)), Weighting.identity(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, label = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {label}")
