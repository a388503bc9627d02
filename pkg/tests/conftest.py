import numpy as np
import pytest

from rcinvariants.dynamics import (IntegrationConfig, SystemSpec, generate_trajectory,
                                   random_initial_condition)
from rcinvariants.reservoir import ReservoirParams, train_model

# Hyperparameters found by a short CMA-ES search on the limited-data L96 protocol.
GOOD_L96_PARAMS = ReservoirParams(N=400, rho_A=0.0578, rho_SR=0.272, sigma=0.01,
                                  sigma_b=0.576, leak_rate=0.689, beta=2.3e-10)


@pytest.fixture(scope="session")
def l96():
    return SystemSpec()


@pytest.fixture(scope="session")
def l96_series(l96):
    """30,000 steps on the L96 attractor: 20k train + 10k for checks."""
    u0 = random_initial_condition(l96, 0)
    return generate_trajectory(l96, u0, IntegrationConfig(n_steps=30_000, n_transient=5000))


@pytest.fixture(scope="session")
def trained_l96_model(l96_series):
    return train_model(GOOD_L96_PARAMS, l96_series.segment(0, 20_000), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    outcomes = getattr(mod, "OUTCOMES", None)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in outcomes:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
