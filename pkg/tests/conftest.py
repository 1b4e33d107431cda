import logging

import numpy as np
import pytest

from psdalign.simkit import ExperimentConfig, run_downlink

# the circulant-model warning about clamped eigenvalue mass fires by design
# for the default scenario; keep it out of the test logs except where asserted
logging.getLogger("psdalign.fading").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def default_scenario_runs():
    """The full default-scenario runs shared by the heavy acceptance criteria.

    One PSD-aligned downlink run (P=4096, M=16, 200 trials) and the
    conventional-pilots counterpart with the same master seed.
    """
    cfg = ExperimentConfig()
    aligned = run_downlink(cfg)
    conventional = run_downlink(ExperimentConfig(scheme="hadamard"))
    return cfg, aligned, conventional


def assert_close(actual, expected, tol, label=""):
    assert abs(actual - expected) <= tol, f"{label}: {actual} vs {expected} (tol {tol})"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
