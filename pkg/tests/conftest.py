import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from satbeam.array_model import ArrayConfig, WeightMatrix  # noqa: E402


@pytest.fixture(scope="session")
def cfg():
    return ArrayConfig()


@pytest.fixture(scope="session")
def all_on(cfg):
    return WeightMatrix(np.ones((cfg.n_ports, cfg.n_ports), np.uint8))


@pytest.fixture(scope="session")
def small_cfg():
    # 8x8 ports, 2x2 subarrays at 1.5 lambda: cheap enough for brute-force oracles
    lam = 299_792_458.0 / 19e9
    return ArrayConfig(n_ports=8, port_spacing=1.5 * lam, subarray_n=2, fov_half_angle=20.0)


# acceptance results, filled by tests/test_acceptance.py and echoed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"AC{n:<2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
