import time

import numpy as np
import pytest

from hrfusion import ArrayGeometry, GridSpec
from hrfusion.scene import SceneConfig, model_covariance


def deg(*values):
    return tuple(np.deg2rad(v) for v in values)


def noiseless_covariances(scene: SceneConfig, geometry: ArrayGeometry):
    """Infinite-snapshot covariances of every band with sigma^2 = 0."""
    return [model_covariance(scene, k, geometry) for k in range(scene.num_users + 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture
def noiseless_scene():
    return SceneConfig(deg(0, 30, 60), deg(-10, -70), noise_power=0.0)



SUITE_BUDGET_S = 180.0
_session = {}


def pytest_sessionstart(session):
    _session["start"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus):
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])]
    if not any("test_acceptance" in r.nodeid for r in reports):
        return
    elapsed = time.perf_counter() - _session["start"]
    verdict = "PASS" if elapsed < SUITE_BUDGET_S and exitstatus == 0 else "FAIL"
    terminalreporter.write_line(
        f"[ACCEPTANCE 7] {verdict}: suite ran in {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)"
    )
