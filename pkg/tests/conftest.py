import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kedmd_mpc import WendlandKernel, chebyshev_grid, fit_control_surrogate, generate_cluster_data, van_der_pol

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def vdp():
    return van_der_pol()


@pytest.fixture(scope="session")
def vdp_data_441(vdp):
    return generate_cluster_data(vdp, chebyshev_grid(21), 0.0, 25, seed=0)


@pytest.fixture(scope="session")
def surrogate_441(vdp_data_441):
    return fit_control_surrogate(vdp_data_441, WendlandKernel())


@pytest.fixture(scope="session")
def surrogate_121(vdp):
    data = generate_cluster_data(vdp, chebyshev_grid(11), 0.0, 25, seed=0)
    return fit_control_surrogate(data, WendlandKernel())


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one status line per acceptance criterion."""

    def record(number, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES[number] = f"criterion {number:>2} [{status}] {name}: {detail}"
        print(ACCEPTANCE_LINES[number])
        return ok

    return record
