import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from skelupdate.kernels import bump_circle, helmholtz_ls, laplace_dlp, ls_grid, scatterer_w0

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def circle_1024():
    return laplace_dlp(bump_circle(1024, 0.9 * np.pi, 1.1 * np.pi))


@pytest.fixture(scope="session")
def ls_16():
    return helmholtz_ls(ls_grid(16, scatterer_w0), 2 * np.pi * 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance_report(request):
    """Record one status line per acceptance criterion."""
    def report(n, status, detail):
        line = f"criterion {n}: {status}  {detail}"
        print(line)
        request.config.stash[ACCEPTANCE].append(line)
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
