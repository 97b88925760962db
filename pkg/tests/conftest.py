import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spinfeedback.dicke import ManifoldSpec, ManifoldState

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Acceptance lines collected during the run, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_density(spec: ManifoldSpec, rng, rank=None) -> ManifoldState:
    n = spec.dim
    k = n if rank is None else rank
    a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    rho = a @ a.conj().T
    return ManifoldState(spec, rho / np.trace(rho).real)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
