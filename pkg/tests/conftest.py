import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ionzne import pulsesim, qcore

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def heh():
    return qcore.load_hamiltonian(qcore.default_hamiltonian_path())


@pytest.fixture(scope="session")
def e_theory(heh):
    return qcore.exact_ground_energy(heh)


@pytest.fixture(scope="session")
def cache():
    return pulsesim.ChannelCache()


@pytest.fixture(scope="session")
def stretch_cache():
    return pulsesim.ChannelCache(ms_base=pulsesim.STRETCH_BASE_MS)


def random_density(rng: np.random.Generator, d: int, rank: int | None = None) -> qcore.DensityMatrix:
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return qcore.DensityMatrix(m / np.trace(m))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
