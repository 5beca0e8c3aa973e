import numpy as np
import pytest

from mixstock.simulate import SimulationConfig, simulate_dataset


@pytest.fixture(scope="session")
def small_config():
    cov = np.array([[-1.0, 0.0, 1.0], [0.5, -1.0, 0.5]])
    return SimulationConfig(n_sources=3, n_loci=3, n_alleles=4, fst=0.1, allele_total=60,
                            colony_size=30, omega=0.2, alpha=(0.4, -0.3), covariates=cov,
                            covariate_names=("a", "b"), seed=11)


@pytest.fixture(scope="session")
def small_data(small_config):
    return simulate_dataset(small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE]

    def check(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
