import numpy as np
import pytest

from cellfree_rmmse.channel import complex_normal

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Callable that records one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def report(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def random_instance(rng, M=6, K=3, masked=True):
    """Random (G_hat, Psi) pair with a block-like mask and diagonal Psi."""
    zeta = rng.exponential(1.0, (M, K)) * 10 ** rng.uniform(-1, 1, (M, K))
    g = np.sqrt(zeta) * complex_normal((M, K), rng)
    if masked:
        ap = np.arange(M) % K
        mask = ap[:, None] == np.arange(K)[None, :]
        return np.where(mask, g, 0), np.diag(np.sum(np.where(mask, 0, zeta), axis=1))
    return g, np.diag(rng.exponential(1.0, M))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
