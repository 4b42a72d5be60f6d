import functools

import pytest

from zetachaos.primes import build_prime_table


@functools.lru_cache(maxsize=None)
def _table(n):
    return build_prime_table(n)


@pytest.fixture(scope="session")
def table_small():
    return _table(100_000)


@pytest.fixture(scope="session")
def table_1e6():
    return _table(1_000_000)


@pytest.fixture(scope="session")
def table_1e7():
    return _table(10_000_000)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request, pytestconfig):
    return pytestconfig.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
