import numpy as np
import pytest

from evsurrogate import circuits as C
from evsurrogate import dataset as D


@pytest.fixture(scope="session")
def lif_spec():
    return C.lif_neuron_spec()


@pytest.fixture(scope="session")
def xbar_spec():
    # four inputs keep the tests quick; the default row has 32
    return C.crossbar_row_spec(k=4)


@pytest.fixture(scope="session")
def lif_ds(lif_spec):
    ev = D.characterize_events(lif_spec, 24, 40, 0.8, seed=11)
    return D.build_dataset(ev, 5, lif_spec)


@pytest.fixture(scope="session")
def xbar_ds(xbar_spec):
    ev = D.characterize_events(xbar_spec, 24, 30, 0.8, seed=12)
    return D.build_dataset(ev, 5, xbar_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
