import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, k, cond_floor=0.5):
    q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    return q @ np.diag(rng.uniform(cond_floor, 3.0, size=k)) @ q.T


def random_psd(rng, k, rank=None):
    f = rng.normal(size=(k, rank or k))
    return f @ f.T


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, title: str, passed: bool, detail: str) -> None:
    """Record one acceptance verdict; the lines are printed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
