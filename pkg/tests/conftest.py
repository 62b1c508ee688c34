import numpy as np
import pytest

from tsspl.posterior import POSITION_ATOL, Direction, QueryPoint

# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def enumerate_posterior(doors, levels, prior, history):
    """Reference joint posterior by direct enumeration, one cell at a time.

    ``history`` is a list of ``(query_position, Direction)`` pairs.  Every
    cell's likelihood is rebuilt from scratch as a product of scalars, so
    this shares no code path with the incremental update.
    """
    doors = list(map(float, doors))
    levels = list(map(float, levels))
    out = np.zeros((len(doors), len(levels)))
    for i, d in enumerate(doors):
        for j, t in enumerate(levels):
            lik = 1.0
            for x, answer in history:
                if abs(d - x) <= POSITION_ATOL:
                    p_left = 0.5
                elif d < x:
                    p_left = t
                else:
                    p_left = 1.0 - t
                lik *= p_left if answer is Direction.LEFT else 1.0 - p_left
            out[i, j] = lik * prior[i, j]
    return out / out.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_history(rng, positions, n):
    hist = []
    for _ in range(n):
        x = float(rng.choice(positions))
        a = Direction.LEFT if rng.random() < 0.5 else Direction.RIGHT
        hist.append((x, a))
    return hist


def as_query(x):
    return QueryPoint(float(x))
