import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from greywave.data import RatingMatrix  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_matrix(rng: np.random.Generator, n_users=8, n_items=10, density=0.4) -> RatingMatrix:
    ratings = {}
    for u in range(n_users):
        for i in range(n_items):
            if rng.random() < density:
                ratings[(f"u{u}", f"i{i}")] = int(rng.integers(1, 11))
    # keep every user and item present
    for u in range(n_users):
        ratings.setdefault((f"u{u}", f"i{u % n_items}"), int(rng.integers(1, 11)))
    return RatingMatrix(ratings, items=[f"i{i}" for i in range(n_items)])


@pytest.fixture
def toy() -> RatingMatrix:
    return RatingMatrix(
        {
            ("a", "x"): 2, ("b", "x"): 4, ("c", "x"): 6,
            ("a", "y"): 5, ("b", "y"): 5,
            ("c", "z"): 9,
        }
    )
