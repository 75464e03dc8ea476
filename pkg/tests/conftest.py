import itertools
from pathlib import Path

import numpy as np
import pytest

from permexp.perm import Permutation

REPO_ROOT = Path(__file__).resolve().parents[1]
LOTTERY_CSV = REPO_ROOT / "data" / "draft_lottery_1970.csv"


@pytest.fixture(scope="session")
def lottery_path() -> Path:
    assert LOTTERY_CSV.exists(), "bundled lottery dataset missing"
    return LOTTERY_CSV


@pytest.fixture(scope="session")
def lottery():
    from permexp.io import load_lottery_csv

    return load_lottery_csv(LOTTERY_CSV)


def random_permutation(rng: np.random.Generator, n: int) -> Permutation:
    return Permutation(rng.permutation(n) + 1)


def inversions_quadratic(pi: Permutation) -> int:
    """O(n^2) direct pair count, the oracle for the fast path."""
    v = pi.values
    return int(np.triu(v[:, None] > v[None, :], k=1).sum())


def all_perms(n: int):
    return [Permutation(p) for p in itertools.permutations(range(1, n + 1))]


def empirical_law(draw_tuples, states: list) -> np.ndarray:
    """Empirical distribution over an explicit state list."""
    index = {s: i for i, s in enumerate(states)}
    counts = np.zeros(len(states))
    for t in draw_tuples:
        counts[index[t]] += 1
    return counts / counts.sum()


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
