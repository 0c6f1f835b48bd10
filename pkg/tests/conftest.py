import numpy as np
import pytest

from rankdescent import RankingSystem, ScoredRankingSystem


class ComparatorOnlyRanking(RankingSystem):
    """Wraps a scored system but exposes only the triplet comparator.

    Forces the generic (non-vectorized) code paths while inducing exactly
    the same total order, so the two engines can be compared bit for bit.
    """

    def __init__(self, scored: ScoredRankingSystem):
        self.scored = scored

    def compare(self, x, y, z):
        if x == y or x == z or y == z:
            raise ValueError(f"ids must be pairwise distinct, got ({x}, {y}, {z})")
        if (self.scored.score(x, y), y) < (self.scored.score(x, z), z):
            return -1
        return 1


@pytest.fixture
def comparator_only():
    return ComparatorOnlyRanking


def assert_valid_kout(friends: np.ndarray, n: int, k: int) -> None:
    """Out-degree exactly k, no self-loops, no duplicate targets, ids in range."""
    assert friends.shape == (n, k)
    assert friends.min() >= 0 and friends.max() < n
    anchors = np.arange(n)[:, None]
    assert not (friends == anchors).any(), "self-loop found"
    srt = np.sort(friends, axis=1)
    assert not (srt[:, 1:] == srt[:, :-1]).any(), "duplicate friend found"
