"""Hungarian matching against exhaustive search."""

import itertools

import numpy as np
import pytest

from clipdet.matching import MatchingError, hungarian_match


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Minimum total over all injective gt -> query assignments."""
    n_gt, n_q = cost.shape
    perms = np.array(list(itertools.permutations(range(n_q), n_gt)))
    totals = cost[np.arange(n_gt)[None, :], perms].sum(axis=1)
    return float(totals.min())


class TestHungarian:
    def test_single_cell(self):
        result = hungarian_match([[5.0]])
        assert result.assignment == ((0, 0),)
        assert result.total_cost == 5.0

    def test_diagonal_dominant(self):
        result = hungarian_match([[0.0, 9.0], [9.0, 0.0]])
        assert result.assignment == ((0, 0), (1, 1))
        assert result.total_cost == 0.0

    def test_anti_diagonal(self):
        result = hungarian_match([[9.0, 0.0], [0.0, 9.0]])
        assert result.assignment == ((0, 1), (1, 0))
        assert result.total_cost == 0.0

    def test_200_random_matrices_match_exhaustive_search(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n_gt = int(rng.integers(1, 8))
            n_q = int(rng.integers(n_gt, 9))
            cost = rng.normal(size=(n_gt, n_q)) * 10
            result = hungarian_match(cost)
            # injective and complete
            gts = [g for g, _ in result.assignment]
            queries = [q for _, q in result.assignment]
            assert gts == list(range(n_gt))
            assert len(set(queries)) == n_gt
            # cost consistency and exact optimality
            total = sum(cost[g, q] for g, q in result.assignment)
            assert result.total_cost == total
            assert result.total_cost == brute_force_min_cost(cost)

    def test_more_gt_than_queries_rejected(self):
        with pytest.raises(MatchingError):
            hungarian_match(np.zeros((3, 2)))

    def test_non_finite_rejected(self):
        with pytest.raises(MatchingError):
            hungarian_match([[np.inf, 1.0]])

    def test_rectangular_prefers_cheap_queries(self):
        cost = np.array([[5.0, 1.0, 3.0]])
        result = hungarian_match(cost)
        assert result.assignment == ((0, 1),)
