"""Exact minimum-cost assignment of ground-truth objects to query slots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    """Injective map from ground-truth indices to query indices."""

    assignment: tuple[tuple[int, int], ...]  # (gt_index, query_index), sorted by gt
    total_cost: float

    def query_for(self, gt_index: int) -> int:
        for g, q in self.assignment:
            if g == gt_index:
                return q
        raise KeyError(gt_index)

    @property
    def matched_queries(self) -> set[int]:
        return {q for _, q in self.assignment}


def hungarian_match(cost) -> MatchResult:
    """Solve the rectangular assignment problem exactly.

    ``cost`` is an ``n_gt x n_queries`` matrix with ``n_gt <= n_queries``;
    every ground truth is assigned to a distinct query minimizing the total.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise MatchingError(f"cost matrix must be 2-D, got shape {cost.shape}")
    n_gt, n_q = cost.shape
    if n_gt > n_q:
        raise MatchingError(f"{n_gt} ground truths exceed {n_q} query slots")
    if not np.all(np.isfinite(cost)):
        raise MatchingError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted((int(g), int(q)) for g, q in zip(rows, cols)))
    return MatchResult(assignment=pairs, total_cost=float(cost[rows, cols].sum()))
