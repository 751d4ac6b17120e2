"""Node selection rules for the per-round transmission request.

All selectors take the candidate pool (nodes that have not transmitted yet),
return an ordered list of distinct node ids, never exceed the pool, and break
score ties toward the lowest node index so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AcquiredSet",
    "select_random",
    "select_magnitude",
    "select_oracle",
    "select_corr_normalized",
]


@dataclass(frozen=True)
class AcquiredSet:
    """Bookkeeping for which nodes have already delivered a reading."""

    num_nodes: int
    acquired: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.acquired and not all(0 <= k < self.num_nodes for k in self.acquired):
            raise ValueError("acquired ids out of range")

    @property
    def candidates(self) -> np.ndarray:
        """Sorted complement of the acquired set."""
        mask = np.ones(self.num_nodes, dtype=bool)
        if self.acquired:
            mask[sorted(self.acquired)] = False
        return np.flatnonzero(mask)

    def union(self, node_ids) -> "AcquiredSet":
        return AcquiredSet(self.num_nodes, self.acquired | {int(k) for k in node_ids})


def _as_pool(candidates) -> np.ndarray:
    pool = np.asarray(sorted(int(k) for k in candidates), dtype=np.int64)
    if pool.size and np.unique(pool).size != pool.size:
        raise ValueError("candidates must be distinct")
    return pool


def _top_by_score(scores: np.ndarray, pool: np.ndarray, count: int) -> list[int]:
    # stable order: score descending, node index ascending
    order = np.lexsort((pool, -scores))
    return [int(k) for k in pool[order[:count]]]


def select_random(candidates, count: int, rng: np.random.Generator) -> list[int]:
    """Uniform subset of the pool, at most ``count`` nodes."""
    pool = _as_pool(candidates)
    take = min(count, pool.size)
    if take == 0:
        return []
    return [int(k) for k in rng.choice(pool, size=take, replace=False)]


def select_magnitude(reading_estimate: np.ndarray, candidates, count: int) -> list[int]:
    """Largest |v_hat_k|^2 first."""
    pool = _as_pool(candidates)
    est = np.asarray(reading_estimate, dtype=float)
    return _top_by_score(est[pool] ** 2, pool, min(count, pool.size))


def select_oracle(readings: np.ndarray, candidates, count: int) -> list[int]:
    """Genie baseline: largest true |v_k|^2 first."""
    return select_magnitude(readings, candidates, count)


def select_corr_normalized(
    coeff_estimate: np.ndarray,
    basis: np.ndarray,
    acquired,
    candidates,
    count: int,
    eps: float = 1e-12,
) -> list[int]:
    """Greedy pick by estimated strength over worst-case basis overlap.

    Candidate k scores |b_k^T s_hat|^2 / max_j (b_k^T b_j)^2 over every j in
    the running acquired set, with the denominator floored at ``eps``. Each
    pick joins the acquired set before the next one, so a batch spreads out
    instead of clustering on nearly collinear measurement vectors. With an
    empty acquired set (nothing collected yet) this falls back to the plain
    magnitude rule on B^T s_hat.
    """
    pool = _as_pool(candidates)
    take = min(count, pool.size)
    if take == 0:
        return []
    coeff_estimate = np.asarray(coeff_estimate, dtype=float)
    acq = np.asarray(sorted(int(k) for k in acquired), dtype=np.int64)
    if acq.size == 0:
        return select_magnitude(basis.T @ coeff_estimate, pool, take)

    cand_vecs = basis[:, pool]
    strength = (cand_vecs.T @ coeff_estimate) ** 2
    overlap = (cand_vecs.T @ basis[:, acq]) ** 2
    worst = overlap.max(axis=1)

    picks: list[int] = []
    alive = np.ones(pool.size, dtype=bool)
    for _ in range(take):
        scores = strength / np.maximum(worst, eps)
        scores[~alive] = -np.inf
        best = int(np.argmax(scores))  # first hit wins, pool is sorted
        picks.append(int(pool[best]))
        alive[best] = False
        worst = np.maximum(worst, (cand_vecs.T @ basis[:, pool[best]]) ** 2)
    return picks
