"""Item orderings and the ternary rating series built from them.

Items are ranked by rating deviation (RD), novelty (N) or popularity (P).  A
user's series walks the ranked items and emits +1 on entering a run of rated
items, -1 on entering a run of unrated items, and alternates with 0 inside a
run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import ItemStats, RatingMatrix

KINDS = ("rd", "p", "n")
KIND_NAMES = {"rd": "rating_deviation", "p": "popularity", "n": "novelty"}


@dataclass(frozen=True)
class ItemOrdering:
    kind: str
    items: tuple[str, ...]
    score: np.ndarray
    order: np.ndarray  # column indices into ``items``, highest score first

    @classmethod
    def from_scores(cls, kind: str, items, score) -> "ItemOrdering":
        score = np.asarray(score, dtype=np.float64)
        # items are sorted, so a stable sort on -score breaks ties by id
        order = np.argsort(-score, kind="stable")
        return cls(kind, tuple(items), score, order)

    def ranked_items(self) -> list[str]:
        return [self.items[k] for k in self.order]

    def scores(self) -> dict[str, float]:
        return dict(zip(self.items, self.score.tolist()))


@dataclass(frozen=True)
class RatingSeries:
    user: str
    kind: str
    values: np.ndarray


def compute_rdoi(m: RatingMatrix, stats: ItemStats) -> ItemOrdering:
    """Mean absolute deviation of each item's ratings from the item mean."""
    dev = np.where(m.mask, np.abs(m.values - stats.mean), 0.0).sum(axis=0)
    count = m.mask.sum(axis=0)
    score = np.divide(dev, count, out=np.zeros_like(dev), where=count > 0)
    return ItemOrdering.from_scores("rd", m.items, score)


def compute_poi(stats: ItemStats) -> ItemOrdering:
    return ItemOrdering.from_scores("p", stats.items, stats.count.astype(np.float64))


def jaccard_similarity(m: RatingMatrix, i: str, j: str) -> float:
    a = m.mask[:, m.item_index[i]]
    b = m.mask[:, m.item_index[j]]
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def item_jaccard(mask: np.ndarray) -> sparse.csr_matrix:
    """Sparse item x item Jaccard matrix over rater sets (zero when disjoint)."""
    M = sparse.csr_matrix(mask, dtype=np.float64)
    inter = (M.T @ M).tocoo()
    n = np.asarray(mask.sum(axis=0), dtype=np.float64)
    union = n[inter.row] + n[inter.col] - inter.data
    data = inter.data / union
    return sparse.csr_matrix((data, (inter.row, inter.col)), shape=inter.shape)


def compute_noi(m: RatingMatrix) -> ItemOrdering:
    """Novelty of each item, averaged over the users who rated it.

    For a rater u of item i, novelty is the mean dissimilarity 1 - J(i, j)
    over the other items j in u's profile (0 when u rated nothing else).
    """
    mask = m.mask
    J = item_jaccard(mask)
    M = sparse.csr_matrix(mask, dtype=np.float64)
    sim_sum = np.asarray((M @ J).todense())  # [u, i] = sum_{j in P_u} J(i, j)
    profile = mask.sum(axis=1, keepdims=True).astype(np.float64)
    # drop the j == i term (J(i, i) = 1 for any rated i)
    others = profile - 1.0
    dissim = others - (sim_sum - 1.0)
    per_user = np.divide(dissim, others, out=np.zeros_like(dissim), where=(others > 0) & mask)
    count = mask.sum(axis=0)
    score = np.divide(per_user.sum(axis=0), count, out=np.zeros(m.n_items), where=count > 0)
    return ItemOrdering.from_scores("n", m.items, score)


def compute_orderings(m: RatingMatrix, stats: ItemStats) -> dict[str, ItemOrdering]:
    return {"rd": compute_rdoi(m, stats), "p": compute_poi(stats), "n": compute_noi(m)}


def series_from_pattern(rated: np.ndarray) -> np.ndarray:
    """Encode a boolean rated/unrated pattern (already in ranked order)."""
    rated = np.asarray(rated, dtype=bool)
    n = len(rated)
    if n == 0:
        return np.zeros(0, dtype=np.int8)
    sign = np.where(rated, 1, -1).astype(np.int8)
    run_start = np.ones(n, dtype=bool)
    run_start[1:] = rated[1:] != rated[:-1]
    start_pos = np.maximum.accumulate(np.where(run_start, np.arange(n), 0))
    offset = np.arange(n) - start_pos
    return np.where(offset % 2 == 0, sign, 0).astype(np.int8)


def series_matrix(m: RatingMatrix, ordering: ItemOrdering) -> np.ndarray:
    """Series for every user at once, shape (n_users, n_items)."""
    rated = m.mask[:, ordering.order]
    n_users, n = rated.shape
    if n == 0:
        return np.zeros((n_users, 0), dtype=np.int8)
    sign = np.where(rated, 1, -1).astype(np.int8)
    run_start = np.ones_like(rated)
    run_start[:, 1:] = rated[:, 1:] != rated[:, :-1]
    idx = np.broadcast_to(np.arange(n), rated.shape)
    start_pos = np.maximum.accumulate(np.where(run_start, idx, 0), axis=1)
    return np.where((idx - start_pos) % 2 == 0, sign, 0).astype(np.int8)


def build_series(m: RatingMatrix, user: str, ordering: ItemOrdering) -> RatingSeries:
    if user not in m.user_index:
        raise KeyError(f"unknown user {user!r}")
    rated = m.mask[m.user_index[user], ordering.order]
    return RatingSeries(user, ordering.kind, series_from_pattern(rated))
