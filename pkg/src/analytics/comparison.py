import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd
from sklearn.metrics import jaccard_score
from sklearn.preprocessing import MultiLabelBinarizer

from bias.metrics import RankedList
from exceptions import ConfigError, UnknownHandleError
from utils import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class SimilarityMatrix:
    names: tuple[str, ...]
    values: np.ndarray
    row_mean: np.ndarray
    row_std: np.ndarray
    k: int

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError as e:
            raise UnknownHandleError(f"unknown demography '{name}'") from e

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.names), columns=list(self.names))


def _check_k(k: int) -> None:
    if k < 1:
        raise ConfigError(f"K must be positive, got {k}")


def missing_ranks(list_a: RankedList, list_b: RankedList, k: int) -> int:
    """How many of A's top-K occupations have no rank in B."""
    return sum(1 for o in list_a.top(k) if list_b.rank_of(o) is None)


def rank_deviation(list_a: RankedList, list_b: RankedList, k: int) -> float:
    """Mean of 1/rank_A(o) - 1/rank_B(o) over A's top-K occupations.

    Positive when B ranks A's top items lower. An occupation absent from B gets
    rank |B| + 1.
    """
    _check_k(k)
    top = list_a.top(k)
    if not top:
        return 0.0
    if k > len(list_a):
        logger.debug("rank deviation: K=%d exceeds list length %d", k, len(list_a))
    fallback = len(list_b) + 1
    missing = 0
    terms = []
    for occupation in top:
        r_b = list_b.rank_of(occupation)
        if r_b is None:
            missing += 1
            r_b = fallback
        terms.append(1.0 / list_a.rank_of(occupation) - 1.0 / r_b)
    if missing:
        logger.warning("rank deviation: %d of top-%d occupations missing from the second list", missing, k)
    return math.fsum(terms) / len(terms)


def effective_k(list_a: RankedList, list_b: RankedList, k: int) -> int:
    return min(k, len(list_a), len(list_b))


def jaccard_at_k(list_a: RankedList, list_b: RankedList, k: int) -> float:
    """|topK(A) & topK(B)| / |topK(A) | topK(B)|; shorter lists contribute all they have."""
    _check_k(k)
    top_a, top_b = list_a.top(k), list_b.top(k)
    if not top_a and not top_b:
        return 1.0
    binary = MultiLabelBinarizer().fit_transform([top_a, top_b])
    return float(jaccard_score(binary[0], binary[1], zero_division=1.0))


def cross_demography_matrix(lists: Mapping[str, RankedList], k: int) -> SimilarityMatrix:
    """Pairwise Jaccard@K between demographies with per-row mean and std off the diagonal."""
    names = tuple(lists)
    if len(names) < 2:
        raise ConfigError("cross-demography comparison needs at least two demographies")
    n = len(names)
    values = np.eye(n)
    for i, j in combinations(range(n), 2):
        values[i, j] = values[j, i] = jaccard_at_k(lists[names[i]], lists[names[j]], k)
    off_diagonal = ~np.eye(n, dtype=bool)
    rows = [values[i][off_diagonal[i]] for i in range(n)]
    return SimilarityMatrix(
        names=names,
        values=values,
        row_mean=np.array([row.mean() for row in rows]),
        row_std=np.array([row.std() for row in rows]),
        k=k,
    )


def top_similar(matrix: SimilarityMatrix, demography: str, n: int) -> list[str]:
    """The n demographies most similar to `demography`, descending, ties by name."""
    i = matrix.index_of(demography)
    others = [(matrix.values[i, j], name) for j, name in enumerate(matrix.names) if j != i]
    if n >= len(matrix.names):
        logger.warning("top_similar: n=%d with only %d other demographies", n, len(others))
    others.sort(key=lambda item: (-item[0], item[1]))
    return [name for _, name in others[:n]]


def most_similar_pairs(matrix: SimilarityMatrix, n: int = 1) -> list[tuple[str, str, float]]:
    pairs = [
        (matrix.names[i], matrix.names[j], float(matrix.values[i, j]))
        for i, j in combinations(range(len(matrix.names)), 2)
    ]
    pairs.sort(key=lambda item: (-item[2], item[0], item[1]))
    return pairs[:n]


def algorithm_overlap(
    lists_by_model: Mapping[str, RankedList], k_values: Sequence[int]
) -> dict[tuple[str, str, int], float]:
    """Jaccard@K for every pair of models ranking the same demography and direction."""
    return {
        (a, b, k): jaccard_at_k(lists_by_model[a], lists_by_model[b], k)
        for a, b in combinations(list(lists_by_model), 2)
        for k in k_values
    }
