"""Library for the ClassifyModel class.

It contains the brute-force model used to verify the classifiers: one score
per (query, row) pair in plain Python loops, ties resolved by sorting tuples.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np


class ClassifyModel:
    """Brute-force prototypes, rankings and neighbor votes.

    Parameters
    ----------
    metric : {"cosine", "euclidean"}
        Similarity used for ranking.
    """

    def __init__(self, metric: str = "cosine") -> None:
        """Initialize the model."""
        self.metric: str = metric

    def distance(self, query: np.ndarray, row: np.ndarray) -> float:
        """Return a value where smaller means closer."""
        if self.metric == "cosine":
            return -float(np.dot(query, row))
        return float(np.sqrt(np.sum((query - row) ** 2)))

    def distances(self, query: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Return :meth:`distance` from ``query`` to every row."""
        rows = np.asarray(rows, dtype=np.float64)
        if self.metric == "cosine":
            return -(rows @ query)
        return np.sqrt(np.sum((rows - query) ** 2, axis=1))

    @staticmethod
    def prototypes(vectors: np.ndarray, labels: np.ndarray, *, normalize: bool = True) -> dict[int, np.ndarray]:
        """Return the (normalized) mean of every class present in ``labels``."""
        members: dict[int, list[np.ndarray]] = defaultdict(list)
        for x, label in zip(np.asarray(vectors, dtype=np.float64), labels, strict=True):
            members[int(label)].append(x)
        result: dict[int, np.ndarray] = {}
        for label, rows in sorted(members.items()):
            mean: np.ndarray = np.sum(rows, axis=0) / len(rows)
            result[label] = mean / np.linalg.norm(mean) if normalize else mean
        return result

    def rank(self, query: np.ndarray, prototypes: dict[int, np.ndarray], top_k: int) -> list[int]:
        """Return the ``top_k`` closest class ids, ties to the lower id."""
        scored: list[tuple[float, int]] = [(self.distance(query, row), label) for label, row in prototypes.items()]
        return [label for _, label in sorted(scored)[:top_k]]

    def knn(self, query: np.ndarray, vectors: np.ndarray, labels: np.ndarray, k: int) -> int:
        """Return the plurality label of the k nearest rows.

        Neighbor ties go to the lower row index. Vote ties go to the label with
        the smaller summed distance (larger summed similarity), then the lower
        class id.
        """
        scored: list[tuple[float, int]] = [(float(d), index) for index, d in enumerate(self.distances(query, vectors))]
        nearest: list[tuple[float, int]] = sorted(scored)[:k]
        votes: dict[int, int] = defaultdict(int)
        weights: dict[int, float] = defaultdict(float)
        for distance, index in nearest:
            label: int = int(labels[index])
            votes[label] += 1
            weights[label] += distance
        return min(votes, key=lambda label: (-votes[label], weights[label], label))
