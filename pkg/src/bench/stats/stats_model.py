"""Library for the StatsModel class.

It contains the naive model used to verify the scatter statistics: per-class
double loops over the samples, evaluated straight from the definitions.
"""

from __future__ import annotations

import numpy as np


class StatsModel:
    """Naive scatter matrices of a labeled sample set.

    Parameters
    ----------
    vectors : np.ndarray
        N×D samples.
    labels : np.ndarray
        N class ids.
    """

    def __init__(self, vectors: np.ndarray, labels: np.ndarray) -> None:
        """Initialize the model."""
        self.vectors: np.ndarray = np.asarray(vectors, dtype=np.float64)
        self.labels: np.ndarray = np.asarray(labels, dtype=np.int64)
        self.dim: int = self.vectors.shape[1]

    def classes(self) -> list[int]:
        """Return the non-empty class ids in ascending order."""
        return sorted({int(label) for label in self.labels})

    def class_mean(self, class_id: int) -> np.ndarray:
        """Return the mean of one class."""
        members: list[np.ndarray] = [x for x, label in zip(self.vectors, self.labels, strict=True) if label == class_id]
        total: np.ndarray = np.zeros(self.dim)
        for x in members:
            total += x
        return total / len(members)

    def global_mean(self) -> np.ndarray:
        """Return the mean of all samples."""
        total: np.ndarray = np.zeros(self.dim)
        for x in self.vectors:
            total += x
        return total / len(self.vectors)

    def within_scatter(self) -> np.ndarray:
        """Return ``Σ_k Σ_{i in k} (x_i - μ_k)(x_i - μ_k)ᵀ``."""
        scatter: np.ndarray = np.zeros((self.dim, self.dim))
        means: dict[int, np.ndarray] = {class_id: self.class_mean(class_id) for class_id in self.classes()}
        for x, label in zip(self.vectors, self.labels, strict=True):
            deviation: np.ndarray = x - means[int(label)]
            scatter += np.outer(deviation, deviation)
        return scatter

    def between_scatter(self) -> np.ndarray:
        """Return ``Σ_k N_k (μ_k - μ)(μ_k - μ)ᵀ``."""
        mean: np.ndarray = self.global_mean()
        scatter: np.ndarray = np.zeros((self.dim, self.dim))
        for class_id in self.classes():
            count: int = int(np.sum(self.labels == class_id))
            deviation: np.ndarray = self.class_mean(class_id) - mean
            scatter += count * np.outer(deviation, deviation)
        return scatter

    def total_scatter(self) -> np.ndarray:
        """Return ``Σ_i (x_i - μ)(x_i - μ)ᵀ``."""
        mean: np.ndarray = self.global_mean()
        scatter: np.ndarray = np.zeros((self.dim, self.dim))
        for x in self.vectors:
            scatter += np.outer(x - mean, x - mean)
        return scatter
