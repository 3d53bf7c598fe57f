"""Library for the EvaluateModel class.

It contains the counting model of the accuracy metrics, one row at a time
with Python sets.
"""

from __future__ import annotations

import numpy as np


class EvaluateModel:
    """Row-by-row top-k and multi-label accuracy."""

    @staticmethod
    def topk(ranked: np.ndarray, gt: np.ndarray, k: int) -> tuple[int, int]:
        """Return (correct, total) of the top-k accuracy."""
        correct: int = 0
        for row, label in zip(ranked, gt, strict=True):
            if int(label) in {int(entry) for entry in row[:k]}:
                correct += 1
        return correct, len(gt)

    @staticmethod
    def real(ranked: np.ndarray, entries: dict[int, frozenset[int]], k: int) -> tuple[int, int]:
        """Return (correct, total) of the multi-label accuracy over rows with entries."""
        correct: int = 0
        total: int = 0
        for index, row in enumerate(ranked):
            if index not in entries:
                continue
            total += 1
            if {int(entry) for entry in row[:k]} & entries[index]:
                correct += 1
        return correct, total
