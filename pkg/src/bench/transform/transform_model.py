"""Library for the TransformModel class.

It contains the direct-formula model used to verify the transforms: the
inverse square root from a plain eigendecomposition and the projections from
a dense eigensolve of the whitened scatters.
"""

from __future__ import annotations

import numpy as np


class TransformModel:
    """Dense reference computations on explicit scatter matrices.

    Parameters
    ----------
    within : np.ndarray
        Within-class scatter S_w.
    between : np.ndarray
        Between-class scatter S_b.
    shrinkage : float
        Regularization λ.
    """

    def __init__(self, within: np.ndarray, between: np.ndarray, shrinkage: float) -> None:
        """Initialize the model."""
        self.within: np.ndarray = np.asarray(within, dtype=np.float64)
        self.between: np.ndarray = np.asarray(between, dtype=np.float64)
        self.shrinkage: float = shrinkage

    @property
    def regularized(self) -> np.ndarray:
        """Return ``S_w + λI``."""
        return self.within + self.shrinkage * np.eye(self.within.shape[0])

    def whitener(self) -> np.ndarray:
        """Return ``(S_w + λI)^{-1/2}`` from ``numpy.linalg.eigh``."""
        eigenvalues, eigenvectors = np.linalg.eigh(self.regularized)
        return eigenvectors @ np.diag(eigenvalues**-0.5) @ eigenvectors.T

    def gammas(self) -> np.ndarray:
        """Return the whitened between-class eigenvalues in descending order."""
        whitener: np.ndarray = self.whitener()
        return np.sort(np.linalg.eigvalsh(whitener @ self.between @ whitener))[::-1]

    def between_directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Return the eigenpairs of S_b, eigenvalues descending."""
        eigenvalues, eigenvectors = np.linalg.eigh(self.between)
        return eigenvalues[::-1], eigenvectors[:, ::-1]

    @staticmethod
    def off_diagonal_ratio(matrix: np.ndarray) -> float:
        """Return the off-diagonal Frobenius mass relative to the trace."""
        off: np.ndarray = matrix - np.diag(np.diag(matrix))
        return float(np.linalg.norm(off) / max(abs(float(np.trace(matrix))), 1e-300))

    @staticmethod
    def parallel(u: np.ndarray, v: np.ndarray) -> float:
        """Return ``|cos|`` of the angle between two vectors."""
        return float(abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)))
