"""Library for fitting and applying discriminative whitening transforms.

The regularized Koo-Fu transform whitens the within-class scatter,
``Z = (S_w + λI)^{-1/2}``, then rotates onto the eigenvectors of the whitened
between-class scatter and keeps the top L of them. The precomposed projection
``T = U_Lᵀ Z`` acts on centered embeddings, ``f(x) = T (x - μ)``.

The classic LDA baseline solves the generalized problem
``S_b w = γ (S_w + λI) w`` directly.

All fitting runs in float64; :func:`apply` takes float32 input, computes in
float64 and returns float32.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.linalg

from koofu.errors import (
    NonPositiveEigenvalueError,
    RankExceededError,
    ShapeError,
    TooFewClassesError,
    ValidationError,
)
from koofu.utils import check_dim, normalize_rows, round_up_significant

if TYPE_CHECKING:
    from koofu.stats import ScatterStats

logger = logging.getLogger(__name__)

EIGEN_FLOOR_RATIO: float = 1e-10

Weighting = Literal["count", "uniform"]


@dataclass(frozen=True)
class KooFuTransform:
    """A fitted Koo-Fu projection.

    Attributes
    ----------
    shrinkage : float
        Regularization λ added to the within-class scatter.
    mean : np.ndarray
        Global mean μ, shape (D,).
    whitener : np.ndarray
        Symmetric whitening matrix Z, shape (D, D).
    rotation : np.ndarray
        Orthonormal columns U_L, shape (D, L).
    gammas : np.ndarray
        Whitened between-class eigenvalues, non-increasing, shape (L,).
    projection : np.ndarray
        Derived ``U_Lᵀ Z``, shape (L, D).
    """

    shrinkage: float
    mean: np.ndarray
    whitener: np.ndarray
    rotation: np.ndarray
    gammas: np.ndarray
    projection: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Check shapes and derive the projection."""
        dim: int = self.mean.shape[0]
        if self.whitener.shape != (dim, dim) or self.rotation.ndim != 2 or self.rotation.shape[0] != dim:
            error_message: str = (
                f"Inconsistent transform shapes: mean {self.mean.shape}, whitener {self.whitener.shape}, "
                f"rotation {self.rotation.shape}."
            )
            raise ShapeError(error_message)
        if self.gammas.shape != (self.rotation.shape[1],):
            error_message = f"Expected {self.rotation.shape[1]} gammas, got shape {self.gammas.shape}."
            raise ShapeError(error_message)
        if not self.shrinkage > 0:
            error_message = f"Shrinkage must be positive, got {self.shrinkage}."
            raise ValidationError(error_message)
        object.__setattr__(self, "projection", self.rotation.T @ self.whitener)

    @property
    def dim(self) -> int:
        """Input dimension D."""
        return int(self.mean.shape[0])

    @property
    def out_dim(self) -> int:
        """Output dimension L."""
        return int(self.rotation.shape[1])

    @classmethod
    def identity(cls, dim: int) -> KooFuTransform:
        """Return the transform with ``μ = 0``, ``Z = I`` and ``U = I``.

        Parameters
        ----------
        dim : int
            Dimension D.

        Returns
        -------
        KooFuTransform
            A transform whose :func:`apply` returns its input.
        """
        return cls(
            shrinkage=1.0,
            mean=np.zeros(dim),
            whitener=np.eye(dim),
            rotation=np.eye(dim),
            gammas=np.zeros(dim),
        )

    def truncate(self, out_dim: int) -> KooFuTransform:
        """Keep the first ``out_dim`` discriminant directions.

        Parameters
        ----------
        out_dim : int
            Number of directions to keep, ``1 <= out_dim <= self.out_dim``.

        Returns
        -------
        KooFuTransform
            The truncated transform, sharing the same eigendecomposition.
        """
        if not 1 <= out_dim <= self.out_dim:
            error_message: str = (
                f"Cannot truncate a transform with L={self.out_dim} to {out_dim} directions.\n"
                f"Hint: choose 1 <= L <= {self.out_dim}."
            )
            raise ShapeError(error_message)
        return KooFuTransform(
            shrinkage=self.shrinkage,
            mean=self.mean,
            whitener=self.whitener,
            rotation=self.rotation[:, :out_dim],
            gammas=self.gammas[:out_dim],
        )

    def fingerprint(self) -> str:
        """Short content hash identifying this transform in banks and reports."""
        digest = hashlib.sha256()
        digest.update(np.float64(self.shrinkage).tobytes())
        for array in (self.mean, self.whitener, self.rotation, self.gammas):
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class LdaTransform:
    """A fitted classic LDA projection.

    Attributes
    ----------
    shrinkage : float
        Regularization λ added to the within-class scatter (may be 0).
    mean : np.ndarray
        Global mean μ used for centering, shape (D,).
    projection : np.ndarray
        Generalized eigenvectors as rows, shape (L, D).
    eigenvalues : np.ndarray
        Generalized eigenvalues, non-increasing, shape (L,).
    """

    shrinkage: float
    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray

    @property
    def dim(self) -> int:
        """Input dimension D."""
        return int(self.mean.shape[0])

    @property
    def out_dim(self) -> int:
        """Output dimension L."""
        return int(self.projection.shape[0])

    def fingerprint(self) -> str:
        """Short content hash identifying this transform in banks and reports."""
        digest = hashlib.sha256(b"lda")
        digest.update(np.float64(self.shrinkage).tobytes())
        for array in (self.mean, self.projection, self.eigenvalues):
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()[:16]


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each largest-magnitude component is positive (lowest index on ties)."""
    pivots: np.ndarray = np.argmax(np.abs(vectors), axis=0)
    signs: np.ndarray = np.where(vectors[pivots, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return vectors * signs


def _floor_for(eigenvalues: np.ndarray) -> float:
    """Smallest λ for which ``min(w) + λ`` clears the positivity threshold."""
    bound: float = (EIGEN_FLOOR_RATIO * float(eigenvalues[-1]) - float(eigenvalues[0])) / (1.0 - EIGEN_FLOOR_RATIO)
    return round_up_significant(bound) if bound > 0 else 0.0


def _check_positive(eigenvalues: np.ndarray, shrinkage: float) -> None:
    """Raise unless every eigenvalue of ``M + λI`` clears the floor (``eigenvalues`` ascending)."""
    threshold: float = EIGEN_FLOOR_RATIO * (float(eigenvalues[-1]) + shrinkage)
    min_eig: float = float(eigenvalues[0]) + shrinkage
    if min_eig <= threshold:
        raise NonPositiveEigenvalueError(min_eig=min_eig, threshold=threshold, suggested_lambda=_floor_for(eigenvalues))


def inverse_sqrt_psd(matrix: np.ndarray, shrinkage: float) -> np.ndarray:
    """Compute ``(matrix + λI)^{-1/2}`` of a symmetric matrix.

    Parameters
    ----------
    matrix : np.ndarray
        Symmetric D×D matrix; averaged with its transpose before decomposition.
    shrinkage : float
        Positive regularization λ.

    Returns
    -------
    np.ndarray
        Symmetric D×D matrix Z with ``Z (matrix + λI) Z = I``.

    Raises
    ------
    ValidationError
        If ``shrinkage <= 0``.
    NonPositiveEigenvalueError
        If the smallest eigenvalue of ``matrix + λI`` is at or below
        ``1e-10 · (max_eig + λ)``. The error carries the smallest λ that clears it.

    Examples
    --------
    >>> inverse_sqrt_psd(np.diag([3.0, 8.0]), 1.0).round(4)
    array([[0.5   , 0.    ],
           [0.    , 0.3333]])
    """
    if not shrinkage > 0:
        error_message: str = f"Shrinkage must be positive, got {shrinkage}.\nHint: pass lambda > 0."
        raise ValidationError(error_message)

    eigenvalues, eigenvectors = scipy.linalg.eigh(_symmetrize(np.asarray(matrix, dtype=np.float64)))
    _check_positive(eigenvalues, shrinkage)
    scale: np.ndarray = 1.0 / np.sqrt(eigenvalues + shrinkage)
    return _symmetrize((eigenvectors * scale) @ eigenvectors.T)


def lambda_floor(stats: ScatterStats) -> float:
    """Return the smallest shrinkage for which ``S_w + λI`` is usable.

    Parameters
    ----------
    stats : ScatterStats
        Accumulated statistics.

    Returns
    -------
    float
        Two-significant-digit λ, rounded up, that clears the positivity
        threshold; 0.0 when every positive λ does.
    """
    eigenvalues: np.ndarray = scipy.linalg.eigvalsh(_symmetrize(stats.within_scatter()))
    return _floor_for(eigenvalues)


def _resolve_out_dim(out_dim: int | str, dim: int) -> int:
    if out_dim == "full":
        return dim
    if isinstance(out_dim, str) or not 1 <= out_dim <= dim:
        error_message: str = f"Invalid output dimension {out_dim!r} for D={dim}.\nHint: use 1 <= L <= D or 'full'."
        raise ShapeError(error_message)
    return int(out_dim)


def _present_classes(stats: ScatterStats) -> np.ndarray:
    present: np.ndarray = np.flatnonzero(stats.counts > 0)
    if present.size < 2:
        error_message: str = (
            f"Fitting needs at least two non-empty classes, got {present.size}.\n"
            "Hint: check that the label file matches the embeddings."
        )
        raise TooFewClassesError(error_message)
    empty: int = stats.num_classes - present.size
    if empty:
        logger.warning("Skipping %d empty classes out of %d", empty, stats.num_classes)
    return present


def fit_koofu(
    stats: ScatterStats,
    shrinkage: float,
    out_dim: int | str = "full",
    *,
    weighting: Weighting = "count",
) -> KooFuTransform:
    """Fit the regularized Koo-Fu transform.

    Parameters
    ----------
    stats : ScatterStats
        Accumulated statistics with at least two non-empty classes.
    shrinkage : float
        Positive regularization λ.
    out_dim : int or "full", optional
        Number of directions L to keep (default is all D).
    weighting : {"count", "uniform"}, optional
        Class weights of the whitened between-class scatter: ``N_k`` (default)
        or equal weights.

    Returns
    -------
    KooFuTransform
        The fitted transform.

    Raises
    ------
    TooFewClassesError
        If fewer than two classes have samples.
    NonPositiveEigenvalueError
        If ``S_w + λI`` is not positive definite.
    """
    _present_classes(stats)
    dim: int = stats.dim
    out_dim = _resolve_out_dim(out_dim, dim)

    whitener: np.ndarray = inverse_sqrt_psd(stats.within_scatter(), shrinkage)
    whitened_between: np.ndarray = whitener @ stats.between_scatter(weighting) @ whitener
    gammas, rotation = scipy.linalg.eigh(_symmetrize(whitened_between))
    gammas, rotation = gammas[::-1], _fix_signs(rotation[:, ::-1])

    transform = KooFuTransform(
        shrinkage=float(shrinkage),
        mean=stats.global_mean(),
        whitener=whitener,
        rotation=rotation[:, :out_dim],
        gammas=gammas[:out_dim],
    )
    logger.info("Fitted Koo-Fu transform D=%d L=%d lambda=%g", dim, out_dim, shrinkage)
    logger.debug("Leading gammas: %s", np.array2string(gammas[: min(out_dim, 8)], precision=4))
    return transform


def fit_lda(stats: ScatterStats, shrinkage: float, out_dim: int) -> LdaTransform:
    """Fit the classic LDA projection.

    Parameters
    ----------
    stats : ScatterStats
        Accumulated statistics with at least two non-empty classes.
    shrinkage : float
        Non-negative regularization λ.
    out_dim : int
        Number of directions L, at most one less than the number of non-empty
        classes.

    Returns
    -------
    LdaTransform
        Generalized eigenvectors of ``(S_b, S_w + λI)`` by descending eigenvalue.

    Raises
    ------
    RankExceededError
        If L exceeds the between-class rank bound.
    NonPositiveEigenvalueError
        If ``S_w + λI`` is not positive definite.
    """
    present: np.ndarray = _present_classes(stats)
    if shrinkage < 0:
        error_message: str = f"Shrinkage must be non-negative, got {shrinkage}."
        raise ValidationError(error_message)
    if not 1 <= out_dim <= min(present.size - 1, stats.dim):
        error_message = (
            f"Requested {out_dim} LDA directions but at most {min(present.size - 1, stats.dim)} are available "
            f"for {present.size} classes in D={stats.dim}.\nHint: LDA yields at most K-1 directions."
        )
        raise RankExceededError(error_message)

    within: np.ndarray = _symmetrize(stats.within_scatter())
    _check_positive(scipy.linalg.eigvalsh(within), shrinkage)
    regularized: np.ndarray = within + shrinkage * np.eye(stats.dim)
    eigenvalues, eigenvectors = scipy.linalg.eigh(_symmetrize(stats.between_scatter()), regularized)
    eigenvalues, eigenvectors = eigenvalues[::-1][:out_dim], _fix_signs(eigenvectors[:, ::-1][:, :out_dim])
    logger.info("Fitted LDA transform D=%d L=%d lambda=%g", stats.dim, out_dim, shrinkage)
    return LdaTransform(
        shrinkage=float(shrinkage),
        mean=stats.global_mean(),
        projection=eigenvectors.T,
        eigenvalues=eigenvalues,
    )


def apply(transform: KooFuTransform | LdaTransform, vectors: np.ndarray, *, renormalize: bool = False) -> np.ndarray:
    """Map embeddings through a fitted transform.

    Parameters
    ----------
    transform : KooFuTransform or LdaTransform
        Fitted transform.
    vectors : np.ndarray
        N×D embeddings.
    renormalize : bool, optional
        Scale each nonzero output row to unit norm (default is False).

    Returns
    -------
    np.ndarray
        N×L float32 matrix of ``T (x - μ)`` rows.
    """
    vectors = np.atleast_2d(vectors)
    check_dim(vectors.shape[1], transform.dim, what="embeddings")
    mapped: np.ndarray = (vectors.astype(np.float64) - transform.mean) @ transform.projection.T
    if renormalize:
        mapped, zero_rows = normalize_rows(mapped)
        if zero_rows:
            logger.warning("%d transformed rows are zero and were left unnormalized", zero_rows)
    return mapped.astype(np.float32)


def check_invariants(transform: KooFuTransform) -> list[str]:
    """List violated invariants of a Koo-Fu transform.

    Parameters
    ----------
    transform : KooFuTransform
        Transform to check.

    Returns
    -------
    list[str]
        One message per violation; empty when the transform is valid.
    """
    violations: list[str] = []
    gammas: np.ndarray = transform.gammas
    if gammas.size and np.any(np.diff(gammas) > 0):
        violations.append("gammas are not sorted non-increasing")
    if gammas.size and np.any(gammas < -1e-9 * max(float(gammas[0]), 1e-12)):
        violations.append(f"negative gamma {float(gammas.min()):.3g}")
    gram_error: float = float(np.linalg.norm(transform.rotation.T @ transform.rotation - np.eye(transform.out_dim)))
    if gram_error > 1e-8:
        violations.append(f"rotation columns are not orthonormal (error {gram_error:.3g})")
    asymmetry: float = float(np.linalg.norm(transform.whitener - transform.whitener.T))
    if asymmetry > 1e-10:
        violations.append(f"whitener is not symmetric (error {asymmetry:.3g})")
    if not np.isfinite(transform.projection).all():
        violations.append("projection has non-finite entries")
    return violations
