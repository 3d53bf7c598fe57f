"""Library for the synthetic Gaussian classification benchmark.

Every class shares one anisotropic within-class covariance
``Σ = Q diag(s) Qᵀ`` with ``s`` log-spaced over ``[1, κ]`` and Q a random
rotation. Class means are drawn from ``N(0, separation² I)``. All randomness
flows from a single seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import ortho_group

from koofu.dataio import EmbeddingDataset
from koofu.errors import ValidationError
from koofu.utils import log_parameters

logger = logging.getLogger(__name__)

DEFAULT_SEED: int = 42


@dataclass(frozen=True)
class BenchmarkSettings:
    """Parameters of :func:`generate_benchmark`.

    Attributes
    ----------
    num_classes : int
        Number of classes K.
    dim : int
        Embedding dimension D.
    per_class : int
        Training samples per class.
    test_per_class : int
        Held-out samples per class.
    condition : float
        Condition number κ of the shared within-class covariance.
    separation : float
        Standard deviation of the class means.
    seed : int
        Seed of the random generator.
    """

    num_classes: int = 20
    dim: int = 64
    per_class: int = 200
    test_per_class: int = 50
    condition: float = 100.0
    separation: float = 1.75
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        """Validate ranges."""
        if self.num_classes < 1 or self.dim < 1 or self.per_class < 1 or self.test_per_class < 0:
            error_message: str = (
                f"Invalid benchmark size K={self.num_classes}, D={self.dim}, "
                f"N={self.per_class}, test N={self.test_per_class}.\nHint: sizes must be positive."
            )
            raise ValidationError(error_message)
        if self.condition < 1 or self.separation <= 0:
            error_message = (
                f"Invalid condition number {self.condition} or separation {self.separation}.\n"
                "Hint: need condition >= 1 and separation > 0."
            )
            raise ValidationError(error_message)
        if not 0 <= self.seed < 2**64:
            error_message = f"Seed {self.seed} is not a 64-bit unsigned integer."
            raise ValidationError(error_message)


def generate_benchmark(settings: BenchmarkSettings | None = None) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Draw a train and a test split from the synthetic benchmark.

    Parameters
    ----------
    settings : BenchmarkSettings, optional
        Generator parameters (default is ``BenchmarkSettings()``).

    Returns
    -------
    train : EmbeddingDataset
        ``per_class`` samples per class, rows grouped by class.
    test : EmbeddingDataset
        ``test_per_class`` samples per class, rows grouped by class.
    """
    settings = settings or BenchmarkSettings()
    log_parameters(logger, vars(settings), title="benchmark settings")
    rng: np.random.Generator = np.random.default_rng(settings.seed)

    rotation: np.ndarray = ortho_group.rvs(settings.dim, random_state=rng) if settings.dim > 1 else np.ones((1, 1))
    scales: np.ndarray = np.sqrt(np.logspace(0.0, np.log10(settings.condition), settings.dim))
    mixing: np.ndarray = rotation * scales  # noise @ mixing.T has covariance Q diag(s) Qᵀ
    means: np.ndarray = rng.normal(scale=settings.separation, size=(settings.num_classes, settings.dim))
    class_table: dict[int, str] = {class_id: f"class_{class_id:03d}" for class_id in range(settings.num_classes)}

    def draw(per_class: int) -> EmbeddingDataset:
        labels: np.ndarray = np.repeat(np.arange(settings.num_classes), per_class)
        noise: np.ndarray = rng.standard_normal((labels.size, settings.dim))
        vectors: np.ndarray = means[labels] + noise @ mixing.T
        return EmbeddingDataset.from_arrays(vectors, labels, class_table)

    train: EmbeddingDataset = draw(settings.per_class)
    test: EmbeddingDataset = draw(settings.test_per_class)
    logger.info("Generated %d train and %d test samples", train.count, test.count)
    return train, test
