"""Testbench for the transform module.

Checks the whitening, the Koo-Fu and LDA fits and the application path
against the dense TransformModel.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import numpy as np
import pytest
from transform_model import TransformModel

# Add the directory containing the bench_utils.py file to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent.resolve()))

from bench_utils import (
    INSTANCE_SHAPES,
    format_state,
    make_rng,
    random_dataset,
    random_spd,
    random_stats,
    relative_frobenius,
    stats_with_scatter,
)

from koofu.dataio import EmbeddingDataset
from koofu.errors import (
    DimensionMismatchError,
    NonPositiveEigenvalueError,
    RankExceededError,
    ShapeError,
    TooFewClassesError,
    ValidationError,
)
from koofu.stats import ScatterStats, accumulate
from koofu.transform import (
    KooFuTransform,
    apply,
    check_invariants,
    fit_koofu,
    fit_lda,
    inverse_sqrt_psd,
    lambda_floor,
)


def two_class_stats() -> ScatterStats:
    """Class A = {(0,0),(2,0)}, class B = {(0,1),(0,3)}: S_w = 2I, S_b = [[1,-2],[-2,4]]."""
    dataset = EmbeddingDataset.from_arrays(np.array([[0, 0], [2, 0], [0, 1], [0, 3]]), [0, 0, 1, 1])
    return accumulate(ScatterStats.empty(2, 2), dataset)


#
# Whitening
#


def test_inverse_sqrt_diagonal() -> None:
    """diag(3, 8) with λ = 1 gives diag(1/2, 1/3)."""
    np.testing.assert_allclose(inverse_sqrt_psd(np.diag([3.0, 8.0]), 1.0), np.diag([0.5, 1 / 3]), atol=1e-12)


def test_inverse_sqrt_identity_small_shrinkage() -> None:
    """The identity with a vanishing λ stays the identity."""
    np.testing.assert_allclose(inverse_sqrt_psd(np.eye(2), 1e-12), np.eye(2), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_whitening_identity(seed: int) -> None:
    """Z (M + λI) Z = I within 1e-8 relative, and Z is exactly symmetric."""
    rng: np.random.Generator = make_rng(seed)
    dim: int = [6, 8, 32, 64][seed % 4]
    matrix: np.ndarray = random_spd(rng, dim)
    shrinkage: float = 0.1
    whitener: np.ndarray = inverse_sqrt_psd(matrix, shrinkage)
    product: np.ndarray = whitener @ (matrix + shrinkage * np.eye(dim)) @ whitener
    assert relative_frobenius(product, np.eye(dim)) <= 1e-8
    np.testing.assert_array_equal(whitener, whitener.T)
    model = TransformModel(matrix, np.zeros_like(matrix), shrinkage)
    assert relative_frobenius(whitener, model.whitener()) <= 1e-8


def test_inverse_sqrt_rejects_bad_shrinkage() -> None:
    """λ must be positive."""
    with pytest.raises(ValidationError):
        inverse_sqrt_psd(np.eye(2), 0.0)


def test_inverse_sqrt_reports_floor() -> None:
    """An indefinite matrix fails and names the smallest usable λ."""
    with pytest.raises(NonPositiveEigenvalueError) as excinfo:
        inverse_sqrt_psd(np.diag([-1.0, 1.0]), 0.5)
    assert excinfo.value.min_eig == pytest.approx(-0.5)
    assert excinfo.value.suggested_lambda == pytest.approx(1.1)
    inverse_sqrt_psd(np.diag([-1.0, 1.0]), excinfo.value.suggested_lambda)


def test_lambda_floor_rank_deficient() -> None:
    """Fewer samples than dimensions need a positive floor, which then suffices."""
    stats: ScatterStats = random_stats(make_rng(4), 16, 3, per_class=2)
    floor: float = lambda_floor(stats)
    assert floor > 0
    fit_koofu(stats, floor)
    with pytest.raises(NonPositiveEigenvalueError) as excinfo:
        fit_koofu(stats, floor / 100)
    assert excinfo.value.suggested_lambda == pytest.approx(floor, rel=1e-6)


def test_lambda_floor_full_rank() -> None:
    """Well-conditioned statistics accept every positive λ."""
    assert lambda_floor(random_stats(make_rng(4), 8, 3, per_class=50)) == 0.0


#
# Koo-Fu fit
#


def test_fit_without_within_scatter() -> None:
    """With S_w = 0 and λ = 1, Z = I and the rotation diagonalizes S_b itself."""
    rng: np.random.Generator = make_rng(6)
    means: np.ndarray = rng.normal(size=(4, 3))
    stats: ScatterStats = stats_with_scatter(means, np.ones(4), np.zeros((3, 3)))
    transform: KooFuTransform = fit_koofu(stats, 1.0)
    np.testing.assert_allclose(transform.whitener, np.eye(3), atol=1e-10)

    eigenvalues, eigenvectors = TransformModel(stats.within_scatter(), stats.between_scatter(), 1.0).between_directions()
    np.testing.assert_allclose(transform.gammas, eigenvalues, rtol=1e-8, atol=1e-10)
    for column in range(3):
        assert TransformModel.parallel(transform.rotation[:, column], eigenvectors[:, column]) == pytest.approx(1.0)


def test_fit_two_class_direction() -> None:
    """The only discriminant direction of the two-class example is (1,-2)/√5 up to sign."""
    transform: KooFuTransform = fit_koofu(two_class_stats(), 1e-9, 1)
    assert transform.out_dim == 1
    np.testing.assert_allclose(transform.rotation[:, 0], np.array([-1.0, 2.0]) / np.sqrt(5.0), atol=1e-8)
    assert transform.gammas[0] == pytest.approx(5.0 / 2.0, rel=1e-8)


@pytest.mark.parametrize(("dim", "num_classes"), INSTANCE_SHAPES)
def test_simultaneous_diagonalization(dim: int, num_classes: int) -> None:
    """With L = D, T (S_w + λI) Tᵀ = I and T S_b Tᵀ is diagonal."""
    stats: ScatterStats = random_stats(make_rng(dim * num_classes), dim, num_classes)
    shrinkage: float = 1.0
    transform: KooFuTransform = fit_koofu(stats, shrinkage)
    model = TransformModel(stats.within_scatter(), stats.between_scatter(), shrinkage)

    projection: np.ndarray = transform.projection
    whitened_within: np.ndarray = projection @ model.regularized @ projection.T
    whitened_between: np.ndarray = projection @ model.between @ projection.T
    state: str = format_state({"gammas": transform.gammas, "diag": np.diag(whitened_between)})
    assert relative_frobenius(whitened_within, np.eye(dim)) <= 1e-6, state
    assert TransformModel.off_diagonal_ratio(whitened_between) <= 1e-6, state
    np.testing.assert_allclose(np.diag(whitened_between), transform.gammas, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(transform.gammas, model.gammas(), rtol=1e-6, atol=1e-9)


def test_fit_invariants() -> None:
    """Fitted transforms pass every invariant and follow the sign convention."""
    transform: KooFuTransform = fit_koofu(random_stats(make_rng(9), 12, 5), 0.5)
    assert check_invariants(transform) == []
    assert np.all(np.diff(transform.gammas) <= 0)
    assert transform.gammas[4:].max() <= 1e-8 * transform.gammas[0]
    np.testing.assert_allclose(transform.projection, transform.rotation.T @ transform.whitener, atol=1e-10)
    pivots: np.ndarray = np.argmax(np.abs(transform.rotation), axis=0)
    assert np.all(transform.rotation[pivots, np.arange(transform.out_dim)] > 0)


def test_fit_is_deterministic() -> None:
    """Two fits of the same statistics are bitwise equal."""
    stats: ScatterStats = random_stats(make_rng(10), 10, 4)
    first: KooFuTransform = fit_koofu(stats, 2.0)
    second: KooFuTransform = fit_koofu(stats, 2.0)
    np.testing.assert_array_equal(first.projection, second.projection)
    assert first.fingerprint() == second.fingerprint()


def test_truncate_matches_fit() -> None:
    """Truncating the full fit equals fitting with the smaller L."""
    stats: ScatterStats = random_stats(make_rng(12), 10, 4)
    full: KooFuTransform = fit_koofu(stats, 1.0)
    truncated: KooFuTransform = full.truncate(3)
    direct: KooFuTransform = fit_koofu(stats, 1.0, 3)
    np.testing.assert_array_equal(truncated.rotation, direct.rotation)
    np.testing.assert_array_equal(truncated.gammas, direct.gammas)
    np.testing.assert_allclose(truncated.projection, direct.projection, atol=1e-12)
    assert truncated.fingerprint() != full.fingerprint()
    with pytest.raises(ShapeError):
        full.truncate(11)


def test_scale_covariance() -> None:
    """Scaling inputs by c and λ by c² leaves the renormalized outputs unchanged."""
    rng: np.random.Generator = make_rng(13)
    dataset: EmbeddingDataset = random_dataset(rng, num_classes=5, dim=8, per_class=30)
    stats: ScatterStats = accumulate(ScatterStats.empty(8, 5), dataset)
    scale: float = 3.0
    scaled_stats = ScatterStats(
        counts=stats.counts,
        class_sums=stats.class_sums * scale,
        second_moment=stats.second_moment * scale**2,
    )
    # Only the K-1 directions above the zero eigenvalues are unique
    transform: KooFuTransform = fit_koofu(stats, 2.0, 4)
    scaled: KooFuTransform = fit_koofu(scaled_stats, 2.0 * scale**2, 4)
    np.testing.assert_allclose(scaled.projection, transform.projection / scale, atol=1e-8)

    vectors: np.ndarray = dataset.vectors.astype(np.float64)
    np.testing.assert_allclose(
        apply(scaled, vectors * scale, renormalize=True),
        apply(transform, vectors, renormalize=True),
        atol=1e-5,
    )


def test_class_permutation_invariance() -> None:
    """Relabeling the classes leaves the spectrum and the whitened between-class scatter unchanged."""
    stats: ScatterStats = random_stats(make_rng(14), 9, 6)
    order: np.ndarray = make_rng(15).permutation(6)
    permuted = ScatterStats(
        counts=stats.counts[order],
        class_sums=stats.class_sums[order],
        second_moment=stats.second_moment,
    )
    transform: KooFuTransform = fit_koofu(stats, 1.0)
    relabeled: KooFuTransform = fit_koofu(permuted, 1.0)
    atol: float = 1e-9 * float(transform.gammas[0])
    np.testing.assert_allclose(relabeled.gammas, transform.gammas, rtol=1e-9, atol=atol)
    between: np.ndarray = stats.between_scatter()
    np.testing.assert_allclose(
        relabeled.projection @ between @ relabeled.projection.T,
        transform.projection @ between @ transform.projection.T,
        atol=1e-7 * float(transform.gammas[0]),
    )


@pytest.mark.parametrize("out_dim", [0, 11, "half"])
def test_fit_rejects_bad_out_dim(out_dim: int | str) -> None:
    """L must lie in 1..D or be 'full'."""
    with pytest.raises(ShapeError):
        fit_koofu(random_stats(make_rng(1), 10, 3), 1.0, out_dim)


def test_fit_needs_two_classes() -> None:
    """A single non-empty class cannot be discriminated."""
    dataset = EmbeddingDataset.from_arrays(np.array([[1.0, 2.0], [3.0, 1.0]]), [0, 0], num_classes=3)
    with pytest.raises(TooFewClassesError):
        fit_koofu(accumulate(ScatterStats.empty(2, 3), dataset), 1.0)


def test_fit_skips_empty_classes(caplog: pytest.LogCaptureFixture) -> None:
    """Empty classes are left out with a warning and change nothing."""
    dataset = EmbeddingDataset.from_arrays(np.array([[0, 0], [2, 0], [0, 1], [0, 3]]), [0, 0, 2, 2])
    stats: ScatterStats = accumulate(ScatterStats.empty(2, 3), dataset)
    with caplog.at_level(logging.WARNING, logger="koofu.transform"):
        transform: KooFuTransform = fit_koofu(stats, 1.0)
    assert "Skipping 1 empty classes" in caplog.text
    np.testing.assert_allclose(transform.projection, fit_koofu(two_class_stats(), 1.0).projection, atol=1e-12)


def test_uniform_weighting_changes_unbalanced_fit() -> None:
    """Uniform class weights differ from count weights only when sizes differ."""
    means: np.ndarray = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
    balanced: ScatterStats = stats_with_scatter(means, np.array([5, 5, 5]), np.eye(2))
    np.testing.assert_allclose(
        fit_koofu(balanced, 1.0, weighting="uniform").gammas,
        fit_koofu(balanced, 1.0).gammas,
        rtol=1e-10,
    )
    unbalanced: ScatterStats = stats_with_scatter(means, np.array([50, 5, 5]), np.eye(2))
    assert not np.allclose(fit_koofu(unbalanced, 1.0, weighting="uniform").gammas, fit_koofu(unbalanced, 1.0).gammas)


def test_check_invariants_flags_unsorted_gammas() -> None:
    """Out-of-order gammas are reported."""
    transform = KooFuTransform(
        shrinkage=1.0,
        mean=np.zeros(2),
        whitener=np.eye(2),
        rotation=np.eye(2),
        gammas=np.array([1.0, 2.0]),
    )
    assert any("non-increasing" in violation for violation in check_invariants(transform))


#
# LDA
#


def test_lda_spherical_within() -> None:
    """With S_w = σ²I the LDA directions are the eigenvectors of S_b."""
    rng: np.random.Generator = make_rng(14)
    means: np.ndarray = rng.normal(scale=2.0, size=(4, 5))
    stats: ScatterStats = stats_with_scatter(means, np.full(4, 10), 3.0 * np.eye(5))
    lda = fit_lda(stats, 0.0, 3)
    _, eigenvectors = TransformModel(stats.within_scatter(), stats.between_scatter(), 0.0).between_directions()
    for row in range(3):
        assert TransformModel.parallel(lda.projection[row], eigenvectors[:, row]) == pytest.approx(1.0)
    assert np.all(np.diff(lda.eigenvalues) <= 0)


def test_lda_rank_bound() -> None:
    """Two classes give exactly one direction."""
    lda = fit_lda(two_class_stats(), 0.0, 1)
    assert lda.out_dim == 1
    assert lda.eigenvalues[0] > 1e-9
    with pytest.raises(RankExceededError):
        fit_lda(two_class_stats(), 0.0, 2)


@pytest.mark.parametrize(("dim", "num_classes"), [(8, 3), (16, 5), (32, 10)])
@pytest.mark.parametrize("seed", [31, 32, 33, 34])
def test_lda_generalized_residual(seed: int, dim: int, num_classes: int) -> None:
    """Every LDA direction solves S_b v = γ (S_w + λI) v within 1e-8 relative."""
    stats: ScatterStats = random_stats(make_rng(seed), dim, num_classes)
    shrinkage: float = 0.5
    lda = fit_lda(stats, shrinkage, num_classes - 1)
    between: np.ndarray = stats.between_scatter()
    regularized: np.ndarray = stats.within_scatter() + shrinkage * np.eye(dim)
    for direction, gamma in zip(lda.projection, lda.eigenvalues, strict=True):
        lhs: np.ndarray = between @ direction
        residual: float = float(np.linalg.norm(lhs - gamma * (regularized @ direction)))
        assert residual <= 1e-8 * np.linalg.norm(lhs), format_state({"gamma": gamma, "residual": residual})


#
# Application
#


def test_apply_centers() -> None:
    """The global mean maps to the zero vector."""
    stats: ScatterStats = random_stats(make_rng(15), 6, 3)
    transform: KooFuTransform = fit_koofu(stats, 1.0)
    mapped: np.ndarray = apply(transform, stats.global_mean()[None, :])
    assert mapped.dtype == np.float32
    np.testing.assert_allclose(mapped, np.zeros((1, 6)), atol=1e-5)


def test_apply_identity() -> None:
    """The identity transform returns its input."""
    vectors: np.ndarray = make_rng(16).standard_normal((5, 4)).astype(np.float32)
    np.testing.assert_array_equal(apply(KooFuTransform.identity(4), vectors), vectors)


def test_apply_batch_equals_rows() -> None:
    """Every row of a batch maps exactly like the row on its own."""
    rng: np.random.Generator = make_rng(17)
    dataset: EmbeddingDataset = random_dataset(rng, num_classes=4, dim=8, per_class=5)
    transform: KooFuTransform = fit_koofu(accumulate(ScatterStats.empty(8, 4), dataset), 1.0, 5)
    batch: np.ndarray = apply(transform, dataset.vectors)
    for row in range(dataset.count):
        np.testing.assert_array_equal(batch[row], apply(transform, dataset.vectors[row])[0])


def test_apply_renormalize(caplog: pytest.LogCaptureFixture) -> None:
    """Renormalized rows have unit norm; the zero row stays zero with a warning."""
    stats: ScatterStats = random_stats(make_rng(18), 6, 3)
    transform: KooFuTransform = fit_koofu(stats, 1.0)
    vectors: np.ndarray = np.vstack([stats.global_mean(), make_rng(19).standard_normal((4, 6))])
    with caplog.at_level(logging.WARNING, logger="koofu.transform"):
        mapped: np.ndarray = apply(transform, vectors, renormalize=True)
    np.testing.assert_allclose(np.linalg.norm(mapped[1:], axis=1), 1.0, rtol=1e-6)
    np.testing.assert_allclose(mapped[0], 0.0, atol=1e-5)
    assert "1 transformed rows are zero" in caplog.text


def test_apply_dimension_mismatch() -> None:
    """Vectors must have the transform's input dimension."""
    with pytest.raises(DimensionMismatchError):
        apply(KooFuTransform.identity(4), np.zeros((2, 3)))
