"""Koo-Fu whitening of embedding spaces for nearest-prototype and k-NN classification."""

from koofu.classify import (
    KnnResult,
    NeighborIndex,
    PrototypeBank,
    build_index,
    build_prototypes,
    knn_classify,
    nvp_classify,
)
from koofu.dataio import EmbeddingDataset, MultiLabelGroundTruth
from koofu.errors import KoofuError
from koofu.stats import ScatterStats, accumulate, merge
from koofu.transform import KooFuTransform, LdaTransform, apply, fit_koofu, fit_lda

__all__ = [
    "EmbeddingDataset",
    "KnnResult",
    "KooFuTransform",
    "KoofuError",
    "LdaTransform",
    "MultiLabelGroundTruth",
    "NeighborIndex",
    "PrototypeBank",
    "ScatterStats",
    "accumulate",
    "apply",
    "build_index",
    "build_prototypes",
    "fit_koofu",
    "fit_lda",
    "knn_classify",
    "merge",
    "nvp_classify",
]
