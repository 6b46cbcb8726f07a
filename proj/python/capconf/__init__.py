"""Conformal outlier detection for contrastive image/caption embeddings.

All numerics run in the C++ extension; these re-exports are the whole API.
"""

from ._core import (
    CapconfError,
    __version__,
    build_label_query,
    decide,
    generate,
    knnd,
    p_value,
    pairwise_si,
    roc_auc,
    split_rows,
    threshold_at,
    zeroshot_scores,
)

__all__ = [
    "CapconfError",
    "__version__",
    "build_label_query",
    "decide",
    "generate",
    "knnd",
    "p_value",
    "pairwise_si",
    "roc_auc",
    "split_rows",
    "threshold_at",
    "zeroshot_scores",
]
