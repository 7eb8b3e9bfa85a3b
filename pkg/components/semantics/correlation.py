"""
Inter-class correlation of semantic embedding sets.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from errors import ContractError, NumericError

from .embeddings import SemanticEmbeddingSet, check_consistent

logger = logging.getLogger(__name__)


def class_means(sets: Sequence[SemanticEmbeddingSet]) -> np.ndarray:
    """Unit-length mean of each class's unit tokens, one row per class."""
    rows = []
    for s in sets:
        mean = s.normalized().mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise NumericError(f"class {s.class_id}: mean token vector is zero")
        rows.append(mean / norm)
    return np.stack(rows)


def correlation_matrix(sets: Sequence[SemanticEmbeddingSet]) -> np.ndarray:
    """
    Cosine similarity between renormalized per-class mean token vectors.

    Returns:
        Symmetric C x C matrix with an exact unit diagonal

    Raises:
        ContractError: With fewer than two classes
        NumericError: If a class mean vector is zero
    """
    if len(sets) < 2:
        raise ContractError(f"correlation needs at least 2 classes, got {len(sets)}")
    check_consistent(sets)
    means = class_means(sets)
    matrix = means @ means.T
    matrix = np.clip((matrix + matrix.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return matrix


def mean_offdiag(matrix: np.ndarray) -> float:
    """Arithmetic mean of the strictly off-diagonal entries."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ContractError(f"mean_offdiag needs a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    if n < 2:
        raise ContractError("mean_offdiag is undefined for a 1x1 matrix")
    mask = ~np.eye(n, dtype=bool)
    return float(matrix[mask].mean())


def format_matrix(matrix: np.ndarray, labels: Optional[Sequence[str]] = None, digits: int = 3) -> str:
    """Plain-text grid with row and column labels."""
    n = matrix.shape[0]
    labels = [str(l) for l in (labels or range(n))]
    width = max(digits + 3, max(len(l) for l in labels))
    lines = [" " * width + " " + " ".join(l.rjust(width) for l in labels)]
    for label, row in zip(labels, matrix):
        lines.append(label.rjust(width) + " " + " ".join(f"{v:.{digits}f}".rjust(width) for v in row))
    return "\n".join(lines)


def matrix_csv(matrix: np.ndarray, labels: Sequence[str]) -> str:
    lines = ["," + ",".join(labels)]
    for label, row in zip(labels, matrix):
        lines.append(label + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines)


def source_label(sets: Sequence[SemanticEmbeddingSet]) -> str:
    """The shared source of the sets, or 'mixed'."""
    sources: List[str] = sorted({s.source.value for s in sets})
    return sources[0] if len(sources) == 1 else "mixed"
