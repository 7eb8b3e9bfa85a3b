"""
Helper functions for the Semantics component.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from constants import DEFAULT_TEMPLATE, format_float

from .contexts import ClassContext, SupervisionSource, build_template_context, class_name_context
from .correlation import correlation_matrix, format_matrix, matrix_csv, mean_offdiag, source_label
from .embeddings import SemanticEmbeddingSet, load_embeddings

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingAnalysis:
    path: Path
    source: str
    class_ids: List[int]
    matrix: np.ndarray
    mean_offdiag: float

    @property
    def labels(self) -> List[str]:
        return [str(c) for c in self.class_ids]

    def grid(self) -> str:
        return format_matrix(self.matrix, self.labels)

    def csv(self) -> str:
        return matrix_csv(self.matrix, self.labels)


def analyze_sets(path: Path, sets: Sequence[SemanticEmbeddingSet]) -> EmbeddingAnalysis:
    matrix = correlation_matrix(sets)
    return EmbeddingAnalysis(path=Path(path), source=source_label(sets), class_ids=[s.class_id for s in sets],
                             matrix=matrix, mean_offdiag=mean_offdiag(matrix))


def analyze_files(paths: Sequence[str]) -> List[EmbeddingAnalysis]:
    """Correlation matrix and mean off-diagonal similarity of each embedding file."""
    results = []
    for path in paths:
        analysis = analyze_sets(Path(path), load_embeddings(path))
        logger.info(f"{path}: {analysis.source} sets, mean off-diagonal {analysis.mean_offdiag:.4f}")
        results.append(analysis)
    return results


def comparison_table(results: Sequence[EmbeddingAnalysis]) -> str:
    lines = [f"{'source':<12} {'classes':>7} {'mean_offdiag':>12}  file"]
    for r in results:
        lines.append(f"{r.source:<12} {len(r.class_ids):>7} {r.mean_offdiag:>12.4f}  {r.path}")
    return "\n".join(lines)


def comparison_csv(results: Sequence[EmbeddingAnalysis]) -> str:
    lines = ["file,source,classes,mean_offdiag"]
    lines += [f"{r.path},{r.source},{len(r.class_ids)},{format_float(r.mean_offdiag)}" for r in results]
    return "\n".join(lines)


def ordering_line(results: Sequence[EmbeddingAnalysis]) -> str:
    """Sources from least to most inter-class correlated, e.g. 'context (0.120) < class_name (0.950)'."""
    ranked = sorted(results, key=lambda r: r.mean_offdiag)
    return " < ".join(f"{r.source} ({r.mean_offdiag:.3f})" for r in ranked)


def convert_contexts(contexts: Sequence[ClassContext], target: Optional[str],
                     template: str = DEFAULT_TEMPLATE) -> List[ClassContext]:
    """Rebuild contexts as template or class-name supervision from their class names."""
    if target is None or target == SupervisionSource.CONTEXT.value:
        return list(contexts)
    if target == SupervisionSource.TEMPLATE.value:
        return [build_template_context(c.class_id, c.class_name, template) for c in contexts]
    return [class_name_context(c.class_id, c.class_name) for c in contexts]
