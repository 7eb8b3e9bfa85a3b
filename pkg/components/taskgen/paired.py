"""
Embedding sets paired with a synthetic task, plus the nearest-pattern oracle.

Context-style sets are random projections of the class patterns, so their
inter-class correlation follows the pattern geometry. Class-name-style sets
share one base vector with a small per-class offset (delta), which makes
them highly correlated. Template-style sets sit in between.
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from components.evaluation.metrics import EvalReport, per_class_report
from components.semantics.contexts import SupervisionSource
from components.semantics.embeddings import SemanticEmbeddingSet
from errors import ContractError

from .generator import FewShotTask, TaskSpec, class_patterns

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.2
DEFAULT_JITTER = 0.3
DEFAULT_TOKENS_PER_CLASS = 6
TEMPLATE_MIX = 1.0


@dataclass
class PairedSemantics:
    context: List[SemanticEmbeddingSet]
    class_name: List[SemanticEmbeddingSet]
    template: List[SemanticEmbeddingSet]


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=-1, keepdims=True)


def paired_semantics(spec: TaskSpec, d_text: int, seed: int = 0, delta: float = DEFAULT_DELTA,
                     jitter: float = DEFAULT_JITTER,
                     tokens_per_class: int = DEFAULT_TOKENS_PER_CLASS) -> PairedSemantics:
    """
    Build context, class-name and template style embedding sets for a task spec.

    Args:
        spec: Spec of the task the sets describe
        d_text: Token dimension
        seed: Seed for projections and jitter
        delta: Per-class offset of the class-name sets
        jitter: Per-token noise of the context sets
        tokens_per_class: m of the context sets

    Returns:
        PairedSemantics with one set per class in each list
    """
    if d_text < 1 or tokens_per_class < 1 or delta < 0 or jitter < 0:
        raise ContractError(f"invalid paired semantics settings: d_text={d_text} "
                            f"tokens={tokens_per_class} delta={delta} jitter={jitter}")
    rng = np.random.default_rng(seed)
    patterns = class_patterns(spec).reshape(spec.n_classes, -1)
    projection = rng.standard_normal((patterns.shape[1], d_text))
    directions = _unit_rows(patterns @ projection)

    context = []
    for c in range(spec.n_classes):
        noise = rng.standard_normal((tokens_per_class, d_text)) / np.sqrt(d_text)
        context.append(SemanticEmbeddingSet(class_id=c, tokens=directions[c] + jitter * noise,
                                            source=SupervisionSource.CONTEXT))

    base = _unit_rows(rng.standard_normal(d_text))
    offsets = rng.standard_normal((spec.n_classes, d_text))
    offsets -= np.outer(offsets @ base, base)
    offsets = _unit_rows(offsets)
    class_name = [SemanticEmbeddingSet(class_id=c, tokens=(base + delta * offsets[c])[None, :],
                                       source=SupervisionSource.CLASS_NAME)
                  for c in range(spec.n_classes)]

    template_base = _unit_rows(rng.standard_normal(d_text))
    template = [SemanticEmbeddingSet(class_id=c, tokens=(template_base + TEMPLATE_MIX * directions[c])[None, :],
                                     source=SupervisionSource.TEMPLATE)
                for c in range(spec.n_classes)]

    return PairedSemantics(context=context, class_name=class_name, template=template)


def oracle_scores(task: FewShotTask) -> np.ndarray:
    """Nearest-pattern scores <x, P_c> / |P_c| for every query item and class."""
    patterns = task.patterns.reshape(task.n_classes, -1)
    images = task.query_images.reshape(len(task.query_images), -1)
    return images @ (patterns / np.linalg.norm(patterns, axis=1, keepdims=True)).T


def oracle_mauc(task: FewShotTask) -> EvalReport:
    """Query mAUC of the nearest-pattern classifier (an upper reference for a task)."""
    report = per_class_report(oracle_scores(task), task.query_labels)
    logger.debug(f"Nearest-pattern oracle mAUC {report.mAUC:.4f}")
    return report
