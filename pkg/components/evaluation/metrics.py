"""
Evaluation Component - Ranking Metrics
Per-class ROC AUC (Mann-Whitney, ties count one half) and mean AUC reports.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from constants import format_table_float
from errors import DegenerateClassError, DimensionError, EvaluationError, InputError

logger = logging.getLogger(__name__)

SKIP_POLICY = "classes with only positive or only negative query labels are skipped and excluded from mAUC"


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Probability that a random positive outranks a random negative (ties 1/2).

    Computed from average ranks: U = R+ - n+(n+ + 1)/2, AUC = U / (n+ n-).

    Raises:
        DegenerateClassError: If labels are all positive or all negative
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DimensionError(f"roc_auc: {scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise InputError("roc_auc: labels must be 0 or 1")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError(f"roc_auc needs both classes, got {n_pos} positive and {n_neg} negative")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ClassAUC:
    class_id: int
    auc: Optional[float]
    reason: Optional[str] = None
    name: Optional[str] = None

    @property
    def skipped(self) -> bool:
        return self.auc is None


@dataclass
class EvalReport:
    """Per-class AUCs and their mean over the non-skipped classes."""

    per_class: List[ClassAUC]
    mAUC: float
    n_query: int
    head: Optional[str] = None
    config: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def skipped_classes(self) -> List[ClassAUC]:
        return [c for c in self.per_class if c.skipped]

    @property
    def per_class_auc(self) -> List[Any]:
        return [(c.class_id, "skipped" if c.skipped else c.auc) for c in self.per_class]

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "mAUC": self.mAUC,
            "n_query": self.n_query,
            "per_class_auc": [
                {"class_id": c.class_id, "name": c.name, "auc": "skipped" if c.skipped else c.auc}
                for c in self.per_class
            ],
            "skipped_classes": [{"class_id": c.class_id, "reason": c.reason} for c in self.skipped_classes],
            "skip_policy": SKIP_POLICY,
            "head": self.head,
            "config": self.config,
        }
        data.update(self.extra)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"{'class':>6}  {'name':<16} {'AUC':>8}"]
        for c in self.per_class:
            value = "skipped" if c.skipped else format_table_float(c.auc)
            lines.append(f"{c.class_id:>6}  {(c.name or ''):<16} {value:>8}")
        lines.append(f"mAUC {format_table_float(self.mAUC)} over {len(self.per_class) - len(self.skipped_classes)}"
                     f"/{len(self.per_class)} classes, {self.n_query} query items")
        for c in self.skipped_classes:
            lines.append(f"skipped class {c.class_id}: {c.reason}")
        return "\n".join(lines)


def per_class_report(scores: np.ndarray, labels: np.ndarray, class_names: Optional[Sequence[str]] = None,
                     head: Optional[str] = None) -> EvalReport:
    """
    AUC per column of a (n_items, n_classes) score matrix.

    Raises:
        EvaluationError: If there are no items or every class is degenerate
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise DimensionError(f"scores {scores.shape} and labels {labels.shape} must be equal (n, C) matrices")
    if scores.shape[0] == 0:
        raise EvaluationError("query set is empty")

    per_class = []
    for c in range(scores.shape[1]):
        name = class_names[c] if class_names else None
        try:
            per_class.append(ClassAUC(c, roc_auc(scores[:, c], labels[:, c]), name=name))
        except DegenerateClassError as e:
            per_class.append(ClassAUC(c, None, reason=str(e), name=name))
            logger.warning(f"Skipping class {c} in mAUC: {e}")

    aucs = [c.auc for c in per_class if not c.skipped]
    if not aucs:
        raise EvaluationError("every class is degenerate in the query set; mAUC is undefined")
    return EvalReport(per_class=per_class, mAUC=float(np.mean(aucs)), n_query=scores.shape[0], head=head)


def mean_auc(model: Any, images: np.ndarray, labels: np.ndarray,
             class_names: Optional[Sequence[str]] = None) -> EvalReport:
    """
    Evaluate a model on labeled query images.

    Scores are the model's pre-sigmoid logits over all tokens; AUC is
    unchanged by the monotone sigmoid, and logits avoid saturation ties.
    """
    if len(images) == 0:
        raise EvaluationError("query set is empty")
    return per_class_report(model.predict_logits(images), labels, class_names, head=getattr(model, "kind", None))
