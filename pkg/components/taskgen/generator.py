"""
Taskgen Component - Synthetic Few-Shot Tasks
Seeded multi-label image tasks whose class patterns are horizontal row bands,
optionally blended with a shared field to make classes overlap.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Tuple

import numpy as np

from config import raise_if_invalid, validate_config_dict, validate_positive, validate_probability
from errors import ConfigError

logger = logging.getLogger(__name__)

CLASS_NAMES = (
    "nodule", "effusion", "pneumonia", "mass", "fibrosis", "edema", "atelectasis",
    "cardiomegaly", "emphysema", "pneumothorax", "consolidation", "calcification",
    "fracture", "tuberculosis", "scoliosis", "infiltration", "thickening", "hernia", "opacity",
)

PRESETS: Dict[str, Dict[str, Any]] = {
    "easy": {"n_classes": 5, "k_shot": 5, "query_size": 200, "image_size": 32,
             "noise_std": 0.1, "pattern_overlap": 0.0, "multilabel_prob": 0.1},
    "hard": {"n_classes": 5, "k_shot": 5, "query_size": 200, "image_size": 32,
             "noise_std": 0.5, "pattern_overlap": 0.5, "multilabel_prob": 0.1},
}


@dataclass(frozen=True)
class TaskSpec:
    """Parameters of a synthetic N-way K-shot task."""

    n_classes: int = 5
    k_shot: int = 5
    query_size: int = 200
    image_size: int = 32
    channels: int = 1
    noise_std: float = 0.1
    pattern_overlap: float = 0.0
    multilabel_prob: float = 0.1
    seed: int = 0

    def validate(self, name: str = "task") -> List[str]:
        violations = []
        for key in ("n_classes", "k_shot", "query_size", "image_size", "channels"):
            violations += validate_positive(getattr(self, key), f"{name}.{key}", integer=True)
        violations += validate_positive(self.noise_std, f"{name}.noise_std", allow_zero=True)
        violations += validate_probability(self.pattern_overlap, f"{name}.pattern_overlap")
        violations += validate_probability(self.multilabel_prob, f"{name}.multilabel_prob")
        violations += validate_positive(self.seed, f"{name}.seed", integer=True, allow_zero=True)
        if not violations and self.image_size < self.n_classes:
            violations.append(f"{name}.image_size: {self.image_size} rows cannot hold "
                              f"{self.n_classes} disjoint class bands")
        return violations

    @property
    def support_size(self) -> int:
        return self.n_classes * self.k_shot

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "task") -> "TaskSpec":
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        spec = cls(**data)
        raise_if_invalid(spec.validate(name))
        return spec


def preset_spec(preset: str, seed: int = 0, **overrides: Any) -> TaskSpec:
    """
    Build a TaskSpec from a named preset.

    Raises:
        ConfigError: For an unknown preset or invalid overrides
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(sorted(PRESETS))})")
    values = {**PRESETS[preset], "seed": seed}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TaskSpec.from_dict(values)


def class_names(n_classes: int) -> Tuple[str, ...]:
    names = []
    for c in range(n_classes):
        base = CLASS_NAMES[c % len(CLASS_NAMES)]
        names.append(base if c < len(CLASS_NAMES) else f"{base}_{c // len(CLASS_NAMES)}")
    return tuple(names)


@dataclass(frozen=True, eq=False)
class FewShotTask:
    """Support set S and query set Q of multi-label images (labels are uint8 0/1)."""

    spec: TaskSpec
    class_names: Tuple[str, ...]
    patterns: np.ndarray
    support_images: np.ndarray
    support_labels: np.ndarray
    query_images: np.ndarray
    query_labels: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.spec.n_classes

    @property
    def k_shot(self) -> int:
        return self.spec.k_shot

    @property
    def support_ids(self) -> np.ndarray:
        return np.arange(len(self.support_images))

    @property
    def query_ids(self) -> np.ndarray:
        start = len(self.support_images)
        return np.arange(start, start + len(self.query_images))

    @property
    def support(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.support_images, self.support_labels))

    @property
    def query(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.query_images, self.query_labels))

    def summary(self) -> str:
        return f"N={self.n_classes} K={self.k_shot} query={len(self.query_images)}"

    def equals(self, other: "FewShotTask") -> bool:
        """Exact equality of spec, names and every array."""
        arrays = ("patterns", "support_images", "support_labels", "query_images", "query_labels")
        return (self.spec == other.spec and self.class_names == other.class_names
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))


def _streams(seed: int) -> Tuple[np.random.Generator, ...]:
    # patterns, labels, noise
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def band_edges(image_size: int, n_classes: int) -> np.ndarray:
    """Row boundaries splitting the image into n_classes contiguous bands."""
    return np.round(np.linspace(0, image_size, n_classes + 1)).astype(int)


def class_patterns(spec: TaskSpec) -> np.ndarray:
    """
    Pattern P_c = (1 - overlap) * band_c + overlap * shared, shape (C, ch, h, w).

    Bands are disjoint, so with zero overlap the patterns are orthogonal. The
    shared field is mirror-symmetric left to right, like the bands.
    """
    rng, _, _ = _streams(spec.seed)
    c, h = spec.channels, spec.image_size
    edges = band_edges(h, spec.n_classes)
    order = rng.permutation(spec.n_classes)
    shared = rng.random((c, h, h))
    shared = (shared + shared[..., ::-1]) / 2.0

    patterns = np.zeros((spec.n_classes, c, h, h))
    for cls_idx in range(spec.n_classes):
        band = order[cls_idx]
        patterns[cls_idx, :, edges[band]:edges[band + 1], :] = 1.0
    if spec.pattern_overlap > 0:
        patterns = (1.0 - spec.pattern_overlap) * patterns + spec.pattern_overlap * shared
    return patterns


def _sample_labels(rng: np.random.Generator, primary: np.ndarray, n_classes: int, prob: float) -> np.ndarray:
    extras = rng.random((len(primary), n_classes)) < prob
    labels = extras.astype(np.uint8)
    labels[np.arange(len(primary)), primary] = 1
    return labels


def _render(patterns: np.ndarray, labels: np.ndarray, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    clean = np.tensordot(labels.astype(np.float64), patterns, axes=(1, 0))
    noise = rng.standard_normal(clean.shape)
    return clean + noise_std * noise if noise_std > 0 else clean


def generate_task(spec: TaskSpec) -> FewShotTask:
    """
    Generate a task deterministically from its spec.

    Every class is the primary label of exactly K support items; extra
    classes switch on independently with probability multilabel_prob. Query
    items draw a uniform primary class plus extras.

    Raises:
        ConfigError: If the task spec is infeasible
    """
    raise_if_invalid(spec.validate())
    _, label_rng, noise_rng = _streams(spec.seed)
    patterns = class_patterns(spec)

    support_primary = np.repeat(np.arange(spec.n_classes), spec.k_shot)
    support_labels = _sample_labels(label_rng, support_primary, spec.n_classes, spec.multilabel_prob)
    query_primary = label_rng.integers(0, spec.n_classes, size=spec.query_size)
    query_labels = _sample_labels(label_rng, query_primary, spec.n_classes, spec.multilabel_prob)

    task = FewShotTask(
        spec=spec,
        class_names=class_names(spec.n_classes),
        patterns=patterns,
        support_images=_render(patterns, support_labels, spec.noise_std, noise_rng),
        support_labels=support_labels,
        query_images=_render(patterns, query_labels, spec.noise_std, noise_rng),
        query_labels=query_labels,
    )
    logger.info(f"Generated task {task.summary()} (seed {spec.seed})")
    return task
