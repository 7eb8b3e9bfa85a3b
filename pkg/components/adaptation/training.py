"""
Adaptation Component - Training Loop
Fine-tunes the unfrozen part of an encoder together with an alignment head on
the support set of a few-shot task.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import raise_if_invalid, validate_choice, validate_config_dict, validate_positive
from constants import (
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETAS,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_WEIGHT_DECAY,
)
from core.tensor import backward, no_grad
from components.encoder.checkpoint import load_checkpoint, save_checkpoint
from components.encoder.encoder import Encoder
from components.evaluation.metrics import EvalReport, mean_auc
from components.semantics.alignment import HEAD_KINDS, AlignmentHeadConfig, SemanticHead
from components.semantics.embeddings import SemanticEmbeddingSet
from components.taskgen.generator import FewShotTask
from errors import ConfigError, FormatError, TaskError
from utils import PathLike

from .augment import AugmentConfig, augment, eval_transform
from .optim import AdamW, bce_loss

logger = logging.getLogger(__name__)

ENCODER_PARAM_PREFIX = "encoder/"
HEAD_PARAM_PREFIX = "head/"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and augmentation settings for one adaptation run."""

    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    betas: Tuple[float, float] = DEFAULT_BETAS
    adam_eps: float = DEFAULT_ADAM_EPS
    seed: int = 0
    head: str = "semantic"
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    eval_every_epoch: bool = False

    def validate(self, name: str = "train", allow_zero_lr: bool = False) -> List[str]:
        violations = validate_positive(self.epochs, f"{name}.epochs", integer=True)
        violations += validate_positive(self.batch_size, f"{name}.batch_size", integer=True)
        violations += validate_positive(self.learning_rate, f"{name}.learning_rate", allow_zero=allow_zero_lr)
        violations += validate_positive(self.weight_decay, f"{name}.weight_decay", allow_zero=True)
        violations += validate_positive(self.adam_eps, f"{name}.adam_eps")
        violations += validate_choice(self.head, HEAD_KINDS, f"{name}.head")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            violations.append(f"{name}.seed: must be a non-negative integer, got {self.seed!r}")
        if (not isinstance(self.betas, tuple) or len(self.betas) != 2
                or not all(isinstance(b, (int, float)) and 0.0 <= b < 1.0 for b in self.betas)):
            violations.append(f"{name}.betas: must be two numbers in [0, 1), got {self.betas!r}")
        if not isinstance(self.eval_every_epoch, bool):
            violations.append(f"{name}.eval_every_epoch: must be a boolean")
        violations += self.augmentation.validate(name=f"{name}.augmentation")
        return violations

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["betas"] = list(self.betas)
        data["augmentation"] = self.augmentation.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "train") -> "TrainConfig":
        """
        Build a validated config; nested augmentation settings are merged over the defaults.

        Raises:
            ConfigError: Listing unknown keys and every violated constraint
        """
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        values = dict(data)
        violations = []
        if "augmentation" in values:
            aug = values["augmentation"] or {}
            violations += validate_config_dict(aug, [f.name for f in fields(AugmentConfig)], f"{name}.augmentation")
            if not violations:
                values["augmentation"] = AugmentConfig(**aug)
        if isinstance(values.get("betas"), list):
            values["betas"] = tuple(values["betas"])
        raise_if_invalid(violations)
        config = cls(**values)
        raise_if_invalid(config.validate(name))
        return config


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    mAUC_on_query: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"epoch": self.epoch, "mean_loss": self.mean_loss}
        if self.mAUC_on_query is not None:
            data["mAUC_on_query"] = self.mAUC_on_query
        return data


@dataclass
class TrainHistory:
    """Per-epoch mean losses (and optional query mAUC) of one run."""

    epochs: List[EpochRecord] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)
    config: Optional[Dict[str, Any]] = None
    trainable_params: int = 0

    @property
    def epoch_losses(self) -> List[float]:
        return [e.mean_loss for e in self.epochs]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": [e.to_dict() for e in self.epochs],
            "step_losses": list(self.step_losses),
            "trainable_params": self.trainable_params,
            "config": self.config,
        }


class AdaptedModel:
    """An encoder plus the head it was adapted with."""

    def __init__(self, encoder: Encoder, head: SemanticHead):
        self.encoder = encoder
        self.head = head

    @property
    def kind(self) -> str:
        return self.head.kind

    def parameters(self) -> Dict[str, Any]:
        params = {ENCODER_PARAM_PREFIX + k: p for k, p in self.encoder.params.items()}
        params.update({HEAD_PARAM_PREFIX + k: p for k, p in self.head.params.items()})
        return params

    def trainable_parameters(self) -> Dict[str, Any]:
        return {k: p for k, p in self.parameters().items() if p.requires_grad}

    def embed(self, images: np.ndarray) -> np.ndarray:
        """Visual embeddings of un-augmented, center-cropped images."""
        size = self.encoder.config.image_size
        with no_grad():
            batch = np.stack([eval_transform(image, size) for image in images])
            return self.encoder(batch).numpy()

    def predict_logits(self, images: np.ndarray) -> np.ndarray:
        """Pre-sigmoid class scores over every token, shape (n, C)."""
        z = self.embed(images)
        with no_grad():
            return self.head.logits(z, self.head.all_tokens()).numpy()

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        z = self.embed(images)
        with no_grad():
            return self.head.probabilities(z, self.head.all_tokens()).numpy()

    def evaluate(self, task: FewShotTask) -> EvalReport:
        return mean_auc(self, task.query_images, task.query_labels, task.class_names)

    def save(self, path: PathLike) -> Path:
        return save_checkpoint(path, self.encoder, head=self.head.manifest(), head_params=self.head.state_tensors())

    @classmethod
    def load(cls, path: PathLike) -> "AdaptedModel":
        """
        Restore a model written by save().

        Raises:
            FormatError: If the checkpoint carries no head
        """
        checkpoint = load_checkpoint(path)
        if checkpoint.head is None:
            raise FormatError(f"{path}: checkpoint has no head; it cannot be evaluated")
        try:
            head = SemanticHead.from_state(checkpoint.head, checkpoint.head_tensors)
        except (KeyError, TypeError, ConfigError) as e:
            raise FormatError(f"{path}: invalid head description: {e}")
        return cls(checkpoint.encoder, head)


def build_head(kind: str, head_config: AlignmentHeadConfig, n_classes: int, visual_dim: int,
               embeddings: Optional[Sequence[SemanticEmbeddingSet]], seed: int) -> SemanticHead:
    """
    Construct the head a run trains with.

    Raises:
        ConfigError: If a semantic head lacks embeddings or they cover the wrong classes
    """
    if kind == "one_hot":
        return SemanticHead.one_hot(head_config, n_classes, visual_dim, seed=seed)
    if not embeddings:
        raise ConfigError(["paths.embeddings: required when head is 'semantic'"])
    if len(embeddings) != n_classes:
        raise ConfigError([f"paths.embeddings: {len(embeddings)} classes, task has {n_classes}"])
    return SemanticHead(head_config, embeddings, visual_dim, seed=seed, kind="semantic")


def _check_inputs(task: FewShotTask, encoder: Encoder, train_cfg: TrainConfig) -> None:
    if len(task.support_images) == 0:
        raise TaskError("support set is empty; nothing to adapt on")
    raise_if_invalid(train_cfg.validate(allow_zero_lr=True))

    channels, height, width = task.support_images.shape[1:]
    violations = train_cfg.augmentation.validate(image_size=height)
    out_size = train_cfg.augmentation.output_size(height)
    if channels != encoder.config.channels:
        violations.append(f"encoder.channels: {encoder.config.channels}, task images have {channels}")
    if out_size != encoder.config.image_size:
        violations.append(f"encoder.image_size: {encoder.config.image_size}, but augmented task images "
                          f"are {out_size}x{out_size}")
    raise_if_invalid(violations)


def adapt(task: FewShotTask, encoder: Encoder, head_config: AlignmentHeadConfig,
          embeddings: Optional[Sequence[SemanticEmbeddingSet]], train_cfg: TrainConfig) -> Tuple[AdaptedModel, TrainHistory]:
    """
    Fine-tune on the support set of a task.

    The freeze policy must already be applied to the encoder. Each epoch
    resamples the bootstrap token subsets, shuffles the support set and runs
    ceil(|S| / batch_size) AdamW steps on the mean BCE loss. Shuffling,
    augmentation and token sampling draw from separate streams seeded by
    train_cfg.seed, so a run is reproducible bit for bit.

    Args:
        task: Few-shot task; only its support set is trained on
        encoder: Encoder with its freeze policy applied
        head_config: Alignment head settings
        embeddings: One token set per class (semantic head only)
        train_cfg: Training settings

    Returns:
        The adapted model and its training history

    Raises:
        TaskError: If the support set is empty
        ConfigError: If embeddings are missing or shapes do not line up
        NumericError: If a loss or gradient becomes non-finite
    """
    _check_inputs(task, encoder, train_cfg)
    head = build_head(train_cfg.head, head_config, task.n_classes, encoder.config.output_dim,
                      embeddings, train_cfg.seed)
    model = AdaptedModel(encoder, head)

    params = model.trainable_parameters()
    optimizer = AdamW(params, lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay,
                      betas=train_cfg.betas, eps=train_cfg.adam_eps)
    trainable = sum(p.size for p in params.values())
    if not params:
        logger.warning("No trainable parameters: losses are recorded but no update is made")

    shuffle_rng, augment_rng, bootstrap_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(train_cfg.seed).spawn(3))
    history = TrainHistory(config=train_cfg.to_dict(), trainable_params=trainable)
    n_support = len(task.support_images)
    batch_size = train_cfg.batch_size
    aug = train_cfg.augmentation

    logger.info(f"Adapting {head.kind} head on {task.summary()}: {trainable} trainable parameters, "
                f"{train_cfg.epochs} epochs x {-(-n_support // batch_size)} steps")
    for epoch in range(1, train_cfg.epochs + 1):
        started = time.perf_counter()
        if head.kind == "semantic":
            head.resample(bootstrap_rng)
        order = shuffle_rng.permutation(n_support)
        losses = []
        for start in range(0, n_support, batch_size):
            idx = order[start:start + batch_size]
            images = np.stack([augment(task.support_images[i], aug, augment_rng) for i in idx])
            loss = bce_loss(head.probabilities(encoder(images)), task.support_labels[idx])
            if params:
                optimizer.step(backward(loss, params))
            losses.append(loss.item())

        history.step_losses.extend(losses)
        record = EpochRecord(epoch=epoch, mean_loss=float(np.mean(losses)))
        if train_cfg.eval_every_epoch:
            record.mAUC_on_query = model.evaluate(task).mAUC
        history.epochs.append(record)

        auc_text = f", query mAUC {record.mAUC_on_query:.4f}" if record.mAUC_on_query is not None else ""
        logger.info(f"Epoch {epoch}/{train_cfg.epochs}: mean loss {record.mean_loss:.6f}{auc_text} "
                    f"({time.perf_counter() - started:.2f}s)")

    head.active = head.all_tokens()
    return model, history
