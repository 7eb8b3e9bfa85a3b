"""
Encoder Component - Stage-Structured Patch Transformer
Produces the visual embedding of an image and partitions its parameters into
frozen and trainable sets by depth.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, fields
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from config import raise_if_invalid, validate_config_dict, validate_positive
from constants import DEFAULT_FROZEN_STAGES, LAYER_NORM_EPS
from core.tensor import Tensor, as_tensor, concat
from errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

PATCH_EMBED_GROUP = 0


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and initialization of the encoder; stages are (num_blocks, width) pairs."""

    image_size: int = 32
    patch_size: int = 8
    channels: int = 1
    stages: Tuple[Tuple[int, int], ...] = ((1, 32), (1, 32), (1, 32), (1, 32))
    heads: int = 4
    output_dim: int = 32
    seed: int = 0
    mlp_ratio: int = 2
    pos_scale: float = 0.5
    ln_eps: float = LAYER_NORM_EPS

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size * self.patch_size

    def validate(self, name: str = "encoder") -> List[str]:
        """Return every violated constraint."""
        violations = []
        for key in ("image_size", "patch_size", "channels", "heads", "output_dim", "mlp_ratio"):
            violations += validate_positive(getattr(self, key), f"{name}.{key}", integer=True)
        violations += validate_positive(self.pos_scale, f"{name}.pos_scale", allow_zero=True)
        violations += validate_positive(self.ln_eps, f"{name}.ln_eps", allow_zero=True)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            violations.append(f"{name}.seed: must be a non-negative integer, got {self.seed!r}")
        if not violations and self.image_size % self.patch_size:
            violations.append(f"{name}.image_size: {self.image_size} is not divisible by "
                              f"patch_size {self.patch_size}")

        if not self.stages:
            violations.append(f"{name}.stages: at least one stage is required")
        for i, stage in enumerate(self.stages):
            where = f"{name}.stages[{i}]"
            if not isinstance(stage, tuple) or len(stage) != 2:
                violations.append(f"{where}: must be a [num_blocks, width] pair, got {stage!r}")
                continue
            blocks, width = stage
            violations += validate_positive(blocks, f"{where}.num_blocks", integer=True)
            width_violations = validate_positive(width, f"{where}.width", integer=True)
            violations += width_violations
            if not width_violations and isinstance(self.heads, int) and self.heads > 0 and width % self.heads:
                violations.append(f"{where}.width: heads={self.heads} does not divide width {width}")
        return violations

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["stages"] = [list(stage) for stage in self.stages]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "encoder") -> "EncoderConfig":
        """
        Build a validated config from a mapping.

        Raises:
            ConfigError: Listing unknown keys and every violated constraint
        """
        violations = validate_config_dict(data, [f.name for f in fields(cls)], name)
        raise_if_invalid(violations)
        values = dict(data)
        if "stages" in values:
            stages = values["stages"]
            if not isinstance(stages, (list, tuple)):
                raise ConfigError(f"{name}.stages: must be a list of [num_blocks, width] pairs")
            values["stages"] = tuple(tuple(s) if isinstance(s, (list, tuple)) else s for s in stages)
        config = cls(**values)
        raise_if_invalid(config.validate(name))
        return config


@dataclass(frozen=True)
class FreezePolicy:
    """
    Which shallow parts of the encoder stay fixed during adaptation.

    freeze_patch_embed left as None resolves to True whenever at least one
    stage is frozen.
    """

    frozen_stages: int = DEFAULT_FROZEN_STAGES
    freeze_patch_embed: Optional[bool] = None

    def __post_init__(self):
        if self.freeze_patch_embed is None:
            object.__setattr__(self, "freeze_patch_embed", bool(isinstance(self.frozen_stages, int)
                                                                and self.frozen_stages >= 1))

    @classmethod
    def head_only(cls, num_stages: int) -> "FreezePolicy":
        """Freeze the whole encoder so only the external head trains."""
        return cls(frozen_stages=num_stages, freeze_patch_embed=True)

    def validate(self, num_stages: int, name: str = "freeze") -> List[str]:
        violations = validate_positive(self.frozen_stages, f"{name}.frozen_stages", integer=True, allow_zero=True)
        if not violations and self.frozen_stages > num_stages:
            violations.append(f"{name}.frozen_stages: {self.frozen_stages} exceeds the encoder's "
                              f"{num_stages} stages")
        if not isinstance(self.freeze_patch_embed, bool):
            violations.append(f"{name}.freeze_patch_embed: must be a boolean, got {self.freeze_patch_embed!r}")
        return violations

    def to_dict(self) -> Dict[str, Any]:
        return {"frozen_stages": self.frozen_stages, "freeze_patch_embed": self.freeze_patch_embed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "freeze") -> "FreezePolicy":
        raise_if_invalid(validate_config_dict(data, ("frozen_stages", "freeze_patch_embed"), name))
        return cls(**data)


@dataclass(frozen=True)
class PartitionReport:
    """Scalar parameter counts on each side of the freeze boundary."""
    frozen_params: int
    trainable_params: int

    @property
    def total_params(self) -> int:
        return self.frozen_params + self.trainable_params


def param_key(stage: int, block: Optional[int], role: str) -> str:
    """Parameter name for (stage, block, role); stage 0 is the patch embedding."""
    if stage == PATCH_EMBED_GROUP:
        return f"patch_embed.{role}"
    if block is None:
        return f"stage{stage}.{role}"
    return f"stage{stage}.block{block}.{role}"


class Encoder:
    """
    Pre-norm ViT blocks grouped into stages.

    Images are embedded one at a time, so a row of the output depends only on
    the corresponding image. The final norm and output projection belong to
    the last stage.
    """

    def __init__(self, config: EncoderConfig):
        self.config = config
        self.params: Dict[str, Tensor] = OrderedDict()
        self.groups: Dict[str, int] = {}
        self.policy: Optional[FreezePolicy] = None
        self._rng = np.random.default_rng(config.seed)
        self._init_params()
        del self._rng

    # ------------------------------------------------------------------
    # Initialization
    # ------------------------------------------------------------------

    def _add(self, stage: int, block: Optional[int], role: str, value: np.ndarray) -> None:
        key = param_key(stage, block, role)
        self.params[key] = Tensor(value, requires_grad=True, name=key)
        self.groups[key] = stage

    def _add_linear(self, stage: int, block: Optional[int], role: str, fan_in: int, fan_out: int) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        self._add(stage, block, f"{role}.weight", self._rng.uniform(-bound, bound, (fan_in, fan_out)))
        self._add(stage, block, f"{role}.bias", np.zeros(fan_out))

    def _add_norm(self, stage: int, block: Optional[int], role: str, width: int) -> None:
        self._add(stage, block, f"{role}.gain", np.ones(width))
        self._add(stage, block, f"{role}.bias", np.zeros(width))

    def _init_params(self) -> None:
        cfg = self.config
        width = cfg.stages[0][1]
        self._add_linear(PATCH_EMBED_GROUP, None, "proj", cfg.patch_dim, width)
        self._add(PATCH_EMBED_GROUP, None, "pos",
                  self._rng.uniform(-cfg.pos_scale, cfg.pos_scale, (cfg.num_patches, width)))

        for s, (blocks, stage_width) in enumerate(cfg.stages, start=1):
            if stage_width != width:
                self._add_linear(s, None, "reproj", width, stage_width)
                width = stage_width
            hidden = width * cfg.mlp_ratio
            for b in range(blocks):
                self._add_norm(s, b, "norm1", width)
                for role in ("attn.q", "attn.k", "attn.v", "attn.out"):
                    self._add_linear(s, b, role, width, width)
                self._add_norm(s, b, "norm2", width)
                self._add_linear(s, b, "mlp.fc1", width, hidden)
                self._add_linear(s, b, "mlp.fc2", hidden, width)

        last = cfg.num_stages
        self._add_norm(last, None, "out_norm", width)
        self._add_linear(last, None, "out_proj", width, cfg.output_dim)

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def parameters(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return OrderedDict((k, p) for k, p in self.params.items() if p.requires_grad)

    def frozen_parameters(self) -> Dict[str, Tensor]:
        return OrderedDict((k, p) for k, p in self.params.items() if not p.requires_grad)

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter array, keyed by name."""
        return OrderedDict((k, p.numpy()) for k, p in self.params.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if missing or unexpected:
            raise DimensionError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for key, value in state.items():
            self.params[key].assign(value)

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    def __call__(self, images: Any) -> Tensor:
        return self.forward(images)

    def forward(self, images: Any) -> Tensor:
        """
        Embed a batch of images.

        Args:
            images: Array or Tensor of shape (batch, channels, height, width)

        Returns:
            Tensor of shape (batch, output_dim)
        """
        images = as_tensor(images)
        cfg = self.config
        expected = (cfg.channels, cfg.image_size, cfg.image_size)
        if images.ndim != 4 or images.shape[1:] != expected or images.shape[0] == 0:
            raise DimensionError(f"encoder expects images of shape (batch>=1, {', '.join(map(str, expected))}), "
                                 f"got {images.shape}")
        return concat([self._embed_one(images[i]) for i in range(images.shape[0])], axis=0)

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        weight, bias = self.params[f"{prefix}.weight"], self.params[f"{prefix}.bias"]
        out = x @ weight
        return out + bias.expand_to(out.shape)

    def _norm(self, x: Tensor, prefix: str) -> Tensor:
        gain, bias = self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"]
        return x.layer_norm(self.config.ln_eps) * gain.expand_to(x.shape) + bias.expand_to(x.shape)

    def _attention(self, x: Tensor, prefix: str) -> Tensor:
        q = self._linear(x, f"{prefix}.attn.q")
        k = self._linear(x, f"{prefix}.attn.k")
        v = self._linear(x, f"{prefix}.attn.v")
        head_dim = x.shape[1] // self.config.heads
        scale = 1.0 / np.sqrt(head_dim)
        outputs = []
        for h in range(self.config.heads):
            cols = (slice(None), slice(h * head_dim, (h + 1) * head_dim))
            weights = ((q[cols] @ k[cols].T) * scale).softmax()
            outputs.append(weights @ v[cols])
        return self._linear(concat(outputs, axis=1), f"{prefix}.attn.out")

    def _block(self, x: Tensor, prefix: str) -> Tensor:
        x = x + self._attention(self._norm(x, f"{prefix}.norm1"), prefix)
        hidden = self._linear(self._norm(x, f"{prefix}.norm2"), f"{prefix}.mlp.fc1").gelu()
        return x + self._linear(hidden, f"{prefix}.mlp.fc2")

    def _embed_one(self, image: Tensor) -> Tensor:
        cfg = self.config
        g, p = cfg.grid, cfg.patch_size
        patches = (image.reshape(cfg.channels, g, p, g, p)
                   .transpose(1, 3, 0, 2, 4)
                   .reshape(cfg.num_patches, cfg.patch_dim))
        tokens = self._linear(patches, "patch_embed.proj") + self.params["patch_embed.pos"]

        for s, (blocks, _) in enumerate(cfg.stages, start=1):
            reproj = param_key(s, None, "reproj")
            if f"{reproj}.weight" in self.params:
                tokens = self._linear(tokens, reproj)
            for b in range(blocks):
                tokens = self._block(tokens, f"stage{s}.block{b}")

        last = cfg.num_stages
        tokens = self._norm(tokens, param_key(last, None, "out_norm"))
        pooled = tokens.mean(axis=0, keepdims=True)
        return self._linear(pooled, param_key(last, None, "out_proj"))


def build_encoder(config: EncoderConfig) -> Encoder:
    """
    Build an encoder with deterministic initialization from config.seed.

    Raises:
        ConfigError: If the config is invalid
    """
    raise_if_invalid(config.validate())
    encoder = Encoder(config)
    logger.debug(f"Built encoder with {encoder.num_parameters} parameters over {config.num_stages} stages")
    return encoder


def apply_freeze(encoder: Encoder, policy: FreezePolicy) -> PartitionReport:
    """
    Freeze the patch embedding (optionally) and stages 1..N; everything deeper trains.

    Args:
        encoder: Encoder to partition in place
        policy: Freeze policy

    Returns:
        Scalar counts of frozen and trainable encoder parameters

    Raises:
        ConfigError: If frozen_stages exceeds the stage count
    """
    raise_if_invalid(policy.validate(encoder.config.num_stages))
    frozen = trainable = 0
    for key, param in encoder.params.items():
        group = encoder.groups[key]
        if group == PATCH_EMBED_GROUP:
            is_frozen = policy.freeze_patch_embed
        else:
            is_frozen = group <= policy.frozen_stages
        param.requires_grad = not is_frozen
        param.grad = None
        if is_frozen:
            frozen += param.size
        else:
            trainable += param.size
    encoder.policy = policy
    logger.info(f"Froze {policy.frozen_stages}/{encoder.config.num_stages} stages "
                f"(patch embed {'frozen' if policy.freeze_patch_embed else 'trainable'}): "
                f"{frozen} frozen, {trainable} trainable")
    return PartitionReport(frozen_params=frozen, trainable_params=trainable)
