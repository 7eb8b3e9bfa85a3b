"""
Image augmentation: center crop, then random crop with zero padding, then
horizontal flip. Arrays in (channels, height, width), arrays out.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional

import numpy as np

from config import raise_if_invalid, validate_config_dict, validate_positive, validate_probability
from constants import DEFAULT_CROP_PADDING, DEFAULT_HFLIP_PROB
from core.tensor import Tensor
from errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentConfig:
    """Crop sizes of None mean "keep the incoming size"."""

    center_crop: Optional[int] = None
    random_crop: Optional[int] = None
    padding: int = DEFAULT_CROP_PADDING
    hflip_prob: float = DEFAULT_HFLIP_PROB
    center_crop_enabled: bool = True
    random_crop_enabled: bool = True
    hflip_enabled: bool = True

    def output_size(self, image_size: int) -> int:
        size = image_size
        if self.center_crop_enabled and self.center_crop is not None:
            size = self.center_crop
        if self.random_crop_enabled and self.random_crop is not None:
            size = self.random_crop
        return size

    def validate(self, image_size: Optional[int] = None, name: str = "train.augmentation") -> List[str]:
        violations = validate_positive(self.padding, f"{name}.padding", integer=True, allow_zero=True)
        violations += validate_probability(self.hflip_prob, f"{name}.hflip_prob")
        for key in ("center_crop", "random_crop"):
            value = getattr(self, key)
            if value is not None:
                violations += validate_positive(value, f"{name}.{key}", integer=True)
        for key in ("center_crop_enabled", "random_crop_enabled", "hflip_enabled"):
            if not isinstance(getattr(self, key), bool):
                violations.append(f"{name}.{key}: must be a boolean")
        if violations or image_size is None:
            return violations

        size = image_size
        if self.center_crop_enabled and self.center_crop is not None:
            if self.center_crop > image_size:
                violations.append(f"{name}.center_crop: {self.center_crop} exceeds image size {image_size}")
            size = self.center_crop
        if self.random_crop_enabled and self.random_crop is not None:
            if self.random_crop > size + 2 * self.padding:
                violations.append(f"{name}.random_crop: {self.random_crop} exceeds padded input "
                                  f"{size} + 2*{self.padding}")
            elif self.random_crop > image_size:
                violations.append(f"{name}.random_crop: {self.random_crop} exceeds image size {image_size} "
                                  f"(evaluation center-crops to the training size)")
        return violations

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "train.augmentation") -> "AugmentConfig":
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        config = cls(**data)
        raise_if_invalid(config.validate(name=name))
        return config


def _as_array(image: Any) -> np.ndarray:
    array = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if array.ndim != 3:
        raise DimensionError(f"augment expects a (channels, height, width) image, got shape {array.shape}")
    return array


def center_crop(image: Any, size: int) -> np.ndarray:
    image = _as_array(image)
    h, w = image.shape[1:]
    if size > h or size > w:
        raise ConfigError(f"center crop {size} is larger than the {h}x{w} image")
    top, left = (h - size) // 2, (w - size) // 2
    return np.array(image[:, top:top + size, left:left + size])


def random_crop(image: Any, size: int, padding: int, rng: np.random.Generator) -> np.ndarray:
    image = _as_array(image)
    padded = np.pad(image, ((0, 0), (padding, padding), (padding, padding)))
    h, w = padded.shape[1:]
    if size > h or size > w:
        raise ConfigError(f"random crop {size} is larger than the padded {h}x{w} input")
    top, left = rng.integers(0, h - size + 1), rng.integers(0, w - size + 1)
    return np.array(padded[:, top:top + size, left:left + size])


def hflip(image: Any) -> np.ndarray:
    """Reverse the last (width) axis."""
    return np.array(_as_array(image)[..., ::-1])


def augment(image: Any, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Apply the enabled transforms in order: center crop, random crop, flip.

    Consumes rng identically for a given config, so runs replay exactly.
    """
    out = _as_array(image)
    if cfg.center_crop_enabled and cfg.center_crop is not None:
        out = center_crop(out, cfg.center_crop)
    if cfg.random_crop_enabled:
        out = random_crop(out, cfg.random_crop or out.shape[1], cfg.padding, rng)
    if cfg.hflip_enabled and rng.random() < cfg.hflip_prob:
        out = hflip(out)
    return np.array(out)


def eval_transform(image: Any, size: int) -> np.ndarray:
    """Evaluation input: a center crop to the encoder size, nothing random."""
    return center_crop(image, size)
