"""
Checkpoint files for encoders and the head trained on top of them.

A checkpoint is a utils container: the manifest records the encoder config,
the freeze policy, an optional head description and one entry per tensor;
the payload holds the tensors as little-endian float64 in manifest order.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from constants import CHECKPOINT_FORMAT_VERSION
from core.tensor import Tensor
from errors import ConfigError, FormatError, UnsupportedVersionError
from utils import PathLike, array_bytes, read_container, take_array, write_container

from .encoder import Encoder, EncoderConfig, FreezePolicy, apply_freeze, build_encoder

logger = logging.getLogger(__name__)

ENCODER_PREFIX = "encoder/"
HEAD_PREFIX = "head/"


@dataclass
class Checkpoint:
    """Everything restored from a checkpoint file."""
    encoder: Encoder
    policy: Optional[FreezePolicy]
    head: Optional[Dict[str, Any]] = None
    head_tensors: Dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(path: PathLike, encoder: Encoder, head: Optional[Dict[str, Any]] = None,
                    head_params: Optional[Dict[str, Tensor]] = None) -> Path:
    """
    Write the encoder (and optionally a head) to a checkpoint file.

    Args:
        path: Destination file
        encoder: Encoder to save
        head: JSON-serializable head description
        head_params: Named head tensors

    Returns:
        The written path
    """
    entries, blobs, offset = [], [], 0
    named = [(ENCODER_PREFIX + k, p) for k, p in encoder.params.items()]
    named += [(HEAD_PREFIX + k, p) for k, p in (head_params or {}).items()]
    for key, param in named:
        blob = array_bytes(param.data, "<f8")
        entries.append({"key": key, "shape": list(param.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)

    manifest = {
        "format": CHECKPOINT_FORMAT_VERSION,
        "encoder": encoder.config.to_dict(),
        "freeze": encoder.policy.to_dict() if encoder.policy else None,
        "head": head,
        "tensors": entries,
    }
    write_container(path, manifest, blobs)
    logger.info(f"Saved checkpoint with {len(entries)} tensors to {path}")
    return Path(path)


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Restore an encoder (freeze policy applied) and any head tensors.

    Raises:
        UnsupportedVersionError: If the file declares another format version
        FormatError: On truncation or a manifest that does not match the encoder
    """
    manifest, payload, base = read_container(path)
    version = manifest.get("format")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported checkpoint format {version!r} "
                                      f"(expected {CHECKPOINT_FORMAT_VERSION})")

    try:
        config = EncoderConfig.from_dict(manifest.get("encoder") or {})
        encoder = build_encoder(config)
        policy = FreezePolicy.from_dict(manifest["freeze"]) if manifest.get("freeze") else None
    except ConfigError as e:
        raise FormatError(f"{path}: invalid encoder description: {e}")

    state, head_tensors = {}, {}
    for entry in manifest.get("tensors") or []:
        try:
            key, shape, offset = entry["key"], entry["shape"], entry["offset"]
        except (KeyError, TypeError):
            raise FormatError(f"{path}: malformed tensor entry {entry!r}")
        array, _ = take_array(payload, offset, shape, "<f8", base_offset=base)
        if key.startswith(ENCODER_PREFIX):
            state[key[len(ENCODER_PREFIX):]] = array
        elif key.startswith(HEAD_PREFIX):
            head_tensors[key[len(HEAD_PREFIX):]] = array
        else:
            raise FormatError(f"{path}: unknown tensor key {key!r}")

    for key, param in encoder.params.items():
        if key not in state:
            raise FormatError(f"{path}: missing encoder tensor {key!r}")
        if state[key].shape != param.shape:
            raise FormatError(f"{path}: tensor {key!r} has shape {state[key].shape}, expected {param.shape}")
    if set(state) - set(encoder.params):
        raise FormatError(f"{path}: unexpected encoder tensors {sorted(set(state) - set(encoder.params))}")
    encoder.load_state_dict(state)
    if policy is not None:
        apply_freeze(encoder, policy)

    logger.info(f"Loaded checkpoint from {path}")
    return Checkpoint(encoder=encoder, policy=policy, head=manifest.get("head"), head_tensors=head_tensors)
