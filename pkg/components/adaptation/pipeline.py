"""
End-to-end gradient check of the training objective: encoder, alignment head
and BCE loss, compared against central finite differences.
"""

import logging
from typing import Optional

import numpy as np

from constants import GRADCHECK_COORDS_PER_TENSOR, GRADCHECK_EPS, GRADCHECK_TOLERANCE
from core.gradcheck import GradCheckReport, check_gradients
from components.encoder.encoder import EncoderConfig, FreezePolicy, apply_freeze, build_encoder
from components.semantics.alignment import AlignmentHeadConfig, SemanticHead
from components.semantics.contexts import SupervisionSource
from components.semantics.embeddings import SemanticEmbeddingSet

from .optim import bce_loss

logger = logging.getLogger(__name__)

GRADCHECK_ENCODER = EncoderConfig(image_size=32, patch_size=8, channels=1, stages=((1, 16), (1, 16)),
                                  heads=2, output_dim=16)


def gradcheck_pipeline(encoder_cfg: Optional[EncoderConfig] = None,
                       head_config: Optional[AlignmentHeadConfig] = None,
                       n_classes: int = 3, batch: int = 2, tokens_per_class: int = 3,
                       seed: int = 0, eps: float = GRADCHECK_EPS, tolerance: float = GRADCHECK_TOLERANCE,
                       coords_per_tensor: int = GRADCHECK_COORDS_PER_TENSOR,
                       corrupt_gradient: bool = False) -> GradCheckReport:
    """
    Check backward() through the whole adaptation objective.

    Every encoder stage and the head projection are left trainable so each
    parameter tensor is covered. Inputs, labels and token sets are drawn
    from seed; the token subset is fixed for the duration of the check.

    Args:
        encoder_cfg: Encoder to build (a 2-stage, width-16 encoder by default)
        head_config: Head settings (defaults with m0 = tokens_per_class)
        n_classes: Number of classes
        batch: Number of random images
        tokens_per_class: Tokens per class set
        seed: Seed for inputs, labels and tokens
        eps: Finite-difference step
        tolerance: Maximum accepted relative error
        coords_per_tensor: Coordinates sampled per parameter tensor
        corrupt_gradient: Distort analytic gradients (negative control)

    Returns:
        The gradient check report
    """
    encoder_cfg = encoder_cfg or GRADCHECK_ENCODER
    head_config = head_config or AlignmentHeadConfig(m0=tokens_per_class)
    encoder = build_encoder(encoder_cfg)
    apply_freeze(encoder, FreezePolicy(frozen_stages=0, freeze_patch_embed=False))

    rng = np.random.default_rng(seed)
    shape = (batch, encoder_cfg.channels, encoder_cfg.image_size, encoder_cfg.image_size)
    images = rng.normal(0.0, 1.0, shape)
    labels = (rng.random((batch, n_classes)) < 0.5).astype(np.uint8)
    sets = [SemanticEmbeddingSet(class_id=c, tokens=rng.normal(0.0, 1.0, (tokens_per_class, encoder_cfg.output_dim)),
                                 source=SupervisionSource.CONTEXT)
            for c in range(n_classes)]
    head = SemanticHead(head_config, sets, encoder_cfg.output_dim, seed=seed)
    head.resample(rng)

    params = {f"encoder/{k}": p for k, p in encoder.params.items()}
    params.update({f"head/{k}": p for k, p in head.params.items()})

    def objective(_params):
        return bce_loss(head.probabilities(encoder(images)), labels)

    logger.info(f"Gradient check on a {encoder_cfg.num_stages}-stage encoder with {encoder.num_parameters} "
                f"parameters, {n_classes} classes, batch {batch}")
    return check_gradients(objective, params, eps=eps, tolerance=tolerance,
                           coords_per_tensor=coords_per_tensor, seed=seed, corrupt_gradient=corrupt_gradient)
