"""
Deterministic toy text embedder.

Stands in for a masked language model: each [MASK] position is described by
the character n-grams of the words within a window around it, hashed into a
fixed number of buckets and projected by a seeded Gaussian matrix.
"""

import hashlib
import logging
import re
from functools import lru_cache
from typing import List

import numpy as np

from constants import MASK_TOKEN, TOY_EMBED_BUCKETS, TOY_EMBED_NGRAM, TOY_EMBED_WINDOW
from errors import ContractError, NumericError

from .contexts import ClassContext, SupervisionSource
from .embeddings import SemanticEmbeddingSet

logger = logging.getLogger(__name__)

TOKEN_PATTERN = re.compile(r"\[MASK\]|\w+")
MASK_FEATURE = "<mask>"
NAME_FEATURE = "<name>"


def tokenize(text: str) -> List[str]:
    """Words (lowercased) and [MASK] markers in order of appearance."""
    return [t if t == MASK_TOKEN else t.lower() for t in TOKEN_PATTERN.findall(text)]


def char_ngrams(word: str, n: int = TOY_EMBED_NGRAM) -> List[str]:
    padded = f"#{word}#"
    if len(padded) <= n:
        return [padded]
    return [padded[i:i + n] for i in range(len(padded) - n + 1)]


def bucket(feature: str, buckets: int = TOY_EMBED_BUCKETS) -> int:
    # blake2b keeps bucket ids stable across processes (unlike hash())
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


@lru_cache(maxsize=8)
def projection_matrix(seed: int, buckets: int, dim: int) -> np.ndarray:
    matrix = np.random.default_rng(seed).standard_normal((buckets, dim)) / np.sqrt(dim)
    matrix.setflags(write=False)
    return matrix


def _feature_counts(words: List[str], sentinel: str, buckets: int, ngram: int) -> np.ndarray:
    counts = np.zeros(buckets)
    counts[bucket(sentinel, buckets)] += 1.0
    for word in words:
        for gram in char_ngrams(word, ngram):
            counts[bucket(gram, buckets)] += 1.0
    return counts


def toy_embed(ctx: ClassContext, dim: int, seed: int = 0, window: int = TOY_EMBED_WINDOW,
              ngram: int = TOY_EMBED_NGRAM, buckets: int = TOY_EMBED_BUCKETS) -> SemanticEmbeddingSet:
    """
    Embed every [MASK] position of a context (or the bare name for class_name sources).

    Args:
        ctx: Class context
        dim: Output dimension
        seed: Seed of the projection matrix
        window: Words considered on each side of a mask
        ngram: Character n-gram length
        buckets: Hash buckets

    Returns:
        One unit vector per mask position
    """
    if dim < 1 or window < 0 or ngram < 1 or buckets < 1:
        raise ContractError(f"invalid toy embedder settings: dim={dim} window={window} "
                            f"ngram={ngram} buckets={buckets}")
    words = tokenize(ctx.context_text)
    if ctx.source is SupervisionSource.CLASS_NAME:
        features = [_feature_counts(words, NAME_FEATURE, buckets, ngram)]
    else:
        features = []
        for i, word in enumerate(words):
            if word != MASK_TOKEN:
                continue
            around = words[max(0, i - window):i] + words[i + 1:i + 1 + window]
            features.append(_feature_counts([w for w in around if w != MASK_TOKEN],
                                            MASK_FEATURE, buckets, ngram))

    vectors = np.stack(features) @ projection_matrix(seed, buckets, dim)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericError(f"class {ctx.class_id}: toy embedding collapsed to zero")
    return SemanticEmbeddingSet(class_id=ctx.class_id, tokens=vectors / norms, source=ctx.source)
