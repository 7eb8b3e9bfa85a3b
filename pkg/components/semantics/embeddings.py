"""
Mask-token embedding sets and the embedding file format.

File layout (JSON, one line per class so diffs stay readable):

    {
      "dim": 8,
      "classes": [
        {"id": 0, "source": "context", "tokens": [[...], [...]]}
      ]
    }

Floats are written with 17 significant digits, so loading and re-saving a
file written here reproduces it byte for byte.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from constants import format_float
from errors import DimensionError, FormatError, InputError
from utils import PathLike, write_text

from .contexts import SupervisionSource

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SemanticEmbeddingSet:
    """The m token vectors of one class (rows of tokens)."""

    class_id: int
    tokens: np.ndarray
    source: SupervisionSource = SupervisionSource.CONTEXT

    def __post_init__(self):
        tokens = np.array(self.tokens, dtype=np.float64)
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] < 1:
            raise InputError(f"class {self.class_id}: tokens must be a non-empty (m, d) matrix, "
                             f"got shape {tokens.shape}")
        if not np.all(np.isfinite(tokens)):
            raise InputError(f"class {self.class_id}: tokens contain non-finite values")
        if np.any(np.linalg.norm(tokens, axis=1) == 0.0):
            raise InputError(f"class {self.class_id}: zero token vector")
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "source", SupervisionSource(self.source))

    @property
    def m(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def normalized(self) -> np.ndarray:
        """Tokens scaled to unit length."""
        return self.tokens / np.linalg.norm(self.tokens, axis=1, keepdims=True)


def check_consistent(sets: Sequence[SemanticEmbeddingSet]) -> int:
    """Return the shared token dimension, or raise if classes disagree."""
    if not sets:
        raise InputError("no embedding sets given")
    dim = sets[0].dim
    for s in sets:
        if s.dim != dim:
            raise DimensionError(f"class {s.class_id} has dimension {s.dim}, expected {dim}")
    return dim


def dumps_embeddings(sets: Sequence[SemanticEmbeddingSet]) -> str:
    """Render the canonical embedding file text."""
    dim = check_consistent(sets)
    lines = ["{", f'  "dim": {dim},', '  "classes": [']
    for i, s in enumerate(sets):
        tokens = ", ".join("[" + ", ".join(format_float(v) for v in row) + "]" for row in s.tokens)
        sep = "," if i < len(sets) - 1 else ""
        lines.append(f'    {{"id": {s.class_id}, "source": "{s.source.value}", "tokens": [{tokens}]}}{sep}')
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def save_embeddings(path: PathLike, sets: Sequence[SemanticEmbeddingSet]) -> None:
    write_text(path, dumps_embeddings(sets))
    logger.info(f"Wrote {len(sets)} embedding sets to {path}")


def load_embeddings(path: PathLike) -> List[SemanticEmbeddingSet]:
    """
    Read an embedding file.

    Returns:
        One set per class, in file order

    Raises:
        FormatError: On inconsistent dimensions, duplicate ids or zero vectors,
            naming the offending class
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e.msg}", offset=e.pos)

    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a JSON object")
    dim = data.get("dim")
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise FormatError(f"{path}: 'dim' must be a positive integer, got {dim!r}")
    classes = data.get("classes")
    if not isinstance(classes, list) or not classes:
        raise FormatError(f"{path}: 'classes' must be a non-empty list")

    sets, seen = [], set()
    for entry in classes:
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: class entries must be objects")
        class_id = entry.get("id")
        if isinstance(class_id, bool) or not isinstance(class_id, int):
            raise FormatError(f"{path}: class id must be an integer, got {class_id!r}")
        if class_id in seen:
            raise FormatError(f"{path}: duplicate class id {class_id}")
        seen.add(class_id)

        tokens = entry.get("tokens")
        if not isinstance(tokens, list) or not tokens:
            raise FormatError(f"{path}: class {class_id} has no tokens")
        for row in tokens:
            if not isinstance(row, list) or len(row) != dim:
                raise FormatError(f"{path}: class {class_id} has a token of dimension "
                                  f"{len(row) if isinstance(row, list) else '?'}, expected {dim}")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in row):
                raise FormatError(f"{path}: class {class_id} has a non-numeric token entry")
        try:
            sets.append(SemanticEmbeddingSet(class_id=class_id, tokens=np.array(tokens, dtype=np.float64),
                                             source=entry.get("source", SupervisionSource.CONTEXT.value)))
        except (InputError, ValueError) as e:
            raise FormatError(f"{path}: class {class_id}: {e}")
    logger.debug(f"Loaded {len(sets)} embedding sets (dim {dim}) from {path}")
    return sets
