"""
Alignment head: scores visual embeddings against per-class token sets.

P(y=c | x) = sigmoid(tau * Agg_i cos(proj(z), t_i^c)), with Agg a sum (or a
mean) over the chosen tokens of class c. Token vectors are held fixed; only
the projection trains.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from config import (
    raise_if_invalid,
    validate_choice,
    validate_config_dict,
    validate_positive,
)
from constants import DEFAULT_AGGREGATE, DEFAULT_M0, DEFAULT_TAU
from core.tensor import Tensor, as_tensor
from errors import ConfigError, ContractError, DimensionError, NumericError

from .contexts import SupervisionSource
from .embeddings import SemanticEmbeddingSet, check_consistent

logger = logging.getLogger(__name__)

SIMILARITIES = ("cosine",)
AGGREGATES = ("sum", "mean")
HEAD_KINDS = ("semantic", "one_hot")


@dataclass(frozen=True)
class AlignmentHeadConfig:
    """Scaling, token sampling and aggregation of the alignment head."""

    tau: float = DEFAULT_TAU
    m0: int = DEFAULT_M0
    similarity: str = "cosine"
    aggregate: str = DEFAULT_AGGREGATE
    projection: bool = True

    def validate(self, name: str = "head") -> List[str]:
        violations = validate_positive(self.tau, f"{name}.tau")
        violations += validate_positive(self.m0, f"{name}.m0", integer=True)
        violations += validate_choice(self.similarity, SIMILARITIES, f"{name}.similarity")
        violations += validate_choice(self.aggregate, AGGREGATES, f"{name}.aggregate")
        if not isinstance(self.projection, bool):
            violations.append(f"{name}.projection: must be a boolean, got {self.projection!r}")
        return violations

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "head") -> "AlignmentHeadConfig":
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        config = cls(**data)
        raise_if_invalid(config.validate(name))
        return config


def bootstrap_tokens(emb_set: SemanticEmbeddingSet, m0: int, rng: np.random.Generator) -> np.ndarray:
    """
    Sample min(m0, m) distinct token indices uniformly without replacement.

    Returns:
        Sorted index array into emb_set.tokens
    """
    if isinstance(m0, bool) or not isinstance(m0, (int, np.integer)) or m0 < 1:
        raise ContractError(f"m0 must be a positive integer, got {m0!r}")
    if emb_set.m < 1:
        raise ContractError(f"class {emb_set.class_id} has no tokens")
    return np.sort(rng.choice(emb_set.m, size=min(int(m0), emb_set.m), replace=False))


def _unit(vector: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm == 0.0 or not np.isfinite(norm):
        raise NumericError(f"{what} has zero norm")
    return vector / norm


def class_likelihood(visual_emb: Any, emb_set: SemanticEmbeddingSet, chosen: Sequence[int],
                     cfg: AlignmentHeadConfig, projection: Optional[np.ndarray] = None) -> float:
    """
    Probability that class emb_set.class_id is present given a visual embedding.

    Args:
        visual_emb: Vector of dimension d
        emb_set: Token set of the class
        chosen: Indices of the tokens to aggregate over
        cfg: Head configuration
        projection: (d, d_text) matrix; identity when omitted

    Returns:
        sigmoid(tau * Agg cos(proj(visual_emb), t_i))

    Raises:
        ContractError: If chosen is empty
        NumericError: If the projected visual embedding has zero norm
    """
    chosen = np.asarray(chosen, dtype=np.int64)
    if chosen.size == 0:
        raise ContractError("chosen token subset must not be empty")
    z = np.asarray(visual_emb.data if isinstance(visual_emb, Tensor) else visual_emb, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("visual embedding is not finite")
    if projection is not None:
        z = z @ projection
    if z.shape[-1] != emb_set.dim:
        raise DimensionError(f"visual embedding dim {z.shape[-1]} != token dim {emb_set.dim}")
    sims = emb_set.normalized()[chosen] @ _unit(z, "projected visual embedding")
    aggregated = sims.sum() if cfg.aggregate == "sum" else sims.mean()
    return float(expit(cfg.tau * aggregated))


class SemanticHead:
    """
    Batched, differentiable form of class_likelihood over all classes.

    Class c of the task corresponds to the set with class_id c. The one-hot
    baseline is the same head with a single code vector e_c per class, so its
    logits are tau-scaled cosines to identity codes rather than an affine
    layer with a bias.
    """

    def __init__(self, config: AlignmentHeadConfig, sets: Sequence[SemanticEmbeddingSet],
                 visual_dim: int, seed: int = 0, kind: str = "semantic"):
        raise_if_invalid(config.validate())
        if kind not in HEAD_KINDS:
            raise ConfigError(f"head kind must be one of {', '.join(HEAD_KINDS)}, got {kind!r}")
        self.config = config
        self.kind = kind
        self.sets = sorted(sets, key=lambda s: s.class_id)
        ids = [s.class_id for s in self.sets]
        if ids != list(range(len(ids))):
            raise ConfigError(f"embedding class ids must be 0..{len(ids) - 1}, got {ids}")
        self.text_dim = check_consistent(self.sets)
        self.visual_dim = visual_dim
        self.seed = seed
        self._unit_tokens = [s.normalized() for s in self.sets]
        self.params: Dict[str, Tensor] = {}

        if config.projection:
            rng = np.random.default_rng([seed, 1])
            bound = 1.0 / np.sqrt(visual_dim)
            self.params["projection.weight"] = Tensor(
                rng.uniform(-bound, bound, (visual_dim, self.text_dim)), requires_grad=True,
                name="projection.weight")
        elif visual_dim != self.text_dim:
            raise ConfigError(f"head.projection: identity projection needs visual dim ({visual_dim}) "
                              f"== text dim ({self.text_dim})")
        self.active = self.all_tokens()

    @classmethod
    def one_hot(cls, config: AlignmentHeadConfig, n_classes: int, visual_dim: int, seed: int = 0) -> "SemanticHead":
        """Fixed class codes e_c, in C dimensions (or d with the identity projection)."""
        code_dim = n_classes if config.projection else visual_dim
        if code_dim < n_classes:
            raise ConfigError(f"one-hot codes need dimension >= {n_classes}, got {code_dim}")
        codes = np.eye(n_classes, code_dim)
        sets = [SemanticEmbeddingSet(class_id=c, tokens=codes[c:c + 1], source=SupervisionSource.CLASS_NAME)
                for c in range(n_classes)]
        return cls(config, sets, visual_dim, seed=seed, kind="one_hot")

    @property
    def n_classes(self) -> int:
        return len(self.sets)

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {k: p for k, p in self.params.items() if p.requires_grad}

    # ------------------------------------------------------------------
    # Token selection
    # ------------------------------------------------------------------

    def resample(self, rng: np.random.Generator) -> List[np.ndarray]:
        """Draw a fresh bootstrap subset per class (once per epoch)."""
        self.active = [bootstrap_tokens(s, self.config.m0, rng) for s in self.sets]
        return self.active

    def all_tokens(self) -> List[np.ndarray]:
        """Inference selection: every token of every class."""
        return [np.arange(s.m) for s in self.sets]

    # ------------------------------------------------------------------
    # Scoring
    # ------------------------------------------------------------------

    def project(self, z: Tensor) -> Tensor:
        weight = self.params.get("projection.weight")
        return z if weight is None else z @ weight

    def logits(self, z: Any, chosen: Optional[Sequence[np.ndarray]] = None) -> Tensor:
        """
        tau * aggregated cosine similarity, shape (batch, n_classes).

        chosen selects token indices per class; the current bootstrap subset
        (self.active) is used when omitted.
        """
        z = as_tensor(z)
        if z.ndim != 2 or z.shape[1] != self.visual_dim:
            raise DimensionError(f"head expects (batch, {self.visual_dim}) embeddings, got {z.shape}")
        u = self.project(z)
        norms = (u * u).sum(axis=1, keepdims=True)
        if np.any(norms.data == 0.0):
            raise NumericError("projected visual embedding has zero norm")
        unit = u / norms.sqrt().expand_to(u.shape)

        selection = self.active if chosen is None else chosen
        chosen = [tokens[idx] for tokens, idx in zip(self._unit_tokens, selection)]
        stacked = np.concatenate(chosen, axis=0)
        aggregation = np.zeros((stacked.shape[0], self.n_classes))
        row = 0
        for c, block in enumerate(chosen):
            aggregation[row:row + len(block), c] = 1.0 if self.config.aggregate == "sum" else 1.0 / len(block)
            row += len(block)

        sims = unit @ Tensor(stacked.T)
        return (sims @ Tensor(aggregation)) * self.config.tau

    def probabilities(self, z: Any, chosen: Optional[Sequence[np.ndarray]] = None) -> Tensor:
        return self.logits(z, chosen).sigmoid()

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def manifest(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "visual_dim": self.visual_dim,
            "seed": self.seed,
            "classes": [{"id": s.class_id, "source": s.source.value} for s in self.sets],
        }

    def state_tensors(self) -> Dict[str, Tensor]:
        """Parameters plus the fixed token sets, for checkpointing."""
        state = dict(self.params)
        for s in self.sets:
            state[f"tokens.{s.class_id}"] = Tensor(s.tokens)
        return state

    @classmethod
    def from_state(cls, manifest: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> "SemanticHead":
        """Rebuild a head from manifest() and state_tensors() output."""
        config = AlignmentHeadConfig.from_dict(manifest["config"])
        sets = [SemanticEmbeddingSet(class_id=c["id"], tokens=tensors[f"tokens.{c['id']}"], source=c["source"])
                for c in manifest["classes"]]
        head = cls(config, sets, manifest["visual_dim"], seed=manifest.get("seed", 0), kind=manifest["kind"])
        for key, param in head.params.items():
            param.assign(tensors[key])
        return head
