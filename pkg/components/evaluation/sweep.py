"""
Evaluation Component - Experiment Sweeps
Freeze-depth sweeps and supervision-source comparisons built from repeated
adapt + evaluate runs with shared seeds.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from constants import LINEAR_HEAD_LABEL, SWEEP_CSV_HEADER, format_float, format_table_float
from components.adaptation.training import TrainConfig, adapt
from components.encoder.encoder import EncoderConfig, FreezePolicy, apply_freeze, build_encoder
from components.semantics.alignment import AlignmentHeadConfig
from components.semantics.correlation import correlation_matrix, mean_offdiag
from components.semantics.embeddings import SemanticEmbeddingSet
from components.taskgen.generator import FewShotTask
from errors import ConfigError

logger = logging.getLogger(__name__)

FreezeValue = Union[int, str]

COMPARISON_CSV_HEADER = "source,mean_offdiag,mAUC_mean,mAUC_std,repeats"


@dataclass
class SweepRow:
    N: FreezeValue
    frozen_params: int
    trainable_params: int
    mAUC: float
    wall_time_s: float

    def csv_line(self, timing: bool = True) -> str:
        wall = self.wall_time_s if timing else 0.0
        return f"{self.N},{self.frozen_params},{self.trainable_params},{format_float(self.mAUC)},{wall:.3f}"


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)

    def to_csv(self, timing: bool = True) -> str:
        """CSV table; timing=False zeroes wall_time_s so identical runs give identical bytes."""
        return "\n".join([SWEEP_CSV_HEADER] + [row.csv_line(timing) for row in self.rows]) + "\n"

    def to_text(self) -> str:
        lines = [f"{'N':>7} {'frozen':>10} {'trainable':>10} {'mAUC':>8} {'time(s)':>9}"]
        for row in self.rows:
            lines.append(f"{str(row.N):>7} {row.frozen_params:>10} {row.trainable_params:>10} "
                         f"{format_table_float(row.mAUC):>8} {row.wall_time_s:>9.2f}")
        return "\n".join(lines)


def parse_freeze_values(values: Sequence[FreezeValue], num_stages: int) -> List[FreezeValue]:
    """
    Normalize and check a list of freeze depths ("linear" allowed).

    Raises:
        ConfigError: Listing every value outside 0..num_stages
    """
    parsed, violations = [], []
    for value in values:
        if isinstance(value, str):
            text = value.strip()
            if text == LINEAR_HEAD_LABEL:
                parsed.append(LINEAR_HEAD_LABEL)
                continue
            try:
                value = int(text)
            except ValueError:
                violations.append(f"sweep.N: {text!r} is neither an integer nor {LINEAR_HEAD_LABEL!r}")
                continue
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= num_stages:
            violations.append(f"sweep.N: {value!r} must lie in 0..{num_stages} (stages of the encoder)")
            continue
        parsed.append(value)
    if not values:
        violations.append("sweep.N: at least one value is required")
    if violations:
        raise ConfigError(violations)
    return parsed


def freeze_policy_for(value: FreezeValue, num_stages: int) -> FreezePolicy:
    if value == LINEAR_HEAD_LABEL:
        return FreezePolicy.head_only(num_stages)
    return FreezePolicy(frozen_stages=int(value))


def sweep_freeze(task: FewShotTask, encoder_cfg: EncoderConfig, n_values: Sequence[FreezeValue],
                 head_config: AlignmentHeadConfig, embeddings: Optional[Sequence[SemanticEmbeddingSet]],
                 train_cfg: TrainConfig) -> SweepResult:
    """
    Adapt and evaluate once per freeze depth, all runs sharing the same seeds.

    Every value is checked before the first run starts. trainable_params
    counts everything the run updates, head included.

    Returns:
        Rows in the order given
    """
    values = parse_freeze_values(n_values, encoder_cfg.num_stages)
    result = SweepResult()
    for value in values:
        started = time.perf_counter()
        encoder = build_encoder(encoder_cfg)
        partition = apply_freeze(encoder, freeze_policy_for(value, encoder_cfg.num_stages))
        model, history = adapt(task, encoder, head_config, embeddings, train_cfg)
        report = model.evaluate(task)
        row = SweepRow(N=value, frozen_params=partition.frozen_params, trainable_params=history.trainable_params,
                       mAUC=report.mAUC, wall_time_s=time.perf_counter() - started)
        logger.info(f"Sweep N={value}: {row.frozen_params} frozen, mAUC {row.mAUC:.4f} in {row.wall_time_s:.1f}s")
        result.rows.append(row)
    return result


@dataclass
class SupervisionRow:
    source: str
    mean_offdiag: Optional[float]
    mAUCs: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.mAUCs))

    @property
    def std(self) -> float:
        return float(np.std(self.mAUCs))

    def to_dict(self) -> Dict[str, object]:
        return {"source": self.source, "mean_offdiag": self.mean_offdiag, "mAUC_mean": self.mean,
                "mAUC_std": self.std, "mAUC_runs": list(self.mAUCs)}


@dataclass
class SupervisionComparison:
    rows: List[SupervisionRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [COMPARISON_CSV_HEADER]
        for row in self.rows:
            offdiag = "" if row.mean_offdiag is None else format_float(row.mean_offdiag)
            lines.append(f"{row.source},{offdiag},{format_float(row.mean)},{format_float(row.std)},{len(row.mAUCs)}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = [f"{'source':<16} {'offdiag':>8} {'mAUC':>18}"]
        for row in self.rows:
            offdiag = "-" if row.mean_offdiag is None else format_table_float(row.mean_offdiag, 3)
            lines.append(f"{row.source:<16} {offdiag:>8} "
                         f"{format_table_float(row.mean)} +/- {format_table_float(row.std)}")
        return "\n".join(lines)


def compare_supervision(task: FewShotTask, encoder_cfg: EncoderConfig, policy: FreezePolicy,
                        head_config: AlignmentHeadConfig, sources: Dict[str, Sequence[SemanticEmbeddingSet]],
                        train_cfg: TrainConfig, repeats: int = 1) -> SupervisionComparison:
    """
    Adapt with the one-hot head and with each embedding source on one task.

    Repeat r uses encoder and training seeds offset by r, identical across
    sources, so every source sees the same initializations and batches.

    Args:
        sources: Embedding sets keyed by a label (e.g. "context")
        repeats: Number of seeds per source; mAUC is reported as mean +/- std
    """
    if isinstance(repeats, bool) or not isinstance(repeats, int) or repeats < 1:
        raise ConfigError(f"compare.repeats: must be a positive integer, got {repeats!r}")
    runs = [("one_hot", None)] + [(label, sets) for label, sets in sources.items()]
    comparison = SupervisionComparison()
    for label, sets in runs:
        offdiag = mean_offdiag(correlation_matrix(sets)) if sets is not None else None
        scores = []
        for r in range(repeats):
            encoder = build_encoder(replace(encoder_cfg, seed=encoder_cfg.seed + r))
            apply_freeze(encoder, policy)
            cfg = replace(train_cfg, seed=train_cfg.seed + r, head="one_hot" if sets is None else "semantic")
            model, _ = adapt(task, encoder, head_config, sets, cfg)
            scores.append(model.evaluate(task).mAUC)
        row = SupervisionRow(source=label, mean_offdiag=offdiag, mAUCs=scores)
        logger.info(f"Supervision {label}: mAUC {row.mean:.4f} +/- {row.std:.4f} over {repeats} runs")
        comparison.rows.append(row)
    return comparison
