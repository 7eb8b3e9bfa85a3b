"""
Experiment configuration: one JSON (or YAML) document with a section per
concern, strict key checking, flag overrides and config/metadata snapshots.
"""

import copy
import json
import logging
import platform
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from config import raise_if_invalid, validate_config_dict
from constants import CONFIG_SNAPSHOT_FILE, METADATA_FILE
from components.adaptation.training import TrainConfig
from components.encoder.encoder import EncoderConfig, FreezePolicy
from components.semantics.alignment import AlignmentHeadConfig
from components.semantics.embeddings import SemanticEmbeddingSet, load_embeddings
from components.taskgen.dataset_io import load_task
from components.taskgen.generator import FewShotTask
from errors import ConfigError
from utils import PathLike, ensure_writable, load_structured_file, write_json

logger = logging.getLogger(__name__)

SECTIONS = ("seed", "paths", "encoder", "freeze", "head", "train", "eval")
SEEDED_SECTIONS = ("encoder", "train")


@dataclass(frozen=True)
class PathsConfig:
    task: Optional[str] = None
    embeddings: Optional[str] = None
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "paths") -> "PathsConfig":
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        bad = [f"{name}.{k}: must be a string path, got {v!r}" for k, v in data.items()
               if v is not None and not isinstance(v, str)]
        raise_if_invalid(bad)
        return cls(**data)


@dataclass(frozen=True)
class EvalOptions:
    text_report: bool = True
    oracle: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any], name: str = "eval") -> "EvalOptions":
        raise_if_invalid(validate_config_dict(data, [f.name for f in fields(cls)], name))
        bad = [f"{name}.{k}: must be a boolean, got {v!r}" for k, v in data.items() if not isinstance(v, bool)]
        raise_if_invalid(bad)
        return cls(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a train/eval/sweep run needs, as snapshotted to config.json."""

    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    freeze: FreezePolicy = field(default_factory=FreezePolicy)
    head: AlignmentHeadConfig = field(default_factory=AlignmentHeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "paths": asdict(self.paths),
            "encoder": self.encoder.to_dict(),
            "freeze": self.freeze.to_dict(),
            "head": self.head.to_dict(),
            "train": self.train.to_dict(),
            "eval": asdict(self.eval),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], defaults: Optional[Dict[str, Dict[str, Any]]] = None,
                  require: Sequence[str] = ()) -> "ExperimentConfig":
        """
        Parse and validate a whole experiment document.

        Section defaults (from component settings) sit under the document's
        values. Section seeds fall back to the top-level seed. Violations from
        every section are collected and raised together.

        Raises:
            ConfigError: Listing unknown keys and every violated constraint
        """
        data = {} if data is None else data
        violations = validate_config_dict(data, SECTIONS, "config")
        if violations:
            raise ConfigError(violations)

        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            violations.append(f"config.seed: must be a non-negative integer, got {seed!r}")
            seed = 0

        merged: Dict[str, Dict[str, Any]] = {}
        for name in SECTIONS[1:]:
            value = data.get(name) or {}
            if not isinstance(value, dict):
                violations.append(f"{name}: must be a mapping, got {type(value).__name__}")
                value = {}
            section = copy.deepcopy((defaults or {}).get(name) or {})
            section.update(value)
            if name in SEEDED_SECTIONS:
                section.setdefault("seed", seed)
            merged[name] = section

        parsers = {
            "paths": PathsConfig.from_dict,
            "encoder": EncoderConfig.from_dict,
            "freeze": FreezePolicy.from_dict,
            "head": AlignmentHeadConfig.from_dict,
            "train": TrainConfig.from_dict,
            "eval": EvalOptions.from_dict,
        }
        parsed: Dict[str, Any] = {}
        for name, parse in parsers.items():
            try:
                parsed[name] = parse(merged[name])
            except ConfigError as e:
                violations.extend(e.violations)
            except TypeError as e:
                violations.append(f"{name}: {e}")

        if "encoder" in parsed and "freeze" in parsed:
            violations += parsed["freeze"].validate(parsed["encoder"].num_stages)
        if "paths" in parsed and "train" in parsed:
            paths, train = parsed["paths"], parsed["train"]
            if train.head == "semantic" and not paths.embeddings:
                violations.append("paths.embeddings: required when train.head is 'semantic'")
            violations += [f"paths.{key}: required by this command" for key in require if not getattr(paths, key)]
        raise_if_invalid(violations)
        return cls(seed=seed, **parsed)


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply dotted-key flag overrides ("train.epochs": 5) to a config document.

    A "seed" override also replaces the encoder and train seeds so one flag
    reseeds the whole run. None values are ignored.
    """
    result = copy.deepcopy(data or {})
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            result["seed"] = value
            for name in SEEDED_SECTIONS:
                section = result.get(name)
                if isinstance(section, dict):
                    section.pop("seed", None)
            continue
        section, _, leaf = key.partition(".")
        target = result.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigError(f"{section}: must be a mapping to override {key}")
        target[leaf] = value
    return result


def load_experiment(path: Optional[PathLike], overrides: Optional[Dict[str, Any]] = None,
                    defaults: Optional[Dict[str, Dict[str, Any]]] = None,
                    require: Sequence[str] = ()) -> ExperimentConfig:
    """Read a config file (or start empty), apply flag overrides and validate."""
    data: Dict[str, Any] = {}
    if path is not None:
        data = load_structured_file(path)
        if not isinstance(data, dict):
            raise ConfigError(f"config: {path} must contain a mapping")
        logger.debug(f"Loaded experiment config from {path}")
    return ExperimentConfig.from_dict(apply_overrides(data, overrides or {}), defaults, require)


def write_snapshot(output_dir: PathLike, config: ExperimentConfig) -> Path:
    """Write config.json; called before any compute."""
    path = write_json(Path(output_dir) / CONFIG_SNAPSHOT_FILE, config.to_dict())
    logger.info(f"Wrote config snapshot to {path}")
    return path


def write_metadata(output_dir: PathLike, command: str, started: datetime,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """Timestamps and versions live here, apart from the deterministic outputs."""
    finished = datetime.now(timezone.utc)
    metadata = {
        "command": command,
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "duration_s": (finished - started).total_seconds(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    metadata.update(extra or {})
    return write_json(Path(output_dir) / METADATA_FILE, metadata)


def prepare_run_dir(output_dir: PathLike, force: bool = False) -> Path:
    """
    Create a run directory, refusing to reuse one that already holds a run.

    Raises:
        OutputExistsError: If the directory has a config snapshot and force is False
    """
    output_dir = Path(output_dir)
    ensure_writable(output_dir / CONFIG_SNAPSHOT_FILE, force)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def load_run_inputs(config: ExperimentConfig) -> Tuple[FewShotTask, Optional[List[SemanticEmbeddingSet]]]:
    """Load the task and, for a semantic head, the embedding sets named in paths."""
    task = load_task(config.paths.task)
    embeddings = None
    if config.train.head == "semantic":
        embeddings = load_embeddings(config.paths.embeddings)
    logger.info(f"Loaded task {task.summary()} from {config.paths.task}")
    return task, embeddings
