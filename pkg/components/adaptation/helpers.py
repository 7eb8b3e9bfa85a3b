"""
Helper functions for the Adaptation component: the experiment flags shared by
train, sweep-freeze and compare-supervision.
"""

import argparse
from typing import Any, Dict

from components.semantics.alignment import HEAD_KINDS


def add_run_arguments(parser: argparse.ArgumentParser, output_help: str) -> None:
    """Flags that override experiment config values."""
    parser.add_argument("--config", help="Experiment config file (JSON, or YAML by suffix)")
    parser.add_argument("--task", help="Task file (overrides paths.task)")
    parser.add_argument("--embeddings", help="Embedding file (overrides paths.embeddings)")
    parser.add_argument("--head", choices=HEAD_KINDS, help="Head type (overrides train.head)")
    parser.add_argument("--seed", type=int, help="Seed for the whole run (overrides every section seed)")
    parser.add_argument("--epochs", type=int, help="Overrides train.epochs")
    parser.add_argument("--frozen-stages", type=int, help="Overrides freeze.frozen_stages")
    parser.add_argument("-o", "--output", help=output_help)
    parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")


def run_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "paths.task": args.task,
        "paths.embeddings": args.embeddings,
        "paths.output": args.output,
        "train.head": args.head,
        "seed": args.seed,
        "train.epochs": args.epochs,
        "freeze.frozen_stages": args.frozen_stages,
    }
