import argparse
import logging
from typing import Any, Dict

from constants import EXIT_OK, LINEAR_HEAD_LABEL
from core.component import Component
from experiment import load_experiment

from .encoder import FreezePolicy, apply_freeze, build_encoder

logger = logging.getLogger(__name__)


class EncoderComponent(Component):
    """Encoder inspection commands and experiment defaults."""

    name = "encoder"

    def experiment_defaults(self) -> Dict[str, Dict[str, Any]]:
        return {key: self.settings[key] for key in ("encoder", "freeze") if self.settings.get(key)}

    def register(self) -> None:
        parser = self.add_command("freeze-table", self.freeze_table,
                                  help="Show frozen/trainable parameter counts for every freeze depth")
        parser.add_argument("--config", help="Experiment config (only the encoder section is used)")

    def freeze_table(self, args: argparse.Namespace) -> int:
        config = load_experiment(args.config, {"train.head": "one_hot"}, self.cli.experiment_defaults())
        cfg = config.encoder
        print(f"{'N':>7} {'frozen':>10} {'trainable':>10}")
        policies = [(str(n), FreezePolicy(frozen_stages=n)) for n in range(cfg.num_stages + 1)]
        policies.append((LINEAR_HEAD_LABEL, FreezePolicy.head_only(cfg.num_stages)))
        for label, policy in policies:
            report = apply_freeze(build_encoder(cfg), policy)
            print(f"{label:>7} {report.frozen_params:>10} {report.trainable_params:>10}")
        return EXIT_OK
