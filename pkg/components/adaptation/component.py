import argparse
import logging
from datetime import datetime, timezone
from typing import Any, Dict

from constants import CHECKPOINT_FILE, CONFIG_SNAPSHOT_FILE, EXIT_OK, HISTORY_FILE, REPORT_FILE, REPORT_TEXT_FILE
from core.component import Component
from components.encoder.encoder import EncoderConfig, apply_freeze, build_encoder
from components.taskgen.paired import oracle_mauc
from errors import VerificationFailure
from experiment import load_experiment, load_run_inputs, prepare_run_dir, write_metadata, write_snapshot
from utils import format_duration, write_json, write_text

from .helpers import add_run_arguments, run_overrides
from .pipeline import gradcheck_pipeline
from .training import adapt

logger = logging.getLogger(__name__)


class Adaptation(Component):
    """Training and gradient-check commands."""

    name = "adaptation"

    def __init__(self, cli: Any, settings: Dict[str, Any]):
        super().__init__(cli, settings)
        self.gradcheck_settings: Dict[str, Any] = dict(self.settings.get("gradcheck") or {})
        logger.debug("Adaptation component initialized")

    def experiment_defaults(self) -> Dict[str, Dict[str, Any]]:
        return {"train": dict(self.settings.get("train") or {})}

    def register(self) -> None:
        parser = self.add_command("train", self.train, help="Adapt an encoder on a task and evaluate it")
        add_run_arguments(parser, output_help="Run directory (overrides paths.output)")
        parser.add_argument("--eval-every-epoch", action="store_true", help="Record query mAUC after each epoch")

        parser = self.add_command("gradcheck", self.gradcheck,
                                  help="Compare backward() with finite differences on a small pipeline")
        parser.add_argument("--image-size", type=int, default=32)
        parser.add_argument("--patch-size", type=int, default=8)
        parser.add_argument("--stages", type=int, default=2)
        parser.add_argument("--blocks", type=int, default=1, help="Blocks per stage")
        parser.add_argument("--width", type=int, default=16)
        parser.add_argument("--heads", type=int, default=2)
        parser.add_argument("--classes", type=int, default=3)
        parser.add_argument("--batch", type=int, default=2)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--eps", type=float, default=self.gradcheck_settings.get("eps", 1e-5))
        parser.add_argument("--tolerance", type=float, default=self.gradcheck_settings.get("tolerance", 1e-4))
        parser.add_argument("--coords", type=int, default=self.gradcheck_settings.get("coords_per_tensor", 8),
                            help="Coordinates sampled per parameter tensor")
        parser.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    def train(self, args: argparse.Namespace) -> int:
        started = datetime.now(timezone.utc)
        overrides = run_overrides(args)
        if args.eval_every_epoch:
            overrides["train.eval_every_epoch"] = True
        config = load_experiment(args.config, overrides, self.cli.experiment_defaults(), require=("task", "output"))

        out = prepare_run_dir(config.paths.output, args.force)
        write_snapshot(out, config)
        task, embeddings = load_run_inputs(config)

        encoder = build_encoder(config.encoder)
        apply_freeze(encoder, config.freeze)
        model, history = adapt(task, encoder, config.head, embeddings, config.train)
        history.config = config.to_dict()

        report = model.evaluate(task)
        report.config = {"snapshot": CONFIG_SNAPSHOT_FILE, "seed": config.seed}
        if config.eval.oracle:
            report.extra["oracle_mAUC"] = oracle_mauc(task).mAUC

        model.save(out / CHECKPOINT_FILE)
        write_json(out / HISTORY_FILE, history.to_dict())
        write_text(out / REPORT_FILE, report.to_json())
        if config.eval.text_report:
            write_text(out / REPORT_TEXT_FILE, report.to_text())
        write_metadata(out, "train", started)

        elapsed = (datetime.now(timezone.utc) - started).total_seconds()
        print(f"mAUC {report.mAUC:.4f} ({model.kind} head, {len(history.epochs)} epochs, "
              f"{format_duration(elapsed)}) -> {out}")
        return EXIT_OK

    def gradcheck(self, args: argparse.Namespace) -> int:
        encoder_cfg = EncoderConfig(image_size=args.image_size, patch_size=args.patch_size, channels=1,
                                    stages=tuple((args.blocks, args.width) for _ in range(args.stages)),
                                    heads=args.heads, output_dim=args.width, seed=args.seed)
        report = gradcheck_pipeline(encoder_cfg, n_classes=args.classes, batch=args.batch, seed=args.seed,
                                    eps=args.eps, tolerance=args.tolerance, coords_per_tensor=args.coords,
                                    corrupt_gradient=args.corrupt_gradient)
        print(report.to_text())
        if not report.passed:
            raise VerificationFailure(f"max relative error {report.max_rel_err:.3e} exceeds {report.tolerance:.0e}")
        return EXIT_OK
