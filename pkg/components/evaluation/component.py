import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from constants import EXIT_OK
from core.component import Component
from components.adaptation.helpers import add_run_arguments, run_overrides
from components.adaptation.training import AdaptedModel
from components.semantics.correlation import source_label
from components.semantics.embeddings import load_embeddings
from components.taskgen.dataset_io import load_task
from experiment import load_experiment, load_run_inputs, prepare_run_dir, write_snapshot
from utils import ensure_writable, write_text

from .sweep import compare_supervision, parse_freeze_values, sweep_freeze

logger = logging.getLogger(__name__)


def snapshot_dir_for(output: Path) -> Path:
    """Sidecar directory for the config snapshot of a single-file output (sweep.csv -> sweep.run/)."""
    return output.with_suffix(".run")


class Evaluation(Component):
    """Evaluation, freeze sweep and supervision comparison commands."""

    name = "evaluation"

    def __init__(self, cli: Any, settings: Dict[str, Any]):
        super().__init__(cli, settings)
        self.sweep_values: str = str((self.settings.get("sweep") or {}).get("values", "0,1,2,linear"))
        self.repeats: int = int((self.settings.get("compare") or {}).get("repeats", 1))
        logger.debug("Evaluation component initialized")

    def register(self) -> None:
        parser = self.add_command("eval", self.evaluate, help="Evaluate a checkpoint on the query set of a task")
        parser.add_argument("checkpoint", help="Checkpoint written by train")
        parser.add_argument("--task", required=True, help="Task file")
        parser.add_argument("-o", "--output", help="Write the report as JSON")
        parser.add_argument("--force", action="store_true")

        parser = self.add_command("sweep-freeze", self.sweep, help="Adapt and evaluate at several freeze depths")
        add_run_arguments(parser, output_help="CSV file to write")
        parser.add_argument("--values", default=self.sweep_values,
                            help="Comma-separated freeze depths; 'linear' trains the head only")
        parser.add_argument("--no-timing", action="store_true",
                            help="Write 0 in wall_time_s so repeated sweeps produce identical files")

        parser = self.add_command("compare-supervision", self.compare,
                                  help="Compare one-hot and semantic supervision on one task")
        add_run_arguments(parser, output_help="CSV file to write")
        parser.add_argument("--sources", nargs="+", required=True, metavar="[LABEL=]FILE",
                            help="Embedding files, optionally labeled")
        parser.add_argument("--repeats", type=int, default=self.repeats)

    def evaluate(self, args: argparse.Namespace) -> int:
        output = ensure_writable(args.output, args.force) if args.output else None
        model = AdaptedModel.load(args.checkpoint)
        task = load_task(args.task)
        report = model.evaluate(task)
        report.config = {"checkpoint": str(args.checkpoint), "task": str(args.task)}
        print(report.to_text())
        if output is not None:
            write_text(output, report.to_json())
        return EXIT_OK

    def sweep(self, args: argparse.Namespace) -> int:
        config = load_experiment(args.config, run_overrides(args), self.cli.experiment_defaults(),
                                 require=("task", "output"))
        output = ensure_writable(config.paths.output, args.force)
        values = parse_freeze_values([v for v in args.values.split(",") if v.strip()], config.encoder.num_stages)
        write_snapshot(prepare_run_dir(snapshot_dir_for(output), args.force), config)
        task, embeddings = load_run_inputs(config)

        result = sweep_freeze(task, config.encoder, values, config.head, embeddings, config.train)
        write_text(output, result.to_csv(timing=not args.no_timing))
        print(result.to_text())
        return EXIT_OK

    def compare(self, args: argparse.Namespace) -> int:
        sources = {}
        for entry in args.sources:
            label, sep, path = entry.partition("=")
            if not sep:
                label, path = "", entry
            sets = load_embeddings(path)
            label = label or source_label(sets)
            if label in sources:
                label = f"{label}_{len(sources)}"
            sources[label] = sets

        overrides = run_overrides(args)
        overrides["train.head"] = "one_hot"
        config = load_experiment(args.config, overrides, self.cli.experiment_defaults(), require=("task", "output"))
        output = ensure_writable(config.paths.output, args.force)
        write_snapshot(prepare_run_dir(snapshot_dir_for(output), args.force), config)
        task, _ = load_run_inputs(config)

        comparison = compare_supervision(task, config.encoder, config.freeze, config.head, sources,
                                         config.train, repeats=args.repeats)
        write_text(output, comparison.to_csv())
        print(comparison.to_text())
        return EXIT_OK
