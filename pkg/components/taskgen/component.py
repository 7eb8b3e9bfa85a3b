import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from constants import EXIT_OK
from core.component import Component
from components.semantics.embeddings import save_embeddings
from utils import ensure_writable

from .dataset_io import save_task
from .generator import PRESETS, generate_task, preset_spec
from .paired import oracle_mauc, paired_semantics

logger = logging.getLogger(__name__)

SEMANTIC_SOURCES = ("context", "class_name", "template")


def semantics_paths(task_path: Path) -> Dict[str, Path]:
    """Where gen-task --with-semantics writes each embedding file (t.bin -> t.context.json, ...)."""
    return {source: task_path.with_suffix(f".{source}.json") for source in SEMANTIC_SOURCES}


class Taskgen(Component):
    """Synthetic task generation."""

    name = "taskgen"

    def __init__(self, cli: Any, settings: Dict[str, Any]):
        super().__init__(cli, settings)
        self.preset: str = self.settings.get("preset", "easy")
        self.paired: Dict[str, Any] = dict(self.settings.get("paired") or {})
        logger.debug("Taskgen component initialized")

    def register(self) -> None:
        parser = self.add_command("gen-task", self.gen_task, help="Generate a synthetic few-shot task file")
        parser.add_argument("--preset", choices=sorted(PRESETS), default=self.preset)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("-o", "--output", required=True, help="Task file to write")
        parser.add_argument("--force", action="store_true", help="Overwrite existing outputs")
        parser.add_argument("--with-semantics", action="store_true",
                            help="Also write context, class-name and template embedding files")
        parser.add_argument("--n-classes", type=int)
        parser.add_argument("--k-shot", type=int)
        parser.add_argument("--query-size", type=int)
        parser.add_argument("--image-size", type=int)
        parser.add_argument("--noise-std", type=float)
        parser.add_argument("--overlap", type=float, dest="pattern_overlap")
        parser.add_argument("--multilabel-prob", type=float)
        parser.add_argument("--oracle", action="store_true", help="Print the nearest-pattern oracle mAUC")

    def gen_task(self, args: argparse.Namespace) -> int:
        spec = preset_spec(args.preset, seed=args.seed, n_classes=args.n_classes, k_shot=args.k_shot,
                           query_size=args.query_size, image_size=args.image_size, noise_std=args.noise_std,
                           pattern_overlap=args.pattern_overlap, multilabel_prob=args.multilabel_prob)
        output = ensure_writable(args.output, args.force)
        extra = semantics_paths(output) if args.with_semantics else {}
        for path in extra.values():
            ensure_writable(path, args.force)

        task = generate_task(spec)
        save_task(task, output)
        if extra:
            paired = paired_semantics(spec, seed=args.seed, **self.paired)
            for source, path in extra.items():
                save_embeddings(path, getattr(paired, source))
                logger.info(f"Wrote {source} embeddings to {path}")

        print(task.summary())
        if args.oracle:
            print(f"nearest-pattern oracle mAUC {oracle_mauc(task).mAUC:.4f}")
        return EXIT_OK
