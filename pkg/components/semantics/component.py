import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from constants import EXIT_OK
from core.component import Component
from utils import ensure_writable, write_text

from .contexts import SupervisionSource, load_contexts
from .embedder import toy_embed
from .embeddings import save_embeddings
from .helpers import analyze_files, comparison_csv, comparison_table, convert_contexts, ordering_line

logger = logging.getLogger(__name__)


class Semantics(Component):
    """Context embedding and embedding analysis commands."""

    name = "semantics"

    def __init__(self, cli: Any, settings: Dict[str, Any]):
        super().__init__(cli, settings)
        self.toy_embed: Dict[str, Any] = dict(self.settings.get("toy_embed") or {})
        logger.debug("Semantics component initialized")

    def experiment_defaults(self) -> Dict[str, Dict[str, Any]]:
        return {"head": dict(self.settings.get("head") or {})}

    def register(self) -> None:
        parser = self.add_command("embed-contexts", self.embed_contexts,
                                  help="Embed a context file into mask-token embedding sets")
        parser.add_argument("contexts", help="Context file (JSON)")
        parser.add_argument("-o", "--output", required=True, help="Embedding file to write")
        parser.add_argument("--as", dest="as_source", choices=[s.value for s in SupervisionSource],
                            help="Rebuild every class as this supervision source first")
        parser.add_argument("--dim", type=int, default=self.toy_embed.get("dim", 32))
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--force", action="store_true")

        parser = self.add_command("analyze-embeddings", self.analyze_embeddings,
                                  help="Inter-class correlation matrices of embedding files")
        parser.add_argument("files", nargs="+", help="Embedding files")
        parser.add_argument("-o", "--output", help="Directory for per-file matrix CSVs and comparison.csv")
        parser.add_argument("--force", action="store_true")

    def embed_contexts(self, args: argparse.Namespace) -> int:
        output = ensure_writable(args.output, args.force)
        task_name, contexts = load_contexts(args.contexts)
        contexts = convert_contexts(contexts, args.as_source)
        settings = {k: v for k, v in self.toy_embed.items() if k != "dim"}
        sets = [toy_embed(ctx, args.dim, seed=args.seed, **settings) for ctx in contexts]
        save_embeddings(output, sets)
        masks = sum(s.m for s in sets)
        print(f"Embedded {len(sets)} classes of {task_name or args.contexts} ({masks} tokens, dim {args.dim}) to {output}")
        return EXIT_OK

    def analyze_embeddings(self, args: argparse.Namespace) -> int:
        out_dir = Path(args.output) if args.output else None
        if out_dir is not None:
            ensure_writable(out_dir / "comparison.csv", args.force)

        results = analyze_files(args.files)
        for r in results:
            print(f"== {r.path} ({r.source}, {len(r.class_ids)} classes) ==")
            print(r.grid())
            print()
        print(comparison_table(results))
        if len(results) > 1:
            print(f"ordering: {ordering_line(results)}")

        if out_dir is not None:
            for r in results:
                write_text(out_dir / f"{r.path.stem}.correlation.csv", r.csv())
            write_text(out_dir / "comparison.csv", comparison_csv(results))
            logger.info(f"Wrote correlation CSVs to {out_dir}")
        return EXIT_OK
