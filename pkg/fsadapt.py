"""
fsadapt - few-shot adaptation of vision encoders with semantic guidance

Command-line entry point. Subcommands are contributed by the components
under components/, discovered and configured through their config.yml.
"""

import argparse
import importlib
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import config
from constants import (
    EXIT_CONFIG_ERROR,
    EXIT_IO_ERROR,
    EXIT_OK,
    EXIT_VERIFICATION_FAILED,
    LOG_DATE_FORMAT,
    LOG_FORMAT,
)
from errors import (
    ConfigError,
    FormatError,
    FsAdaptError,
    InputError,
    TaskError,
    VerificationFailure,
)

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], Optional[int]]


def setup_logging(level: Optional[int] = None, log_dir: Optional[str] = None) -> None:
    """
    Configure the root logger: a daily file under log_dir plus stderr.

    stdout stays free for command output. An empty log_dir disables the file.
    """
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_dir:
        logs_dir = Path(log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(logs_dir / f'fsadapt_{datetime.now().strftime("%Y%m%d")}.log'))

    logging.basicConfig(
        level=config.get_log_level() if level is None else level,
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        handlers=handlers,
        force=True,
    )


class FsAdaptCLI:
    """Argument parser plus the components that register commands on it."""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog="fsadapt", description="Few-shot adaptation with partial freezing and semantic guidance.")
        self.parser.add_argument("--log-level", choices=config.LOG_LEVELS, default=None,
                                 help="Override FSADAPT_LOG_LEVEL")
        self.parser.add_argument("--log-dir", default=config.LOG_DIR,
                                 help="Directory for daily log files (empty disables)")
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="command")
        self.commands: Dict[str, str] = {}
        self.components: Dict[str, Any] = {}
        self.add_command("components", self.list_components, help="List discovered components and their status")

    def add_command(self, name: str, handler: Handler, help: str, component: str = "") -> argparse.ArgumentParser:
        if name in self.commands:
            raise ConfigError(f"command {name!r} is registered by both {self.commands[name]} and {component}")
        parser = self.subparsers.add_parser(name, help=help, description=help)
        parser.set_defaults(handler=handler)
        self.commands[name] = component
        return parser

    def list_components(self, args: argparse.Namespace) -> int:
        from core.component_loader import get_component_loader

        rows = get_component_loader().list_components()
        print(f"Components: {len(rows)} discovered, {len(self.components)} loaded")
        for meta in rows:
            status = "loaded" if meta.name in self.components else ("disabled" if not meta.enabled else "failed")
            print(f"  {meta.name:<12} {meta.version:<8} {status}")
        return EXIT_OK

    def add_component(self, component: Any) -> None:
        component.register()
        self.components[component.name] = component

    def experiment_defaults(self) -> Dict[str, Dict[str, Any]]:
        """Section defaults contributed by the loaded components."""
        defaults: Dict[str, Dict[str, Any]] = {}
        for component in self.components.values():
            for section, values in component.experiment_defaults().items():
                defaults.setdefault(section, {}).update(values or {})
        return defaults

    def load_components(self) -> None:
        """Load every enabled component, generating missing configs."""
        from core.component_loader import get_component_loader

        loader = get_component_loader()
        names = loader.discover_components()

        loaded, skipped, failed = [], [], []
        logger.debug(f"Discovered {len(names)} components")

        for name in names:
            try:
                if not loader.is_enabled(name):
                    skipped.append(name)
                    logger.info(f"Skipped {name} (disabled in config)")
                    continue
                module = importlib.import_module(loader.get_load_path(name))
                module.setup(self, loader.get_settings(name))
                loaded.append(name)
                logger.debug(f"Loaded component: {name}")
            except Exception as e:
                failed.append((name, str(e)))
                logger.error(f"Failed to load component {name}: {e}")

        logger.debug(f"Loaded {len(loaded)}/{len(names)} components: {', '.join(loaded)}")
        if skipped:
            logger.info(f"Skipped {len(skipped)} disabled components: {', '.join(skipped)}")
        if failed:
            logger.warning(f"Failed to load {len(failed)} components:")
            for name, error in failed:
                logger.warning(f"  - {name}: {error}")

    def handle_error(self, command: str, error: BaseException) -> int:
        """Map an exception to an exit code."""
        if isinstance(error, (ConfigError, TaskError)):
            logger.error(f"{command}: configuration error: {error}")
            return EXIT_CONFIG_ERROR
        elif isinstance(error, (FormatError, InputError, OSError)):
            logger.error(f"{command}: {error}")
            return EXIT_IO_ERROR
        elif isinstance(error, VerificationFailure):
            logger.error(f"{command}: verification failed: {error}")
            return EXIT_VERIFICATION_FAILED
        elif isinstance(error, FsAdaptError):
            logger.error(f"{command} failed: {error}")
            return EXIT_VERIFICATION_FAILED
        else:
            logger.error(f"Unexpected error in {command}: {error}", exc_info=True)
            return EXIT_VERIFICATION_FAILED

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        if getattr(args, "handler", None) is None:
            self.parser.print_help(sys.stderr)
            return EXIT_CONFIG_ERROR
        try:
            result = args.handler(args)
        except Exception as e:
            return self.handle_error(args.command, e)
        return EXIT_OK if result is None else int(result)


def _global_flags() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--log-level", choices=config.LOG_LEVELS, default=None)
    parser.add_argument("--log-dir", default=config.LOG_DIR)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    raw = list(sys.argv[1:] if argv is None else argv)
    cli = FsAdaptCLI()
    try:
        early, _ = _global_flags().parse_known_args(raw)
        level = getattr(logging, early.log_level) if early.log_level else None
        setup_logging(level, early.log_dir)
        cli.load_components()
    except ConfigError as e:
        logger.critical(f"Invalid environment configuration: {e}")
        return EXIT_CONFIG_ERROR
    return cli.run(raw)


if __name__ == "__main__":
    sys.exit(main())
