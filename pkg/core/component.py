"""
Base class for toolkit components.

A component bundles a group of CLI commands with the settings from its
config.yml. Packages expose `setup(cli, settings)`, which constructs the
component and hands it to the CLI.
"""

import argparse
import logging
from typing import Any, Dict

logger = logging.getLogger(__name__)


class Component:
    """A named group of commands plus the settings they run with."""

    name = "component"

    def __init__(self, cli: Any, settings: Dict[str, Any]):
        self.cli = cli
        self.settings = settings or {}

    def register(self) -> None:
        """Attach this component's subcommands to the CLI."""

    def experiment_defaults(self) -> Dict[str, Dict[str, Any]]:
        """Per-section defaults this component contributes to experiment configs."""
        return {}

    def add_command(self, name: str, handler, help: str) -> argparse.ArgumentParser:
        return self.cli.add_command(name, handler, help=help, component=self.name)
