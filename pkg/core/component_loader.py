"""
Component loader for fsadapt.

Discovers component packages, loads their config.yml (regenerating it from the
component's DEFAULT_CONFIG when missing) and imports enabled components so they
can register their commands.
"""

import importlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from config import COMPONENTS_DIR
from constants import COMPONENT_CONFIG_FILE

logger = logging.getLogger(__name__)


@dataclass
class ComponentMetadata:
    """Metadata about a component."""
    name: str
    path: Path
    has_config: bool
    enabled: bool
    version: str = "1.0.0"


class ComponentLoader:
    """Manages component discovery and per-component configuration."""

    def __init__(self, components_dir: str = COMPONENTS_DIR, package: str = "components"):
        self.components_dir = Path(components_dir)
        if not self.components_dir.is_absolute() and not self.components_dir.exists():
            # Resolve relative to the repository when run from elsewhere
            self.components_dir = Path(__file__).resolve().parent.parent / components_dir
        self.package = package

    def discover_components(self) -> List[str]:
        """Return the sorted names of component packages."""
        if not self.components_dir.is_dir():
            logger.warning(f"Components directory not found: {self.components_dir}")
            return []

        names = []
        for item in self.components_dir.iterdir():
            if item.name.startswith(("_", ".")):
                continue
            if item.is_dir() and (item / "__init__.py").exists():
                names.append(item.name)
                logger.debug(f"Discovered component: {item.name}")
        return sorted(names)

    def get_config_path(self, name: str) -> Path:
        return self.components_dir / name / COMPONENT_CONFIG_FILE

    def get_default_config(self, name: str) -> Dict[str, Any]:
        """Read DEFAULT_CONFIG from the component package, or fall back to a generic one."""
        try:
            module = importlib.import_module(f"{self.package}.{name}")
            default = getattr(module, "DEFAULT_CONFIG", None)
            if isinstance(default, dict):
                return default
        except ImportError as e:
            logger.debug(f"Could not import defaults for {name}: {e}")
        return {"enabled": True, "version": "1.0.0", "settings": {}}

    def load_config(self, name: str) -> Dict[str, Any]:
        """Load config for a component, writing the default if none exists."""
        config_path = self.get_config_path(name)
        if not config_path.exists():
            default = self.get_default_config(name)
            self.save_config(name, default)
            return default

        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
            logger.debug(f"Loaded config for {name}")
            return config
        except (OSError, yaml.YAMLError) as e:
            logger.error(f"Failed to load config for {name}: {e}")
            return self.get_default_config(name)

    def save_config(self, name: str, config: Dict[str, Any]) -> None:
        config_path = self.get_config_path(name)
        try:
            config_path.parent.mkdir(parents=True, exist_ok=True)
            with open(config_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(config, f, default_flow_style=False, sort_keys=False)
            logger.info(f"Generated default config for {name}")
        except OSError as e:
            logger.error(f"Failed to save config for {name}: {e}")

    def get_settings(self, name: str) -> Dict[str, Any]:
        """Component settings merged over the component's defaults."""
        defaults = self.get_default_config(name).get("settings") or {}
        settings = self.load_config(name).get("settings") or {}
        return {**defaults, **settings}

    def is_enabled(self, name: str) -> bool:
        return bool(self.load_config(name).get("enabled", True))

    def get_load_path(self, name: str) -> str:
        return f"{self.package}.{name}"

    def list_components(self) -> List[ComponentMetadata]:
        """List all discovered components with their metadata."""
        components = []
        for name in self.discover_components():
            config = self.load_config(name)
            components.append(ComponentMetadata(
                name=name,
                path=self.components_dir / name,
                has_config=self.get_config_path(name).exists(),
                enabled=config.get("enabled", True),
                version=str(config.get("version", "1.0.0")),
            ))
        return components


# Global loader instance
_loader: Optional[ComponentLoader] = None


def get_component_loader() -> ComponentLoader:
    """Get the global component loader instance."""
    global _loader
    if _loader is None:
        _loader = ComponentLoader()
    return _loader
