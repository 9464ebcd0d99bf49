"""
Configuration Loader

Loads the built-in defaults from config.json at the project root and gives
dot-path access to them. Operator config files (YAML or JSON) are merged on
top of these defaults by utils.run_config.
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

DEFAULTS_PATH = Path(__file__).parent.parent / "config.json"


class ConfigLoader:
    """Singleton class to load and cache the built-in defaults."""

    _instance = None
    _config = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(ConfigLoader, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        if self._config is None:
            self._load_config()

    def _load_config(self):
        """Load config.json from the project root; a missing file means no defaults."""
        if not DEFAULTS_PATH.exists():
            self._config = {}
            return

        try:
            with open(DEFAULTS_PATH, 'r', encoding='utf-8') as f:
                self._config = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in config.json: {e}")

    def get(self, path: str, default: Any = None) -> Any:
        """
        Get a configuration value using dot notation.

        Args:
            path: Dot-separated path to the config value (e.g., "training.soft.lambda_penalty")
            default: Default value to return if path is not found

        Returns:
            The configuration value or default if not found

        Examples:
            >>> config = ConfigLoader()
            >>> config.get("training.hard.baseline_decay")
            0.9
        """
        if self._config is None:
            self._load_config()

        value = self._config
        for key in path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return copy.deepcopy(value)


_config_loader = None


def _get_loader() -> ConfigLoader:
    global _config_loader
    if _config_loader is None:
        _config_loader = ConfigLoader()
    return _config_loader


def get_config(path: str, default: Any = None) -> Any:
    """Convenience function to get a default by dot path."""
    return _get_loader().get(path, default)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """
    Read an operator config file.

    YAML is parsed with safe_load, so JSON files are accepted as well.

    Raises:
        FileNotFoundError: path does not exist
        ValueError: the file does not contain a mapping
    """
    if not path:
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain a mapping, got {type(data).__name__}")
    return data


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base; None values do not override."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged
