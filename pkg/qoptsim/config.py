"""
Layered YAML settings for qoptsim.

Files are read in order and later keys win:

1. ``defaults.yml`` shipped with the package
2. ``machine.yml`` next to the package (per installation)
3. ``_config.yml`` in the working directory (per project)

String values get environment variables expanded. The merged mapping is
checked once at import and exposed as ``config``.
"""

import logging
import math
import os
from typing import Any, Dict, Iterable

import yaml

logger = logging.getLogger(__name__)

default_file: str = os.path.join(os.path.dirname(__file__), "defaults.yml")
local_file: str = os.path.abspath(
    os.path.join(os.path.dirname(__file__), "machine.yml")
)
user_file: str = "_config.yml"

POSITIVE_KEYS = (
    "wavelength_nm",
    "bandwidth_nm",
    "pair_rate",
    "singles_rate",
    "duration_s",
    "tolerance",
)


def _positive(settings: Dict[str, Any], key: str) -> None:
    value = settings.get(key)
    if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
        raise ValueError(f"config key {key!r} must be a positive number, got {value!r}")


def check_config(settings: Dict[str, Any]) -> Dict[str, Any]:
    """Reject settings the simulator cannot run with."""
    for key in POSITIVE_KEYS:
        _positive(settings, key)
    angles = settings.get("chsh_angles_deg")
    if not isinstance(angles, list) or len(angles) != 4:
        raise ValueError(f"chsh_angles_deg must list four angles, got {angles!r}")
    for key in ("hom_pair", "fringe_pair"):
        pair = settings.get(key)
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValueError(f"{key} must name two detectors, got {pair!r}")
    analyzers = settings.get("analyzers") or {}
    for site in ("alice", "bob"):
        if set(analyzers.get(site) or {}) != {"hwp", "plus", "minus"}:
            raise ValueError(f"analyzers.{site} needs hwp, plus and minus entries")
    return settings


def load_config(paths: Iterable[str]) -> Dict[str, Any]:
    """Merge the YAML files that exist among ``paths``, later files winning."""
    paths = list(paths)
    settings: Dict[str, Any] = {}
    for path in paths:
        if not os.path.exists(path):
            continue
        with open(path) as file:
            layer = yaml.safe_load(file) or {}
        logger.debug(f"Loaded {len(layer)} settings from {path}")
        settings.update(layer)

    if settings == {}:
        raise ValueError(
            "No configuration file found at any of " + ", ".join(paths) + "."
        )

    for key, item in settings.items():
        if isinstance(item, str):
            settings[key] = os.path.expandvars(item)
    return check_config(settings)


config: Dict[str, Any] = load_config([default_file, local_file, user_file])
