"""Run configuration: defaults, flat YAML config files, flag overrides and the run manifest."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from . import __version__
from .constants import (
    DEFAULT_N_DAYS, DEFAULT_SLOTS_PER_DAY, DEFAULT_START_POINT, DEFAULT_TARGET_TRIGGERS,
    DEFAULT_TRIGGER_CAP, DEFAULT_STATIC_LO, DEFAULT_STATIC_HI, DEFAULT_RANDOM_TRIGGER_COUNT,
    DEFAULT_ADHERENCE_RATE, DEFAULT_PARAM_LO, DEFAULT_PARAM_HI, DEFAULT_SUBJECTS, DEFAULT_SEED,
    DEFAULT_GRID_START_POINTS, DEFAULT_GRID_ALPHA_POINTS, DEFAULT_MIN_INTERACTIONS,
    DEFAULT_TIMEZONE, TIMESTAMP_MERGE, UTILITY_SIGN_NEGATED
)
from .core import PathLike, StudyDesign, available_workers
from .errors import ConfigError
from .simulate import SimConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

DEFAULT_SETTINGS: Dict[str, Any] = {
    # Study design
    "n_days": DEFAULT_N_DAYS,
    "slots_per_day": DEFAULT_SLOTS_PER_DAY,
    "total_slots": None,
    "start_point": DEFAULT_START_POINT,
    "target_triggers": DEFAULT_TARGET_TRIGGERS,
    "trigger_cap": DEFAULT_TRIGGER_CAP,
    "static_lo": DEFAULT_STATIC_LO,
    "static_hi": DEFAULT_STATIC_HI,
    "random_trigger_count": DEFAULT_RANDOM_TRIGGER_COUNT,
    "static_uses_cap": True,
    "static_uses_start_point": True,
    "random_full_window": False,
    # Simulation
    "subjects": DEFAULT_SUBJECTS,
    "chi": DEFAULT_ADHERENCE_RATE,
    "param_lo": DEFAULT_PARAM_LO,
    "param_hi": DEFAULT_PARAM_HI,
    "seed": DEFAULT_SEED,
    "workers": None,
    # Evaluation
    "n_bar_prime": None,
    "utility_sign": UTILITY_SIGN_NEGATED,
    # Ingestion
    "min_interactions": DEFAULT_MIN_INTERACTIONS,
    "timezone": DEFAULT_TIMEZONE,
    "timestamp_mode": TIMESTAMP_MERGE,
    "timestamp_format": None,
    "delimiter": ",",
    # Design grid
    "grid_start_points": DEFAULT_GRID_START_POINTS,
    "grid_alpha_points": DEFAULT_GRID_ALPHA_POINTS,
}

_DESIGN_KEYS = (
    "n_days", "slots_per_day", "start_point", "target_triggers", "trigger_cap", "static_lo",
    "static_hi", "random_trigger_count", "static_uses_cap", "static_uses_start_point",
    "random_full_window",
)


def load_config_file(path: PathLike) -> Dict[str, Any]:
    """Read a flat YAML document of setting overrides.

    Args:
        path: YAML file; an empty document means no overrides.

    Returns:
        The overrides, validated against the known setting names.
    """
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config file: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from err

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping of setting names to values")
    unknown = sorted(set(data) - set(DEFAULT_SETTINGS))
    if unknown:
        raise ConfigError(f"{path}: unknown settings {unknown}")
    nested = sorted(k for k, v in data.items() if isinstance(v, (dict, list)))
    if nested:
        raise ConfigError(f"{path}: settings must be scalars, got nested values for {nested}")
    return data


def resolve_settings(
    file_values: Optional[Dict[str, Any]] = None, flag_values: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Merge defaults, config-file values and explicit flags, in that order.

    Flags whose value is None were not given and do not override anything.
    """
    settings = DEFAULT_SETTINGS.copy()
    if file_values:
        settings.update(file_values)
    if flag_values:
        settings.update({k: v for k, v in flag_values.items() if v is not None})
    return settings


@dataclass
class RunConfig:
    """Resolved configuration of one CLI run.

    Attributes:
        command: Subcommand name.
        settings: Resolved flat settings.
        output_dir: Directory receiving every artifact and the manifest.
        inputs: Input paths and selectors of the subcommand.
        config_file: Config file the settings were read from, if any.
    """

    command: str
    settings: Dict[str, Any]
    output_dir: Path
    inputs: Dict[str, Any] = field(default_factory=dict)
    config_file: Optional[str] = None

    @property
    def design(self) -> StudyDesign:
        """The study design, with ``total_slots`` resolved into ``n_days``."""
        values = {key: self.settings[key] for key in _DESIGN_KEYS}
        total = self.settings.get("total_slots")
        if total is not None:
            per_day = values["slots_per_day"]
            if total % per_day:
                raise ConfigError(f"total_slots={total} is not a multiple of slots_per_day={per_day}")
            values["n_days"] = total // per_day
        return StudyDesign(**values)

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])

    @property
    def workers(self) -> int:
        workers = self.settings.get("workers")
        return available_workers() if workers is None else max(1, int(workers))

    def sim_config(self, adherence_rate: Optional[float] = None) -> SimConfig:
        """Simulation settings, optionally with an estimated adherence rate."""
        return SimConfig(
            n_subjects=int(self.settings["subjects"]),
            adherence_rate=float(self.settings["chi"] if adherence_rate is None else adherence_rate),
            param_lo=float(self.settings["param_lo"]),
            param_hi=float(self.settings["param_hi"]),
            design=self.design,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "settings": dict(self.settings),
            "inputs": dict(self.inputs),
            "config_file": self.config_file,
            "output_dir": str(self.output_dir),
        }


def write_manifest(config: RunConfig, exit_status: int, outputs: List[Path], error: Optional[str] = None) -> Path:
    """Record the resolved configuration and outcome of a run.

    The manifest holds everything needed to rerun the command with
    identical outputs: the subcommand, its inputs, the merged settings and
    the seed.

    Returns:
        Path of the written manifest.
    """
    manifest = config.to_dict()
    manifest.update({
        "version": __version__,
        "seed": config.settings.get("seed"),
        "exit_status": exit_status,
        "outputs": sorted(p.name for p in outputs),
        "error": error,
    })
    config.output_dir.mkdir(parents=True, exist_ok=True)
    path = config.output_dir / MANIFEST_NAME
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("Wrote manifest to %s", path)
    return path
