"""
Run configuration: JSON config files, seeds and run manifests.

A config file holds one section per configurable component:

    {
        "dp_sgd": {"clip_norm": 1.0, "sampling_rate": 0.1, "iterations": 800},
        "travag": {"latent_dim": 2, "gan_iterations": 600},
        "ddpm": {"steps": 300}
    }

Sections map onto the dataclasses that own them (DpSgdConfig, TravagConfig,
DdpmConfig). Keys that a dataclass does not declare are rejected so a typo never
silently falls back to a default.
"""

import dataclasses
import json
import os
import secrets
import time
from dataclasses import dataclass, field
from typing import Any

from loguru import logger

from config import DEFAULT_SEED

MANIFEST_VERSION = 1
PACKAGE_VERSION = "0.1.0"


def load_config_file(path: str | None) -> dict[str, dict]:
    """
    Read a JSON config file into a dict of sections.

    Args:
        path: Path to the JSON file, or None for an empty config

    Returns:
        dict mapping section name -> dict of overrides

    Raises:
        ValueError: file is not a JSON object of objects
    """
    if not path:
        return {}

    with open(path, encoding="utf-8") as f:
        raw = json.load(f)

    if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
        raise ValueError(f"Config file {path} must be a JSON object of section objects")

    logger.debug(f"Loaded config sections {sorted(raw)} from {path}")
    return raw


def build_section(cls, overrides: dict[str, Any] | None):
    """
    Instantiate a config dataclass from a section dict.

    Args:
        cls: Dataclass type (e.g. DpSgdConfig)
        overrides: Section dict from the config file (may be None)

    Returns:
        cls instance with overrides applied on top of the defaults

    Raises:
        ValueError: overrides contain keys the dataclass does not declare
    """
    overrides = overrides or {}
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"Unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**overrides)


def resolve_seed(seed: int | None) -> int:
    """
    Return the seed to use for a randomized run.

    Order of precedence: explicit argument, TRAVAGEN_SEED from the environment,
    then a freshly generated seed which is logged so the run can be replayed.
    """
    if seed is not None:
        return int(seed)
    if DEFAULT_SEED:
        return int(DEFAULT_SEED)
    generated = secrets.randbits(32)
    logger.warning(f"No seed given - generated seed {generated} (recorded in manifest)")
    return generated


@dataclass
class RunConfig:
    """Everything needed to replay one CLI command bit-for-bit."""

    command: str
    seed: int
    arguments: dict[str, Any] = field(default_factory=dict)
    sections: dict[str, dict] = field(default_factory=dict)
    started_at: float = field(default_factory=time.time)

    def write_manifest(self, path: str, privacy: dict | None = None, extra: dict | None = None) -> str:
        """
        Write the run manifest JSON next to the run outputs.

        Args:
            path: Manifest file path
            privacy: Achieved privacy report (per component and total)
            extra: Additional command-specific results (timings, counts)

        Returns:
            The manifest path
        """
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "package_version": PACKAGE_VERSION,
            "command": self.command,
            "seed": self.seed,
            "arguments": self.arguments,
            "config": self.sections,
            "privacy": privacy or {},
            "wall_clock_seconds": round(time.time() - self.started_at, 3),
        }
        if extra:
            manifest.update(extra)

        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=_json_default)
        logger.info(f"Run manifest written to {path}")
        return path

    @classmethod
    def from_manifest(cls, path: str) -> "RunConfig":
        """Rebuild the config of an earlier run from its manifest."""
        with open(path, encoding="utf-8") as f:
            manifest = json.load(f)
        return cls(
            command=manifest["command"],
            seed=int(manifest["seed"]),
            arguments=manifest.get("arguments", {}),
            sections=manifest.get("config", {}),
        )


def _json_default(value):
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
