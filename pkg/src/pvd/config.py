"""JSON configuration with strict validation and full defaults.

The document is a single JSON object with up to five sections: ``grid``,
``supervoxel``, ``sampler``, ``loss_weights``, and ``paths``. Unknown keys
are rejected so typos surface immediately; omitted keys fall back to the
documented defaults. ``paths`` is a free-form table of named file paths
(string values only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError, InvalidInputError
from .geometry import CylindricalGridSpec
from .losses import LossWeights
from .sampling import SamplerConfig, SupervoxelSpec

DEFAULT_N_POINT = 6000
DEFAULT_N_VOXEL = 3000


@dataclass
class Config:
    """Validated runtime configuration."""

    grid: CylindricalGridSpec = field(default_factory=CylindricalGridSpec)
    supervoxel: SupervoxelSpec = field(default_factory=SupervoxelSpec)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    n_point: int = DEFAULT_N_POINT
    n_voxel: int = DEFAULT_N_VOXEL
    paths: dict[str, str] = field(default_factory=dict)


def _require_object(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _reject_unknown(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{path}.{key}: unknown key" if path else f"{key}: unknown key")


def _number(section: dict, key: str, default: float, path: str) -> float:
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    return float(value)


def _integer(section: dict, key: str, default: int, path: str) -> int:
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}: expected an integer")
    return value


def _boolean(section: dict, key: str, default: bool, path: str) -> bool:
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected a boolean")
    return value


def _triple(section: dict, key: str, default: tuple[int, ...], path: str) -> tuple:
    if key not in section:
        return default
    value = section[key]
    if (
        not isinstance(value, list)
        or len(value) != 3
        or any(isinstance(v, bool) or not isinstance(v, int) for v in value)
    ):
        raise ConfigError(f"{path}.{key}: expected a list of three integers")
    return tuple(value)


def _range(section: dict, key: str, default: tuple[float, float], path: str) -> tuple:
    if key not in section:
        return default
    value = section[key]
    if (
        not isinstance(value, list)
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"{path}.{key}: expected a list of two numbers")
    return (float(value[0]), float(value[1]))


def _parse_grid(section: dict) -> CylindricalGridSpec:
    _reject_unknown(section, {"bins", "r_range", "z_range"}, "grid")
    defaults = CylindricalGridSpec()
    try:
        return CylindricalGridSpec(
            bins=_triple(section, "bins", defaults.bins, "grid"),
            r_range=_range(section, "r_range", defaults.r_range, "grid"),
            z_range=_range(section, "z_range", defaults.z_range, "grid"),
        )
    except InvalidInputError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _parse_supervoxel(section: dict) -> SupervoxelSpec:
    _reject_unknown(section, {"size"}, "supervoxel")
    try:
        return SupervoxelSpec(
            size=_triple(section, "size", SupervoxelSpec().size, "supervoxel")
        )
    except InvalidInputError as exc:
        raise ConfigError(f"supervoxel: {exc}") from exc


def _parse_sampler(section: dict) -> tuple[SamplerConfig, int, int]:
    allowed = {
        "alpha",
        "beta",
        "minority_threshold",
        "K",
        "seed",
        "distance_aware",
        "n_point",
        "n_voxel",
    }
    _reject_unknown(section, allowed, "sampler")
    defaults = SamplerConfig()
    k = _integer(section, "K", defaults.k, "sampler")
    if k < 1:
        raise ConfigError(f"sampler.K: must be >= 1, got {k}")
    n_point = _integer(section, "n_point", DEFAULT_N_POINT, "sampler")
    n_voxel = _integer(section, "n_voxel", DEFAULT_N_VOXEL, "sampler")
    for name, value in (("n_point", n_point), ("n_voxel", n_voxel)):
        if value < 1:
            raise ConfigError(f"sampler.{name}: must be >= 1, got {value}")
    try:
        cfg = SamplerConfig(
            alpha=_number(section, "alpha", defaults.alpha, "sampler"),
            beta=_number(section, "beta", defaults.beta, "sampler"),
            minority_threshold=_number(
                section, "minority_threshold", defaults.minority_threshold, "sampler"
            ),
            k=k,
            seed=_integer(section, "seed", defaults.seed, "sampler"),
            distance_aware=_boolean(
                section, "distance_aware", defaults.distance_aware, "sampler"
            ),
        )
    except InvalidInputError as exc:
        raise ConfigError(f"sampler: {exc}") from exc
    return cfg, n_point, n_voxel


def _parse_loss_weights(section: dict) -> LossWeights:
    allowed = {"alpha1", "alpha2", "beta1", "beta2", "temperature", "kl_direction"}
    _reject_unknown(section, allowed, "loss_weights")
    defaults = LossWeights()
    direction = section.get("kl_direction", defaults.kl_direction)
    if not isinstance(direction, str):
        raise ConfigError("loss_weights.kl_direction: expected a string")
    try:
        return LossWeights(
            alpha1=_number(section, "alpha1", defaults.alpha1, "loss_weights"),
            alpha2=_number(section, "alpha2", defaults.alpha2, "loss_weights"),
            beta1=_number(section, "beta1", defaults.beta1, "loss_weights"),
            beta2=_number(section, "beta2", defaults.beta2, "loss_weights"),
            temperature=_number(
                section, "temperature", defaults.temperature, "loss_weights"
            ),
            kl_direction=direction,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"loss_weights: {exc}") from exc


def _parse_paths(section: dict) -> dict[str, str]:
    paths = {}
    for key, value in section.items():
        if not isinstance(value, str):
            raise ConfigError(f"paths.{key}: expected a string")
        paths[key] = value
    return paths


def load_config(text: str) -> Config:
    """Parse and validate a configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    doc = _require_object(doc, "config")
    _reject_unknown(
        doc, {"grid", "supervoxel", "sampler", "loss_weights", "paths"}, ""
    )
    sampler, n_point, n_voxel = _parse_sampler(
        _require_object(doc.get("sampler", {}), "sampler")
    )
    return Config(
        grid=_parse_grid(_require_object(doc.get("grid", {}), "grid")),
        supervoxel=_parse_supervoxel(
            _require_object(doc.get("supervoxel", {}), "supervoxel")
        ),
        sampler=sampler,
        loss_weights=_parse_loss_weights(
            _require_object(doc.get("loss_weights", {}), "loss_weights")
        ),
        n_point=n_point,
        n_voxel=n_voxel,
        paths=_parse_paths(_require_object(doc.get("paths", {}), "paths")),
    )


def load_config_file(path: str) -> Config:
    """Read and parse a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
