"""Run configuration: JSON documents validated against a published schema.

Unknown keys are rejected everywhere.  Numeric defaults mirror the
standard operating point (sigma grid {0.25, 0.5, 1.0}, budgets
{2,4,6,8,10}, alpha 0.001, selection/estimation samples 10/1000, top-k
5); the "fast" profile shrinks sample counts and populations for CI and
warns that certificates are correspondingly weaker.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from pathlib import Path

import jsonschema

__all__ = [
    "ConfigError",
    "RUN_CONFIG_SCHEMA",
    "PROFILES",
    "load_config",
    "validate_config",
    "config_hash",
    "apply_profile",
    "resolve_data_path",
    "DATA_ROOT_ENV",
]

DATA_ROOT_ENV = "CERTSPOOF_DATA_ROOT"


class ConfigError(ValueError):
    """Configuration rejected; carries a machine-readable report."""

    def __init__(self, message: str, path: tuple = ()):  # noqa: D401
        super().__init__(message)
        self.report = {"error": "config", "message": message,
                       "path": [str(p) for p in path]}


_DATA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["synthetic", "ingest"]},
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1},
                  "minItems": 3, "maxItems": 3},
        "num_classes": {"type": "integer", "minimum": 2, "maximum": 8},
        "train_count": {"type": "integer", "minimum": 1},
        "eval_count": {"type": "integer", "minimum": 1},
        "contrast": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "path": {"type": "string"},
        "format": {"enum": ["idx", "cifar-binary", "image-directory"]},
    },
    "required": ["kind"],
}

_SMOOTHING_PROPS = {
    "sigma": {"type": "number", "exclusiveMinimum": 0},
    "n0": {"type": "integer", "minimum": 1},
    "n": {"type": "integer", "minimum": 1},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "mu": {"type": "number", "minimum": 0, "maximum": 1},
}

_TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "defense": {"enum": ["single", "ensemble", "denoised"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "ensemble_size": {"type": "integer", "minimum": 1},
        "denoiser_epochs": {"type": "integer", "minimum": 0},
        "checkpoint": {"type": "string"},
    },
    "required": ["defense", "sigma"],
}

_CERTIFY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "checkpoint": {"type": "string"},
        "count": {"type": "integer", "minimum": 1},
        **_SMOOTHING_PROPS,
    },
    "required": ["checkpoint", "sigma"],
}

_ATTACK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "checkpoint": {"type": "string"},
        "attack": {"enum": ["ghostcert", "shadow", "shadow_bounded"]},
        "index": {"type": "integer", "minimum": 0},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "epsilon_scale": {"enum": ["paper224", "raw"]},
        "steps": {"type": "integer", "minimum": 0},
        "noise_batch": {"type": "integer", "minimum": 1},
        "step_size": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "targeted": {"type": "boolean"},
        "mask_strategy": {"enum": ["saliency", "random_pixel", "random_region", "full"]},
        "k": {"type": "integer", "minimum": 1},
        "saliency_on": {"enum": ["source", "target"]},
        **_SMOOTHING_PROPS,
    },
    "required": ["checkpoint", "sigma", "epsilon"],
}

_DEFENSE_REF_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["single", "ensemble", "denoised"]},
        "checkpoint": {"type": "string"},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "label": {"type": "string"},
    },
    "required": ["kind", "checkpoint", "sigma"],
}

_EVALUATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "defenses": {"type": "array", "items": _DEFENSE_REF_SCHEMA, "minItems": 1},
        "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                     "minItems": 1},
        "attacks": {"type": "array", "minItems": 1,
                    "items": {"enum": ["ghostcert", "shadow", "shadow_bounded"]}},
        "targeted": {"type": "boolean"},
        "images_per_cell": {"type": "integer", "minimum": 1},
        "epsilon_scale": {"enum": ["paper224", "raw"]},
        "steps": {"type": "integer", "minimum": 0},
        "noise_batch": {"type": "integer", "minimum": 1},
        "step_size": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "mask_strategy": {"enum": ["saliency", "random_pixel", "random_region", "full"]},
        "k": {"type": "integer", "minimum": 1},
        "saliency_on": {"enum": ["source", "target"]},
        "n0": _SMOOTHING_PROPS["n0"],
        "n": _SMOOTHING_PROPS["n"],
        "alpha": _SMOOTHING_PROPS["alpha"],
        "mu": _SMOOTHING_PROPS["mu"],
    },
    "required": ["defenses"],
}

_ABLATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["mask_strategy", "k_sensitivity"]},
        "ks": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        **{k: v for k, v in _EVALUATE_SCHEMA["properties"].items() if k != "mask_strategy"},
    },
    "required": ["kind", "defenses"],
}

_REPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "records": {"type": "string"},
        "panels": {"type": "integer", "minimum": 0},
        "panel_amplification": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["records"],
}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "certspoof run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "profile": {"enum": ["full", "fast"]},
        "seed": {"type": "integer"},
        "data": _DATA_SCHEMA,
        "train": _TRAIN_SCHEMA,
        "certify": _CERTIFY_SCHEMA,
        "attack": _ATTACK_SCHEMA,
        "evaluate": _EVALUATE_SCHEMA,
        "ablate": _ABLATE_SCHEMA,
        "report": _REPORT_SCHEMA,
    },
}

# Per-profile defaults for certification strength and grid width.
PROFILES = {
    "full": {
        "n0": 10, "n": 1000, "alpha": 0.001,
        "images_per_cell": 100,
        "epsilons": [2.0, 4.0, 6.0, 8.0, 10.0],
        "steps": 100, "noise_batch": 32,
    },
    "fast": {
        "n0": 10, "n": 200, "alpha": 0.001,
        "images_per_cell": 20,
        "epsilons": [2.0, 10.0],
        "steps": 60, "noise_batch": 16,
    },
}


def validate_config(document: dict) -> dict:
    """Validate against the published schema; raise ConfigError on failure."""
    try:
        jsonschema.validate(document, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, tuple(exc.absolute_path)) from exc
    return document


def load_config(path) -> dict:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError("config root must be a JSON object")
    return validate_config(document)


def config_hash(document: dict) -> str:
    """Stable hash of the canonical JSON form."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def apply_profile(section: dict, profile: str) -> dict:
    """Fill profile defaults into a command section (explicit keys win)."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    if profile == "fast":
        warnings.warn(
            "fast profile: certification uses fewer Monte-Carlo samples and a "
            "reduced grid; certificates are weaker than the full protocol",
            stacklevel=2,
        )
    merged = dict(PROFILES[profile])
    merged.update({k: v for k, v in section.items() if v is not None})
    return merged


def resolve_data_path(path_value: str) -> Path:
    """Resolve a data path against the data-root environment variable."""
    path = Path(path_value)
    if path.is_absolute():
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    if root:
        return Path(root) / path
    return path
