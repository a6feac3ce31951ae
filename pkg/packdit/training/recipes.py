"""Builtin training recipes and YAML recipe loading."""

import copy
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError as PydanticValidationError

from ..core.motion import builtin_schema
from ..exceptions import ConfigError
from ..models.config import DIT_PRESETS, DiTConfig, RecipeConfig
from ..models.toy import MAX_FRAMES

PAPER_RECIPE: Dict[str, Any] = {
    "name": "paper",
    "model_preset": "tiny",
    "schedule": {"kind": "cosine", "steps": 1000},
    "codec": {"dim_p": 64, "autoencoder_epochs": 300, "projection_epochs": 300},
    "stages": [
        {"stage": "uncond", "epochs": 10, "batch_size": 128, "learning_rate": 1e-4},
        {"stage": "joint", "epochs": 10, "batch_size": 128, "learning_rate": 1e-4},
        {"stage": "mixed", "epochs": 200, "batch_size": 128, "learning_rate": 1e-4},
        {"stage": "t2m", "epochs": 300, "batch_size": 128, "learning_rate": 1e-4, "init_from": "mixed"},
        {"stage": "m2t", "epochs": 300, "batch_size": 128, "learning_rate": 1e-4, "init_from": "mixed"},
    ],
}

DESK_RECIPE: Dict[str, Any] = {
    "name": "desk",
    "model_preset": "nano",
    "schedule": {"kind": "cosine", "steps": 1000},
    "codec": {"dim_p": 64, "autoencoder_epochs": 300, "projection_epochs": 300},
    "stages": [
        {"stage": "uncond", "epochs": 10, "batch_size": 32, "learning_rate": 2e-4},
        {"stage": "mixed", "epochs": 50, "batch_size": 32, "learning_rate": 2e-4},
        {"stage": "t2m", "epochs": 50, "batch_size": 32, "learning_rate": 2e-4, "init_from": "mixed"},
        {"stage": "m2t", "epochs": 50, "batch_size": 32, "learning_rate": 2e-4, "init_from": "mixed"},
    ],
}

RECIPES = {"paper": PAPER_RECIPE, "desk": DESK_RECIPE}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_recipe(name: str = "desk", config_file: Optional[Union[str, Path]] = None) -> RecipeConfig:
    """Builtin recipe ``name`` with keys from ``config_file`` (YAML) laid over it."""
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}; expected one of {sorted(RECIPES)}")
    raw = RECIPES[name]
    if config_file is not None:
        try:
            with open(config_file) as f:
                override = yaml.safe_load(f) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {config_file} is not valid YAML: {exc}")
        if not isinstance(override, dict):
            raise ConfigError(f"config file {config_file} must hold a mapping")
        raw = _merge(raw, override)
    try:
        return RecipeConfig(**raw)
    except PydanticValidationError as exc:
        raise ConfigError(f"invalid recipe: {exc}")


def build_dit_config(recipe: RecipeConfig) -> DiTConfig:
    """Preset + overrides, with token dims fixed by the schema, patch size and codec."""
    if recipe.model_preset not in DIT_PRESETS:
        raise ConfigError(f"unknown model preset {recipe.model_preset!r}; expected one of {sorted(DIT_PRESETS)}")
    schema = builtin_schema(recipe.schema_name)
    fields = dict(DIT_PRESETS[recipe.model_preset])
    fields.update(recipe.model_overrides)
    fields.update(
        motion_token_dim=recipe.patch_size * schema.total_dim,
        text_latent_dim=recipe.codec.dim_p,
        max_motion_tokens=-(-MAX_FRAMES // recipe.patch_size),
        max_text_tokens=recipe.codec.latent_tokens,
        patch_size=recipe.patch_size,
        diffusion_steps=recipe.schedule.steps,
    )
    try:
        return DiTConfig(**fields)
    except PydanticValidationError as exc:
        raise ConfigError(f"invalid model config: {exc}")
