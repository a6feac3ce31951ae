"""Small model configs and data builders shared by the test suites."""

import numpy as np
import torch

from packdit.core.motion import TOY, NormStats, compute_norm_stats
from packdit.data.generator import generate_item
from packdit.data.grammar import all_specs
from packdit.models.config import CodecConfig, DiTConfig

TEST_T = 20

TINY_RECIPE = {
    "model_preset": "micro",
    "model_overrides": {"depth": 1, "width": 16, "heads": 2, "frequency_embedding_size": 16},
    "schedule": {"kind": "cosine", "steps": TEST_T},
    "codec": {
        "embed_dim": 16,
        "dim_p": 8,
        "latent_tokens": 10,
        "layers": 1,
        "heads": 2,
        "autoencoder_epochs": 2,
        "projection_epochs": 2,
    },
    "stages": [
        {"stage": "uncond", "epochs": 1, "batch_size": 8},
        {"stage": "mixed", "epochs": 1, "batch_size": 8},
        {"stage": "t2m", "epochs": 1, "batch_size": 8, "init_from": "mixed"},
    ],
}

JOINT_RECIPE = dict(
    TINY_RECIPE,
    stages=[
        {"stage": "uncond", "epochs": 1, "batch_size": 8},
        {"stage": "joint", "epochs": 1, "batch_size": 8},
    ],
)


def small_dit_config(**overrides) -> DiTConfig:
    fields = dict(
        depth=1,
        width=16,
        heads=2,
        motion_token_dim=TOY.total_dim,
        text_latent_dim=4,
        max_motion_tokens=64,
        max_text_tokens=10,
        patch_size=1,
        mlp_ratio=2.0,
        frequency_embedding_size=16,
        diffusion_steps=TEST_T,
    )
    fields.update(overrides)
    return DiTConfig(**fields)


def small_codec_config(**overrides) -> CodecConfig:
    fields = dict(
        embed_dim=8,
        dim_p=4,
        latent_tokens=10,
        layers=1,
        heads=2,
        autoencoder_epochs=2,
        projection_epochs=2,
    )
    fields.update(overrides)
    return CodecConfig(**fields)


def perturb(module: torch.nn.Module, seed: int = 0, scale: float = 0.1) -> torch.nn.Module:
    """Move every parameter off its (partly zero) initialization."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for param in module.parameters():
            noise = torch.randn(param.shape, generator=generator, dtype=torch.float64)
            param.add_(noise.to(param.dtype) * scale)
    return module


def zero_mutual(model) -> None:
    with torch.no_grad():
        for stack in (model.motion_dit, model.text_dit):
            for block in stack.blocks:
                block.mutual.attn.proj.weight.zero_()
                block.mutual.attn.proj.bias.zero_()


def toy_items(n: int, seed: int = 0, noise_scale: float = 0.002, n_frames: int = 40):
    specs = all_specs(n_frames)
    rng = np.random.default_rng(seed)
    return [generate_item(specs[i % len(specs)], noise_scale, rng) for i in range(n)]


def float32_stats(motions) -> NormStats:
    """Stats exactly representable in a checkpoint."""
    stats = compute_norm_stats(motions)
    return NormStats(mean=stats.mean.astype(np.float32), std=stats.std.astype(np.float32))
