"""Pydantic configuration models for the networks, schedule, codec and training recipe."""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .tasks import StageKind, TaskKind, TRAINABLE_TASKS


class DiTConfig(BaseModel):
    """Shape of the two DiT stacks (both stacks share depth, width and heads)."""
    depth: int = Field(4, gt=0, description="Blocks per stack")
    width: int = Field(128, gt=0, description="Hidden dim")
    heads: int = Field(4, gt=0)
    motion_token_dim: int = Field(8, gt=0, description="patch_size * schema total_dim")
    text_latent_dim: int = Field(64, gt=0, description="Dim_P")
    max_motion_tokens: int = Field(64, gt=0)
    max_text_tokens: int = Field(16, gt=0)
    patch_size: int = Field(1, gt=0)
    mlp_ratio: float = Field(4.0, gt=0)
    frequency_embedding_size: int = Field(256, gt=1)
    diffusion_steps: int = Field(1000, ge=2, description="Largest accepted timestep")

    @model_validator(mode="after")
    def _check_heads(self) -> "DiTConfig":
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by heads {self.heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.width // self.heads


DIT_PRESETS: Dict[str, Dict[str, Any]] = {
    "micro": dict(depth=2, width=32, heads=2, mlp_ratio=2.0, frequency_embedding_size=32),
    "nano": dict(depth=4, width=128, heads=4),
    # roughly 72M and 120M parameters per stack; constructible, never trained here
    "tiny": dict(depth=8, width=640, heads=10),
    "small": dict(depth=12, width=672, heads=12),
}


class ScheduleConfig(BaseModel):
    kind: Literal["linear", "cosine"] = "cosine"
    steps: int = Field(1000, ge=2, description="Number of diffusion steps T")
    cosine_s: float = Field(0.008, gt=0)
    beta_start: float = Field(1e-4, gt=0, lt=1)
    beta_end: float = Field(0.02, gt=0, lt=1)


class CodecConfig(BaseModel):
    """Toy text codec and projection model."""
    embed_dim: int = Field(128, gt=0)
    dim_p: int = Field(64, gt=0, description="Projection dimension Dim_P")
    latent_tokens: int = Field(16, gt=2, description="Fixed text token count L_T")
    layers: int = Field(2, gt=0)
    heads: int = Field(4, gt=0)
    autoencoder_epochs: int = Field(300, ge=0)
    projection_epochs: int = Field(300, ge=0)
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(64, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_heads(self) -> "CodecConfig":
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        return self


def default_task_probs() -> Dict[TaskKind, float]:
    # uniform over t2m / m2t / uncond / joint, uncond split across the two stacks
    return {
        TaskKind.T2M: 0.25,
        TaskKind.M2T: 0.25,
        TaskKind.UNCOND_MOTION: 0.125,
        TaskKind.UNCOND_TEXT: 0.125,
        TaskKind.JOINT: 0.25,
    }


class StageConfig(BaseModel):
    """One entry of the training pipeline."""
    model_config = ConfigDict(populate_by_name=True)

    stage: StageKind
    name: Optional[str] = None
    epochs: int = Field(1, ge=0)
    batch_size: int = Field(128, gt=0)
    learning_rate: float = Field(1e-4, gt=0)
    lam: float = Field(1.0, ge=0, alias="lambda")
    task_probs: Dict[TaskKind, float] = Field(default_factory=default_task_probs)
    seed: int = 0
    grad_clip: float = Field(1.0, gt=0)
    max_steps: Optional[int] = Field(None, gt=0, description="Stop the stage early")
    init_from: Optional[str] = Field(None, description="Start from this earlier stage's weights")
    log_every: int = Field(10, gt=0)

    @field_validator("task_probs")
    @classmethod
    def _check_probs(cls, probs: Dict[TaskKind, float]) -> Dict[TaskKind, float]:
        for task, p in probs.items():
            if task not in TRAINABLE_TASKS:
                raise ValueError(f"task {task.value} cannot be trained")
            if p < 0:
                raise ValueError(f"negative probability for {task.value}")
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ValueError(f"task_probs sum to {sum(probs.values())}, expected 1")
        return probs

    @property
    def label(self) -> str:
        return self.name or self.stage.value


class RecipeConfig(BaseModel):
    """Full training recipe: model, schedule, codec and ordered stage list."""
    name: str = "desk"
    schema_name: str = "toy"
    model_preset: str = "nano"
    model_overrides: Dict[str, Any] = Field(default_factory=dict)
    patch_size: int = Field(1, gt=0)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    codec: CodecConfig = Field(default_factory=CodecConfig)
    stages: List[StageConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_stages(self) -> "RecipeConfig":
        seen = set()
        for stage in self.stages:
            if stage.init_from is not None and stage.init_from not in seen:
                raise ValueError(f"stage {stage.label} starts from unknown stage {stage.init_from}")
            if stage.label in seen:
                raise ValueError(f"duplicate stage name {stage.label}")
            seen.add(stage.label)
        return self
