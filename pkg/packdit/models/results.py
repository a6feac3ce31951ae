"""Result models: loss terms, training log records, metrics report, dataset manifest."""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class DiffusionLossTerms(BaseModel):
    """Per-step loss breakdown: total = loss_motion + lambda * loss_text."""
    model_config = ConfigDict(populate_by_name=True)

    loss_motion: float = Field(ge=0)
    loss_text: float = Field(ge=0)
    lam: float = Field(ge=0, alias="lambda")
    total: float = Field(ge=0)
    task: Optional[str] = None
    t_motion: Optional[List[int]] = None
    t_text: Optional[List[int]] = None


class LossRecord(BaseModel):
    """One line of the loss log."""
    step: int
    stage: str
    task: str
    loss_motion: float
    loss_text: float
    total: float


class MetricsReport(BaseModel):
    """Evaluation summary. Absent metrics are None."""
    report_version: str = "1"
    task: str
    n_samples: int = Field(ge=0)
    seed: int
    extractor_id: str
    fid: Optional[float] = Field(None, ge=0)
    diversity: Optional[float] = Field(None, ge=0)
    r_precision: Optional[Tuple[float, float, float]] = None
    bleu: Optional[Tuple[float, float, float, float]] = None
    cider: Optional[float] = Field(None, ge=0)
    oracle_match: Optional[float] = Field(None, ge=0, le=1)
    metadata: Dict[str, str] = Field(default_factory=dict)

    @field_validator("r_precision")
    @classmethod
    def _monotone(cls, value: Optional[Tuple[float, float, float]]):
        if value is not None:
            if any(v < 0 for v in value) or not (value[0] <= value[1] <= value[2]):
                raise ValueError(f"r_precision must be nonnegative and nondecreasing, got {value}")
        return value

    @field_validator("bleu")
    @classmethod
    def _nonnegative(cls, value: Optional[Tuple[float, ...]]):
        if value is not None and any(v < 0 for v in value):
            raise ValueError("bleu scores must be nonnegative")
        return value


class DatasetManifest(BaseModel):
    """Description of a generated toy dataset."""
    n_items: int = Field(ge=1)
    seed: int
    splits: Dict[str, int]
    split_ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    schema_name: str = "toy"
    grammar_version: str
    noise_scale: float = Field(ge=0)
    content_hash: str
