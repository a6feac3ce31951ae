"""Motion feature schema model."""

from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MotionSchema(BaseModel):
    """Named per-frame feature layout."""
    model_config = ConfigDict(frozen=True)

    name: str
    layout: Tuple[Tuple[str, int], ...] = Field(description="Ordered (field_name, dim) pairs")
    total_dim: int = Field(gt=0)
    joint_count: int = Field(gt=0)

    @model_validator(mode="after")
    def _check_total(self) -> "MotionSchema":
        dims = [dim for _, dim in self.layout]
        if any(dim <= 0 for dim in dims):
            raise ValueError(f"schema {self.name!r} has a non-positive field dim")
        if sum(dims) != self.total_dim:
            raise ValueError(
                f"schema {self.name!r}: field dims sum to {sum(dims)}, total_dim is {self.total_dim}"
            )
        names = [name for name, _ in self.layout]
        if len(set(names)) != len(names):
            raise ValueError(f"schema {self.name!r} repeats a field name")
        return self

    @property
    def field_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.layout)

    def offsets(self) -> Dict[str, slice]:
        """Column slice of every field; the slices partition [0, total_dim)."""
        result = {}
        start = 0
        for name, dim in self.layout:
            result[name] = slice(start, start + dim)
            start += dim
        return result
