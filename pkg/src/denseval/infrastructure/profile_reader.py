from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..domain.errors import DensevalError
from ..domain.metrics import ComputeProfile


class ComputeProfileModel(BaseModel):
    """JSON sidecar: {"model", "params", "gflops", "times_ms", "gpu_gb"}."""

    model_config = ConfigDict(extra="forbid")

    model: str
    params: int = Field(ge=0)
    gflops: float
    times_ms: List[float] = Field(default_factory=list)
    gpu_gb: Optional[float] = Field(default=None, ge=0.0)

    def to_profile(self) -> ComputeProfile:
        return ComputeProfile(
            model=self.model,
            parameter_count=self.params,
            gflops=self.gflops,
            per_image_times=tuple(self.times_ms),
            gpu_memory=self.gpu_gb,
        )


def load_compute_profile(path: Union[str, Path]) -> ComputeProfile:
    path = Path(path)
    try:
        model = ComputeProfileModel.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise DensevalError(f"{path}: invalid compute profile ({exc})") from exc
    if any(t < 0 for t in model.times_ms):
        raise DensevalError(f"{path}: per-image times must be non-negative")
    return model.to_profile()
