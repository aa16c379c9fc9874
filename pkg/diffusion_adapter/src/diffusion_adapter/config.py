"""Service configuration and pipeline construction."""

from __future__ import annotations

from dataclasses import dataclass

from .pipelines import ControlNetPipeline, GenerationPipeline, ProceduralPipeline

PIPELINE_KINDS = ("procedural", "controlnet")


@dataclass(frozen=True)
class ServiceConfig:
    pipeline: str = "controlnet"
    model_id: str = "lllyasviel/sd-controlnet-canny"
    base_model: str = "runwayml/stable-diffusion-v1-5"
    steps: int = 20
    guidance: float = 7.5
    device: str = "cpu"

    def __post_init__(self):
        if self.pipeline not in PIPELINE_KINDS:
            raise ValueError(f"pipeline must be one of {PIPELINE_KINDS}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.guidance <= 0:
            raise ValueError("guidance must be positive")

    def build_pipeline(self) -> GenerationPipeline:
        if self.pipeline == "procedural":
            return ProceduralPipeline()
        return ControlNetPipeline(
            model_id=self.model_id,
            base_model=self.base_model,
            steps=self.steps,
            guidance=self.guidance,
            device=self.device,
        )
