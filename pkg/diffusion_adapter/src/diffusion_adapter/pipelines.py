"""Generation pipelines behind the service.

Every pipeline is deterministic for a fixed (edge mask, prompt, seed) and
identifies itself through backend_id; the id must change whenever
generation semantics change, because clients key their caches on it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np


class PipelineUnavailable(Exception):
    """The pipeline cannot be constructed (missing deps, weights, device)."""


class GenerationPipeline(Protocol):
    backend_id: str

    def generate(self, edge_mask: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        """Render an (H, W, 3) uint8 image conditioned on the boolean
        (H, W) edge mask and the prompt."""
        ...


def _derive_rng(*parts: object) -> np.random.Generator:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(h[:8], "little")))


def _box_blur(arr: np.ndarray, passes: int = 3) -> np.ndarray:
    out = arr.astype(np.float64)
    for _ in range(passes):
        padded = np.pad(out, 1, mode="edge")
        acc = np.zeros_like(out)
        for di in range(3):
            for dj in range(3):
                acc += padded[di : di + out.shape[0], dj : dj + out.shape[1]]
        out = acc / 9.0
    return out


@dataclass
class ProceduralPipeline:
    """Deterministic stand-in generator: a prompt-keyed colour field with an
    edge glow. No model weights, instant startup; used for CI and protocol
    testing."""

    backend_id: str = "procedural-field/v1"

    def generate(self, edge_mask: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        h, w = edge_mask.shape
        rng = _derive_rng("procedural-field/v1", prompt, seed, h, w)
        top = rng.integers(20, 120, size=3).astype(np.float64)
        bottom = rng.integers(80, 220, size=3).astype(np.float64)
        highlight = rng.integers(160, 256, size=3).astype(np.float64)

        ramp = np.linspace(0.0, 1.0, h)[:, None, None]
        canvas = top[None, None, :] * (1 - ramp) + bottom[None, None, :] * ramp

        glow = _box_blur(edge_mask.astype(np.float64))
        glow = glow / glow.max() if glow.max() > 0 else glow
        canvas = canvas * (1 - 0.8 * glow[:, :, None]) + highlight[None, None, :] * (
            0.8 * glow[:, :, None]
        )
        canvas += rng.normal(0.0, 6.0, size=(h, w, 3))
        return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


class ControlNetPipeline:
    """Pretrained edge-conditioned diffusion generation via diffusers.

    Weights are fetched from the public registry on construction; a fixed
    sampler configuration is folded into backend_id so caches stay sound.
    """

    def __init__(
        self,
        model_id: str = "lllyasviel/sd-controlnet-canny",
        base_model: str = "runwayml/stable-diffusion-v1-5",
        steps: int = 20,
        guidance: float = 7.5,
        device: str = "cpu",
    ):
        try:
            import torch
            from diffusers import (
                ControlNetModel,
                DDIMScheduler,
                StableDiffusionControlNetPipeline,
            )
        except ImportError as exc:
            raise PipelineUnavailable(
                f"diffusion dependencies missing (install the 'controlnet' extra): {exc}"
            ) from exc
        try:
            controlnet = ControlNetModel.from_pretrained(model_id)
            pipe = StableDiffusionControlNetPipeline.from_pretrained(
                base_model, controlnet=controlnet, safety_checker=None
            )
            pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
            self._pipe = pipe.to(device)
        except Exception as exc:
            raise PipelineUnavailable(f"model load failed: {exc}") from exc
        self._torch = torch
        self.steps = steps
        self.guidance = guidance
        self.device = device
        self.backend_id = (
            f"controlnet/{model_id}+{base_model}/ddim/steps={steps}/cfg={guidance}/{device}"
        )

    def generate(self, edge_mask: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        from PIL import Image

        h, w = edge_mask.shape
        condition = Image.fromarray(
            np.where(edge_mask[:, :, None], 255, 0).astype(np.uint8).repeat(3, axis=2)
        )
        # torch generators take signed 64-bit seeds
        generator = self._torch.Generator(self.device).manual_seed(seed % 2**63)
        result = self._pipe(
            prompt,
            image=condition,
            height=h,
            width=w,
            num_inference_steps=self.steps,
            guidance_scale=self.guidance,
            generator=generator,
        )
        return np.asarray(result.images[0].convert("RGB"))
