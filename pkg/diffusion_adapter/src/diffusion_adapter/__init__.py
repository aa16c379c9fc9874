"""Edge-conditioned image generation service.

Speaks the exemplar-regeneration wire protocol (GET /v1/health,
POST /v1/generate with base64 PNG payloads) in front of a pluggable
generation pipeline: a pretrained edge-conditioned diffusion model when
its optional dependencies and weights are available, or a deterministic
procedural pipeline for testing and CI.
"""

__version__ = "0.1.0"
