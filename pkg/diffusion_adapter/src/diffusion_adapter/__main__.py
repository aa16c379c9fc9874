"""Run the generation service: python -m diffusion_adapter [options]."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import PIPELINE_KINDS, ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="diffusion-adapter")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8188)
    parser.add_argument("--pipeline", choices=PIPELINE_KINDS, default="controlnet")
    parser.add_argument("--model-id", default="lllyasviel/sd-controlnet-canny")
    parser.add_argument("--base-model", default="runwayml/stable-diffusion-v1-5")
    parser.add_argument("--steps", type=int, default=20)
    parser.add_argument("--guidance", type=float, default=7.5)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    config = ServiceConfig(
        pipeline=args.pipeline,
        model_id=args.model_id,
        base_model=args.base_model,
        steps=args.steps,
        guidance=args.guidance,
        device=args.device,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
