"""FastAPI application implementing the generation wire protocol.

Request validation is done by hand rather than through response models so
error bodies always follow the protocol shape:

    {"error": {"code": <str>, "message": <str>}}

Generation runs under a lock: the protocol is deterministic per request
and the underlying pipelines are not generally reentrant on one device.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image

from .config import ServiceConfig
from .pipelines import GenerationPipeline, PipelineUnavailable


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def _decode_edges(b64_png: str) -> np.ndarray:
    raw = base64.b64decode(b64_png, validate=True)
    with Image.open(io.BytesIO(raw)) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 127


def _validate(payload: dict) -> tuple[np.ndarray, str, int] | JSONResponse:
    if not isinstance(payload, dict):
        return _error(400, "invalid_request", "body must be a JSON object")
    for field in ("edges_png", "prompt", "seed", "height", "width"):
        if field not in payload:
            return _error(400, "invalid_request", f"missing field {field!r}")
    prompt = payload["prompt"]
    if not isinstance(prompt, str) or not prompt:
        return _error(400, "invalid_request", "prompt must be a nonempty string")
    seed = payload["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        return _error(400, "invalid_request", "seed must be an unsigned 64-bit integer")
    for field in ("height", "width"):
        v = payload[field]
        if not isinstance(v, int) or isinstance(v, bool) or v < 64 or v % 64:
            return _error(400, "invalid_request", f"{field} must be a positive multiple of 64")
    try:
        edges = _decode_edges(payload["edges_png"])
    except Exception as exc:
        return _error(400, "bad_image", f"edges_png is not a decodable PNG: {exc}")
    if edges.shape != (payload["height"], payload["width"]):
        return _error(
            400,
            "invalid_request",
            f"edge image is {edges.shape}, payload says "
            f"{(payload['height'], payload['width'])}",
        )
    return edges, prompt, seed


def create_app(
    config: ServiceConfig | None = None, pipeline: GenerationPipeline | None = None
) -> FastAPI:
    """Build the service; a prebuilt pipeline overrides the config."""
    app = FastAPI(title="diffusion-adapter", docs_url=None, redoc_url=None)
    state: dict = {"pipeline": pipeline, "load_error": None}
    lock = threading.Lock()

    if pipeline is None:
        try:
            state["pipeline"] = (config or ServiceConfig()).build_pipeline()
        except (PipelineUnavailable, Exception) as exc:  # noqa: BLE001
            state["load_error"] = str(exc)

    @app.get("/v1/health")
    def health():
        if state["pipeline"] is None:
            return _error(503, "unready", f"pipeline failed to load: {state['load_error']}")
        return {"backend_id": state["pipeline"].backend_id}

    @app.post("/v1/generate")
    async def generate(request: Request):
        if state["pipeline"] is None:
            return _error(503, "unready", f"pipeline failed to load: {state['load_error']}")
        try:
            payload = await request.json()
        except Exception as exc:
            return _error(400, "invalid_request", f"bad JSON body: {exc}")
        validated = _validate(payload)
        if isinstance(validated, JSONResponse):
            return validated
        edges, prompt, seed = validated
        try:
            with lock:
                image = state["pipeline"].generate(edges, prompt, seed)
        except Exception as exc:  # noqa: BLE001
            return _error(500, "generation_failed", str(exc))
        if image.shape != (*edges.shape, 3) or image.dtype != np.uint8:
            return _error(500, "generation_failed", "pipeline produced a malformed image")
        buf = io.BytesIO()
        Image.fromarray(image, mode="RGB").save(buf, format="PNG")
        return {"image_png": base64.b64encode(buf.getvalue()).decode("ascii")}

    return app
