"""Wire-protocol conformance corpus.

Runs a fixed set of protocol-level checks against any service exposing
GET /v1/health and POST /v1/generate: response shapes, dimension
agreement, determinism for repeated requests, and error reporting for
malformed payloads. The corpus is content-agnostic, so it applies equally
to the built-in fake server and to a real generation service.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass

import numpy as np
import requests

from .images import BitEdgeMap, edges_to_png_bytes


@dataclass(frozen=True)
class CaseResult:
    name: str
    passed: bool
    detail: str = ""


def _ring_edges(height: int, width: int) -> BitEdgeMap:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = height / 2, width / 2
    r = min(height, width) / 3
    dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
    return BitEdgeMap.from_mask(np.abs(dist - r) < 1.0)


def _edges_b64(edges: BitEdgeMap) -> str:
    return base64.b64encode(edges_to_png_bytes(edges)).decode("ascii")


def _payload(img_h: int = 64, img_w: int = 64, **overrides) -> dict:
    body = {
        "edges_png": _edges_b64(_ring_edges(img_h, img_w)),
        "prompt": "conformance probe",
        "seed": 7,
        "height": img_h,
        "width": img_w,
    }
    body.update(overrides)
    return body


def _expect_error(resp) -> tuple[bool, str]:
    if resp.status_code == 200:
        return False, "expected an error status, got 200"
    try:
        body = resp.json()
    except ValueError:
        return False, "error response is not JSON"
    err = body.get("error")
    if not isinstance(err, dict) or "code" not in err or "message" not in err:
        return False, f"error body malformed: {body!r}"
    return True, ""


def _expect_image(resp, height: int, width: int) -> tuple[bool, str]:
    if resp.status_code != 200:
        return False, f"HTTP {resp.status_code}: {resp.text[:200]}"
    body = resp.json()
    if "image_png" not in body:
        return False, f"missing image_png in {list(body)}"
    from .images import rgb_from_png_bytes

    img = rgb_from_png_bytes(base64.b64decode(body["image_png"]))
    if (img.height, img.width) != (height, width):
        return False, f"image is {(img.height, img.width)}, expected {(height, width)}"
    return True, ""


def run_conformance(base_url: str, session=None) -> list[CaseResult]:
    """Execute every corpus case against the service at base_url.

    `session` needs requests-style get/post returning responses with
    status_code/json(); defaults to a requests.Session.
    """
    http = session or requests.Session()
    base = base_url.rstrip("/")
    results: list[CaseResult] = []

    def record(name: str, ok: bool, detail: str = "") -> None:
        results.append(CaseResult(name, ok, detail))

    # health reports a nonempty backend identifier
    resp = http.get(f"{base}/v1/health")
    ok = resp.status_code == 200
    backend_id = ""
    detail = ""
    if ok:
        try:
            backend_id = resp.json().get("backend_id", "")
        except ValueError:
            ok = False
            detail = "health body is not JSON"
        ok = ok and isinstance(backend_id, str) and bool(backend_id)
    else:
        detail = f"HTTP {resp.status_code}"
    record("health_backend_id", ok, detail)

    # square generation at the requested dimensions
    resp = http.post(f"{base}/v1/generate", json=_payload(64, 64))
    record("generate_square_dims", *_expect_image(resp, 64, 64))

    # non-square generation
    resp = http.post(f"{base}/v1/generate", json=_payload(128, 64))
    record("generate_rect_dims", *_expect_image(resp, 128, 64))

    # identical requests produce identical bytes
    body = _payload(64, 64, seed=1234)
    first = http.post(f"{base}/v1/generate", json=body)
    second = http.post(f"{base}/v1/generate", json=body)
    ok = first.status_code == 200 and second.status_code == 200
    detail = ""
    if ok:
        h1 = hashlib.sha256(first.json().get("image_png", "").encode()).hexdigest()
        h2 = hashlib.sha256(second.json().get("image_png", "").encode()).hexdigest()
        ok = h1 == h2
        detail = "" if ok else "repeated request returned different images"
    else:
        detail = f"HTTP {first.status_code}/{second.status_code}"
    record("generate_deterministic", ok, detail)

    # full u64 seed range is accepted
    resp = http.post(f"{base}/v1/generate", json=_payload(64, 64, seed=2**64 - 1))
    record("seed_u64_max", *_expect_image(resp, 64, 64))

    # errors: missing field
    bad = _payload(64, 64)
    del bad["prompt"]
    record("error_missing_field", *_expect_error(http.post(f"{base}/v1/generate", json=bad)))

    # errors: undecodable edge image
    record(
        "error_bad_base64",
        *_expect_error(
            http.post(f"{base}/v1/generate", json=_payload(64, 64, edges_png="@@not-base64@@"))
        ),
    )

    # errors: dimensions not a positive multiple of 64
    record(
        "error_dims_not_multiple",
        *_expect_error(http.post(f"{base}/v1/generate", json=_payload(64, 64, height=63))),
    )

    # errors: declared dimensions disagree with the edge image
    mismatched = _payload(64, 64)
    mismatched["height"] = 128
    record(
        "error_dims_mismatch",
        *_expect_error(http.post(f"{base}/v1/generate", json=mismatched)),
    )

    # errors: negative seed
    record(
        "error_negative_seed",
        *_expect_error(http.post(f"{base}/v1/generate", json=_payload(64, 64, seed=-1))),
    )

    # errors: empty prompt
    record(
        "error_empty_prompt",
        *_expect_error(http.post(f"{base}/v1/generate", json=_payload(64, 64, prompt=""))),
    )

    return results


def failures(results: list[CaseResult]) -> list[CaseResult]:
    return [r for r in results if not r.passed]
