import base64

import numpy as np
import pytest

from edgereplay.conformance import failures, run_conformance
from edgereplay.errors import BackendError, ProtocolError
from edgereplay.images import RgbImage, png_bytes
from edgereplay.prompts import TextualPrompt
from edgereplay.regen import GenerationCache, GenerationRequest, RemoteBackend, StubBackend, generate
from edgereplay.server import ServerThread

from conftest import ring_edges


@pytest.fixture(scope="module")
def fake_server():
    with ServerThread(StubBackend()) as server:
        yield server


def test_conformance_corpus_passes_against_fake_server(fake_server):
    results = run_conformance(fake_server.endpoint)
    failed = failures(results)
    assert not failed, [f"{r.name}: {r.detail}" for r in failed]
    assert len(results) >= 10


def test_health_reports_backend_id(fake_server):
    backend = RemoteBackend(fake_server.endpoint)
    assert backend.identifier == "stub/v2"


def test_remote_roundtrip_matches_local_stub(fake_server, tmp_path):
    edges = ring_edges(128, 128)
    req = GenerationRequest(edges, TextualPrompt("ring probe"), 3, 128, 128)
    remote = generate(req, RemoteBackend(fake_server.endpoint), GenerationCache(tmp_path / "c"))
    local = generate(req, StubBackend())
    assert remote == local


def test_remote_deterministic(fake_server):
    backend = RemoteBackend(fake_server.endpoint)
    edges = ring_edges(64, 64)
    a = backend.render(edges, "probe words", 5)
    b = backend.render(edges, "probe words", 5)
    assert a == b


def test_4xx_raises_protocol_error_and_skips_cache(fake_server, tmp_path):
    # raw request whose declared dims disagree with the PNG: the server
    # must answer with a protocol error body and nothing may be cached
    import requests

    payload = {
        "edges_png": base64.b64encode(
            png_bytes(RgbImage.from_array(np.zeros((64, 64, 3), dtype=np.uint8)))
        ).decode(),
        "prompt": "x",
        "seed": 1,
        "height": 128,
        "width": 64,
    }
    resp = requests.post(f"{fake_server.endpoint}/v1/generate", json=payload, timeout=10)
    assert resp.status_code == 400
    body = resp.json()
    assert body["error"]["code"]
    # nothing was cached anywhere
    assert not list((tmp_path / "cache").rglob("*.png"))


def test_unreachable_endpoint_is_retryable_backend_error():
    backend = RemoteBackend("http://127.0.0.1:1", timeout=2)
    with pytest.raises(BackendError) as err:
        _ = backend.identifier
    assert err.value.retryable


class _WrongSizeBackend(StubBackend):
    """Misbehaving backend: returns an image at half the requested size."""

    def render(self, edges, text, seed):
        full = super().render(edges, text, seed)
        half = full.pixels[:: 2, :: 2]
        return RgbImage.from_array(half)


def test_oversized_response_raises_dimension_mismatch(tmp_path):
    with ServerThread(_WrongSizeBackend()) as server:
        backend = RemoteBackend(server.endpoint)
        with pytest.raises(ProtocolError) as err:
            backend.render(ring_edges(128, 128), "probe", 1)
        assert err.value.code == "dimension_mismatch"


class _ErrorBodyBackend(StubBackend):
    def render(self, edges, text, seed):
        raise RuntimeError("synthetic failure")


def test_generation_failure_surfaces_error_body():
    with ServerThread(_ErrorBodyBackend()) as server:
        import requests

        from edgereplay.conformance import _payload

        resp = requests.post(f"{server.endpoint}/v1/generate", json=_payload(), timeout=10)
        assert resp.status_code == 500
        assert resp.json()["error"]["code"] == "generation_failed"


def test_remote_generate_via_generate_uses_cache_key_on_error(fake_server, tmp_path):
    # dimension mismatch through the full generate() path carries a cache key
    with ServerThread(_WrongSizeBackend()) as server:
        backend = RemoteBackend(server.endpoint)
        req = GenerationRequest(ring_edges(128, 128), TextualPrompt("probe"), 1, 128, 128)
        with pytest.raises(ProtocolError) as err:
            generate(req, backend, GenerationCache(tmp_path / "c"))
        assert err.value.cache_key
