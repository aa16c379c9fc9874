import hashlib
import json
from pathlib import Path

import pytest

from edgereplay.errors import StoreCorruptionError, ValidationError
from edgereplay.images import BitEdgeMap
from edgereplay.memory import allocate
from edgereplay.prompts import PromptRecord, TextualPrompt, VisualPrompt
from edgereplay.store import (
    ExemplarStore,
    RealExemplar,
    image_payload_bytes,
    store_load,
    store_save,
)

from conftest import random_rgb


def make_prompt(rng, class_id: int, source_id: str, size: int = 64) -> PromptRecord:
    mask = rng.random((size, size)) < 0.1
    visual = VisualPrompt(BitEdgeMap.from_mask(mask), 48, 52, "edge_first")
    return PromptRecord(visual, TextualPrompt("test class"), class_id, source_id)


def populated_store(rng, classes=2, n_real=4, n_prompts=18) -> ExemplarStore:
    ledger = allocate(5, 0.2, 18.838)  # R=4, S=18
    store = ExemplarStore(ledger)
    for c in range(classes):
        real = [
            RealExemplar(c, f"c{c}_r{i}", random_rgb(rng, 24, 24)) for i in range(n_real)
        ]
        prompts = [make_prompt(rng, c, f"c{c}_p{i}") for i in range(n_prompts)]
        store.add_class(c, real, prompts)
    return store


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_empty_store_roundtrip(tmp_path):
    store = ExemplarStore(allocate(5, 0.2, 18.838))
    store_save(store, tmp_path / "s")
    assert store_load(tmp_path / "s") == store


def test_two_class_store_roundtrip(tmp_path, rng):
    store = populated_store(rng)
    manifest = store_save(store, tmp_path / "s")
    assert len(manifest["entries"]) == 44  # 2 * (4 real + 18 prompts)
    loaded = store_load(tmp_path / "s")
    assert loaded == store


def test_save_is_deterministic(tmp_path, rng):
    store = populated_store(rng)
    store_save(store, tmp_path / "a")
    store_save(store, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    # and no temp files or timestamps in the manifest
    assert not list((tmp_path / "a").rglob("*.tmp"))
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert "time" not in json.dumps(manifest).lower()


@pytest.mark.parametrize("kind", ["real", "prompt"])
def test_tampered_blob_fails_checksum(tmp_path, rng, kind):
    store = populated_store(rng, classes=1, n_real=2, n_prompts=2)
    store_save(store, tmp_path / "s")
    pattern = "real/0/*.png" if kind == "real" else "prompts/0/*.ebm"
    victim = sorted((tmp_path / "s").glob(pattern))[0]
    blob = bytearray(victim.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    victim.write_bytes(bytes(blob))
    with pytest.raises(StoreCorruptionError):
        store_load(tmp_path / "s")


def test_missing_blob_detected(tmp_path, rng):
    store = populated_store(rng, classes=1, n_real=1, n_prompts=1)
    store_save(store, tmp_path / "s")
    sorted((tmp_path / "s").glob("prompts/0/*.ebm"))[0].unlink()
    with pytest.raises(StoreCorruptionError):
        store_load(tmp_path / "s")


def test_missing_manifest_detected(tmp_path):
    with pytest.raises(StoreCorruptionError):
        store_load(tmp_path / "nothing")


def test_wrong_version_rejected(tmp_path, rng):
    store = populated_store(rng, classes=1, n_real=1, n_prompts=0)
    store_save(store, tmp_path / "s")
    manifest_path = tmp_path / "s" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["store_version"] = 99
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(StoreCorruptionError):
        store_load(tmp_path / "s")


def test_slot_overflow_rejected_on_add(rng):
    ledger = allocate(2, 0.5, 24.0)  # R=1, S=24
    store = ExemplarStore(ledger)
    too_many_real = [RealExemplar(0, f"r{i}", random_rgb(rng, 8, 8)) for i in range(2)]
    with pytest.raises(ValidationError):
        store.add_class(0, too_many_real, [])


def test_classes_append_only(rng):
    store = populated_store(rng, classes=1, n_real=1, n_prompts=1)
    with pytest.raises(ValidationError):
        store.add_class(0, [], [])


def test_ledger_overflow_detected_on_load(tmp_path, rng):
    store = populated_store(rng, classes=1, n_real=4, n_prompts=4)
    store_save(store, tmp_path / "s")
    manifest_path = tmp_path / "s" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["ledger"]["real_slots"] = 3
    manifest["ledger"]["compressed_units"] = 2
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(StoreCorruptionError):
        store_load(tmp_path / "s")


def test_prompt_payload_accounting(rng):
    # 24 prompts of 256x256 bits cost exactly one 256x256 RGB unit
    ledger = allocate(4, 0.25, 24.0)  # compressed_units=1, S=24
    store = ExemplarStore(ledger)
    prompts = [make_prompt(rng, 0, f"p{i}", size=256) for i in range(24)]
    for rec in prompts:
        assert rec.visual.edges.height == 256
    store.add_class(0, [], prompts)
    unit = image_payload_bytes(random_rgb(rng, 256, 256))
    payload = store.prompt_payload_bytes(0)
    assert payload <= ledger.compressed_units * unit * 1.02
    assert payload == 24 * 256 * 256 // 8
