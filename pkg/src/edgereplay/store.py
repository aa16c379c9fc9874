"""Persistent exemplar store: real PNGs, prompt blobs, and a manifest.

Directory layout (store_version 1):

    root/
      manifest.json           # written last, atomically via rename
      real/<class_id>/<source_id>.png
      prompts/<class_id>/<source_id>.ebm

The manifest records the ledger, the class list, and one entry per
exemplar with its content hash. No timestamps are stored, so identical
inputs produce byte-identical stores. Loading verifies every hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .ebm import decode_ebm, encode_ebm, pixel_payload_bytes
from .errors import StoreCorruptionError, ValidationError
from .images import RgbImage, load_png, png_bytes, save_png
from .memory import MemoryLedger
from .prompts import PromptRecord, TextualPrompt, VisualPrompt

STORE_VERSION = 1

_SOURCE_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


@dataclass(frozen=True)
class RealExemplar:
    class_id: int
    source_id: str
    image: RgbImage


@dataclass
class ExemplarStore:
    """In-memory view of the rehearsal memory for all classes seen so far."""

    ledger: MemoryLedger
    real: dict[int, list[RealExemplar]] = field(default_factory=dict)
    prompts: dict[int, list[PromptRecord]] = field(default_factory=dict)

    def classes(self) -> list[int]:
        return sorted(set(self.real) | set(self.prompts))

    def add_class(
        self,
        class_id: int,
        real_exemplars: list[RealExemplar],
        prompt_records: list[PromptRecord],
    ) -> None:
        """Register a newly learned class; existing classes are append-only."""
        if class_id in self.real or class_id in self.prompts:
            raise ValidationError(f"class {class_id} already stored; classes are append-only")
        if len(real_exemplars) > self.ledger.real_slots:
            raise ValidationError(
                f"class {class_id}: {len(real_exemplars)} real exemplars exceed "
                f"{self.ledger.real_slots} slots"
            )
        if len(prompt_records) > self.ledger.prompt_slots:
            raise ValidationError(
                f"class {class_id}: {len(prompt_records)} prompts exceed "
                f"{self.ledger.prompt_slots} slots"
            )
        for ex in real_exemplars:
            _check_source_id(ex.source_id)
            if ex.class_id != class_id:
                raise ValidationError("real exemplar class mismatch")
        for rec in prompt_records:
            _check_source_id(rec.source_id)
            if rec.class_id != class_id:
                raise ValidationError("prompt record class mismatch")
        self.real[class_id] = list(real_exemplars)
        self.prompts[class_id] = list(prompt_records)

    def prompt_payload_bytes(self, class_id: int) -> int:
        """Packed pixel bytes of the class's prompt blobs (headers excluded)."""
        return sum(pixel_payload_bytes(rec.visual.edges) for rec in self.prompts.get(class_id, []))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExemplarStore):
            return NotImplemented
        return (
            self.ledger == other.ledger
            and self.real == other.real
            and self.prompts == other.prompts
        )


def _check_source_id(source_id: str) -> None:
    if not _SOURCE_ID_RE.match(source_id):
        raise ValidationError(
            f"source_id {source_id!r} must match {_SOURCE_ID_RE.pattern} (it names a file)"
        )


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def store_save(store: ExemplarStore, root: str | Path) -> dict:
    """Write the store under root and return the manifest dict."""
    root = Path(root)
    entries = []
    for class_id in store.classes():
        for ex in store.real.get(class_id, []):
            rel = f"real/{class_id}/{ex.source_id}.png"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            save_png(ex.image, path)
            entries.append(
                {
                    "kind": "real",
                    "path": rel,
                    "class_id": class_id,
                    "source_id": ex.source_id,
                    "sha256": _sha256(path.read_bytes()),
                }
            )
        for rec in store.prompts.get(class_id, []):
            rel = f"prompts/{class_id}/{rec.source_id}.ebm"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            blob = encode_ebm(rec.visual.edges, rec.visual.orig_h, rec.visual.orig_w)
            path.write_bytes(blob)
            entries.append(
                {
                    "kind": "prompt",
                    "path": rel,
                    "class_id": class_id,
                    "source_id": rec.source_id,
                    "sha256": _sha256(blob),
                    "text": rec.textual.text,
                    "scheme": rec.visual.scheme,
                }
            )
    manifest = {
        "store_version": STORE_VERSION,
        "ledger": {
            "units_per_class": store.ledger.units_per_class,
            "compressed_fraction": store.ledger.compressed_fraction,
            "capacity_per_unit": store.ledger.capacity_per_unit,
            "compressed_units": store.ledger.compressed_units,
            "real_slots": store.ledger.real_slots,
            "prompt_slots": store.ledger.prompt_slots,
        },
        "classes": store.classes(),
        "entries": entries,
    }
    tmp = root / "manifest.json.tmp"
    root.mkdir(parents=True, exist_ok=True)
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, root / "manifest.json")
    return manifest


def store_load(root: str | Path) -> ExemplarStore:
    """Load and verify a store; raises StoreCorruptionError on any damage."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise StoreCorruptionError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreCorruptionError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("store_version") != STORE_VERSION:
        raise StoreCorruptionError(
            f"unsupported store_version {manifest.get('store_version')!r}"
        )
    led = manifest["ledger"]
    ledger = MemoryLedger(
        units_per_class=led["units_per_class"],
        compressed_fraction=led["compressed_fraction"],
        capacity_per_unit=led["capacity_per_unit"],
        compressed_units=led["compressed_units"],
        real_slots=led["real_slots"],
        prompt_slots=led["prompt_slots"],
    )

    real: dict[int, list[RealExemplar]] = {}
    prompts: dict[int, list[PromptRecord]] = {}
    for entry in manifest["entries"]:
        path = root / entry["path"]
        if not path.exists():
            raise StoreCorruptionError(f"missing blob: {entry['path']}")
        blob = path.read_bytes()
        if _sha256(blob) != entry["sha256"]:
            raise StoreCorruptionError(f"checksum mismatch for {entry['path']}")
        class_id = int(entry["class_id"])
        if entry["kind"] == "real":
            image = load_png(path)
            real.setdefault(class_id, []).append(
                RealExemplar(class_id, entry["source_id"], image)
            )
        elif entry["kind"] == "prompt":
            try:
                edges, orig_h, orig_w = decode_ebm(blob)
            except ValidationError as exc:
                raise StoreCorruptionError(f"bad prompt blob {entry['path']}: {exc}") from exc
            prompts.setdefault(class_id, []).append(
                PromptRecord(
                    visual=VisualPrompt(edges, orig_h, orig_w, entry["scheme"]),
                    textual=TextualPrompt(entry["text"]),
                    class_id=class_id,
                    source_id=entry["source_id"],
                )
            )
        else:
            raise StoreCorruptionError(f"unknown entry kind {entry['kind']!r}")

    for class_id, items in real.items():
        if len(items) > ledger.real_slots:
            raise StoreCorruptionError(
                f"class {class_id} holds {len(items)} real exemplars > R={ledger.real_slots}"
            )
    for class_id, items in prompts.items():
        if len(items) > ledger.prompt_slots:
            raise StoreCorruptionError(
                f"class {class_id} holds {len(items)} prompts > S={ledger.prompt_slots}"
            )

    store = ExemplarStore(ledger=ledger)
    for class_id in sorted(set(real) | set(prompts)):
        store.real[class_id] = real.get(class_id, [])
        store.prompts[class_id] = prompts.get(class_id, [])
    return store


def image_payload_bytes(img: RgbImage) -> int:
    """Raw RGB payload of one image, the definition of a memory unit."""
    return img.height * img.width * 3


__all__ = [
    "ExemplarStore",
    "RealExemplar",
    "STORE_VERSION",
    "image_payload_bytes",
    "store_load",
    "store_save",
    "png_bytes",
]
