"""Command-line surface for the engine.

Exit codes: 0 success, 2 validation error, 3 backend error, 4 store
corruption. No command mutates an input store in place; outputs go to
fresh paths or the command fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .dataset import ProceduralDataset, write_dataset
from .errors import BackendError, StoreCorruptionError, ValidationError
from .harness import featurize, load_experiment_config, run_experiment
from .images import load_png, save_png
from .memory import allocate, herding_order, select_exemplars
from .prompts import (
    GAMMA_POLICIES,
    LABEL_STYLES,
    SCHEMES,
    PromptRecord,
    avg_area_ratio,
    capacity_per_unit,
    choose_gamma,
    extract_visual_prompt,
    load_label_table,
    normalize_label,
)
from .regen import GenerationCache, RemoteBackend, StubBackend, regenerate_prompt
from .server import serve_forever
from .store import ExemplarStore, RealExemplar, store_load, store_save


def _fresh_dir(path: Path, what: str) -> None:
    if path.exists() and any(path.iterdir()):
        raise ValidationError(f"{what} {path} already exists and is not empty")


def _backend_from_arg(spec: str):
    if spec == "stub":
        return StubBackend()
    if spec.startswith("http://") or spec.startswith("https://"):
        return RemoteBackend(spec)
    raise ValidationError(f"backend must be 'stub' or an http(s) endpoint, got {spec!r}")


def _cmd_compress(args) -> int:
    input_dir = Path(args.input)
    if not input_dir.is_dir():
        raise ValidationError(f"input directory {input_dir} does not exist")
    labels = load_label_table(args.labels)
    out = Path(args.out)
    _fresh_dir(out, "output store")

    class_dirs = sorted(
        (p for p in input_dir.iterdir() if p.is_dir() and p.name.isdigit()),
        key=lambda p: int(p.name),
    )
    if not class_dirs:
        raise ValidationError(f"no numeric class subdirectories under {input_dir}")

    images_by_class = {}
    all_dims = []
    for class_dir in class_dirs:
        class_id = int(class_dir.name)
        if class_id >= len(labels):
            raise ValidationError(
                f"class {class_id} has no label (table has {len(labels)} lines)"
            )
        files = sorted(class_dir.glob("*.png"))
        if not files:
            raise ValidationError(f"class directory {class_dir} holds no PNG files")
        loaded = [(f.stem, load_png(f)) for f in files]
        images_by_class[class_id] = loaded
        all_dims.extend((img.height, img.width) for _, img in loaded)

    ratio = avg_area_ratio(all_dims, args.gamma_policy)
    capacity = capacity_per_unit(ratio)
    ledger = allocate(args.units, args.alpha, capacity)
    store = ExemplarStore(ledger)

    for class_id, loaded in sorted(images_by_class.items()):
        text = normalize_label(labels[class_id], args.style)
        feats = np.vstack([featurize(img) for _, img in loaded])
        rank = herding_order(feats, class_id)
        selection = select_exemplars(rank, ledger)
        real = [
            RealExemplar(class_id, loaded[i][0], loaded[i][1]) for i in selection.real
        ]
        prompts = []
        for i in selection.prompts:
            source_id, img = loaded[i]
            gamma = choose_gamma(img.height, img.width, args.gamma_policy)
            visual = extract_visual_prompt(img, gamma, args.scheme, args.canny_low, args.canny_high)
            prompts.append(PromptRecord(visual, text, class_id, source_id))
        store.add_class(class_id, real, prompts)

    store_save(store, out)
    real_bytes = sum(
        ex.image.height * ex.image.width * 3
        for items in store.real.values()
        for ex in items
    )
    prompt_bytes = sum(store.prompt_payload_bytes(c) for c in store.classes())
    print(f"store written to {out}")
    print(f"classes: {len(store.classes())}")
    print(f"slots per class: R={ledger.real_slots} real, S={ledger.prompt_slots} prompts")
    print(f"area ratio: {ratio:.3f}  capacity/unit: {capacity:.3f}")
    print(f"payload bytes: real={real_bytes}  prompts={prompt_bytes}")
    return 0


def _cmd_regenerate(args) -> int:
    store = store_load(args.store)
    out = Path(args.out)
    _fresh_dir(out, "output directory")
    backend = _backend_from_arg(args.backend)
    cache = GenerationCache(Path(args.cache) if args.cache else out / ".cache")

    written = 0
    for class_id in store.classes():
        for rec in store.prompts.get(class_id, []):
            images = regenerate_prompt(rec, args.copies, args.base_seed, backend, cache)
            target = out / str(class_id)
            target.mkdir(parents=True, exist_ok=True)
            for k, img in enumerate(images, start=1):
                save_png(img, target / f"{rec.source_id}_k{k}.png")
                written += 1
    total = cache.hits + cache.misses
    rate = (100.0 * cache.hits / total) if total else 0.0
    print(f"wrote {written} images to {out}")
    print(f"cache: {cache.hits} hits / {total} lookups ({rate:.0f}% hits)")
    return 0


def _cmd_run_cil(args) -> int:
    cfg = load_experiment_config(args.config)
    workdir = Path(args.workdir)
    metrics = run_experiment(cfg, workdir)
    print("phase  accuracy")
    for i, acc in enumerate(metrics.per_phase):
        print(f"{i:>5}  {acc:.4f}")
    print(f"average accuracy: {metrics.average:.4f}")
    print(f"last accuracy:    {metrics.last:.4f}")
    print(f"report: {workdir / 'metrics.json'}  csv: {workdir / 'metrics.csv'}")
    return 0


def _cmd_inspect(args) -> int:
    store = store_load(args.store)
    ledger = store.ledger
    print(f"store: {args.store}")
    print(
        f"ledger: b={ledger.units_per_class} alpha={ledger.compressed_fraction:.3f} "
        f"capacity/unit={ledger.capacity_per_unit:.3f} R={ledger.real_slots} "
        f"S={ledger.prompt_slots}"
    )
    print(f"classes: {store.classes()}")
    for class_id in store.classes():
        n_real = len(store.real.get(class_id, []))
        n_prompts = len(store.prompts.get(class_id, []))
        print(
            f"  class {class_id}: {n_real} real, {n_prompts} prompts, "
            f"{store.prompt_payload_bytes(class_id)} prompt payload bytes"
        )
    print("integrity: all checksums verified")
    return 0


def _cmd_gen_dataset(args) -> int:
    out = Path(args.out)
    _fresh_dir(out, "output directory")
    dataset = ProceduralDataset(args.classes, args.n_per_class, args.size, args.seed)
    write_dataset(dataset, out)
    n_train = sum(len(dataset.train_samples([c])) for c in range(args.classes))
    n_test = sum(len(dataset.test_samples([c])) for c in range(args.classes))
    print(f"dataset written to {out}: {args.classes} classes, "
          f"{n_train} train / {n_test} test images, labels.txt")
    return 0


def _cmd_fake_server(args) -> int:
    serve_forever(StubBackend(), args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgereplay",
        description="Exemplar compression, regeneration, and class-incremental experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="herd a dataset into an exemplar store")
    p.add_argument("--input", required=True, help="directory of <class_id>/*.png")
    p.add_argument("--labels", required=True, help="label table, one raw label per line")
    p.add_argument("--style", choices=LABEL_STYLES, default="food")
    p.add_argument("--gamma-policy", choices=GAMMA_POLICIES, default="caltech_adaptive")
    p.add_argument("--scheme", choices=SCHEMES, default="image_first")
    p.add_argument("--units", type=int, required=True, help="memory units per class (b)")
    p.add_argument("--alpha", type=float, required=True, help="compressed proportion")
    p.add_argument("--canny-low", type=float, default=100.0)
    p.add_argument("--canny-high", type=float, default=200.0)
    p.add_argument("--out", required=True, help="fresh store directory")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("regenerate", help="generate exemplars from stored prompts")
    p.add_argument("--store", required=True)
    p.add_argument("--copies", type=int, default=1, help="copies per prompt (K)")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--backend", default="stub", help="'stub' or service endpoint URL")
    p.add_argument("--cache", default=None, help="cache directory (default <out>/.cache)")
    p.add_argument("--out", required=True, help="fresh output directory")
    p.set_defaults(func=_cmd_regenerate)

    p = sub.add_parser("run-cil", help="run a class-incremental experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--workdir", required=True, help="directory for store/cache/metrics")
    p.set_defaults(func=_cmd_run_cil)

    p = sub.add_parser("inspect", help="verify and summarise a store")
    p.add_argument("--store", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("gen-dataset", help="write a procedural dataset as PNGs")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("fake-server", help="serve the wire protocol with the stub backend")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=_cmd_fake_server)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StoreCorruptionError as exc:
        print(f"store corruption: {exc}", file=sys.stderr)
        return 4
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
