"""Desk-scale class-incremental experiment runner.

Per phase: regenerate stored prompt exemplars, generate augmentation
copies for real images, train the linear learner on per-epoch streams
where real images are probabilistically swapped for generated copies,
evaluate on all classes seen so far, then herd and persist the new
classes' exemplars and prompts. Everything is a pure function of the
experiment seed.

The classifier is multinomial logistic regression over fixed pixel
features rather than a deep network: the engine's subject matter is the
memory pipeline, and a simple learner keeps runs deterministic while
preserving the class-imbalance phenomena replay is meant to fix.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ProceduralDataset
from .errors import TrainingDiverged, ValidationError
from .images import RgbImage
from .memory import allocate, herding_order, select_exemplars
from .prompts import (
    GAMMA_POLICIES,
    SCHEMES,
    TextualPrompt,
    PromptRecord,
    avg_area_ratio,
    capacity_per_unit,
    choose_gamma,
    extract_visual_prompt,
    normalize_label,
)
from .regen import (
    GenerationCache,
    GenerationRequest,
    RemoteBackend,
    StubBackend,
    copy_seed,
    generate,
    regenerate_prompt,
)
from .resample import resize_rgb
from .seeding import digest64, rng_for
from .store import ExemplarStore, RealExemplar, store_save

PROTOCOLS = ("LFH", "LFS")

FEATURE_SIDE = 16
FEATURE_DIM = FEATURE_SIDE * FEATURE_SIDE * 3


# ---------------------------------------------------------------------------
# Phase plans


@dataclass(frozen=True)
class PhasePlan:
    protocol: str
    n_phases_param: int
    classes_per_phase: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for group in self.classes_per_phase:
            if seen & set(group):
                raise ValidationError("phase class sets must be disjoint")
            seen |= set(group)


def _even_split(ids: list[int], groups: int) -> list[tuple[int, ...]]:
    # Sizes ceil then floor, larger groups first.
    n = len(ids)
    base, extra = divmod(n, groups)
    out = []
    pos = 0
    for g in range(groups):
        size = base + (1 if g < extra else 0)
        out.append(tuple(ids[pos : pos + size]))
        pos += size
    return out


def make_phase_plan(num_classes: int, n: int, protocol: str, seed: int) -> PhasePlan:
    if protocol not in PROTOCOLS:
        raise ValidationError(f"unknown protocol {protocol!r}")
    if protocol == "LFS":
        if not (1 <= n <= num_classes):
            raise ValidationError(f"LFS needs 1 <= N <= classes, got N={n}, C={num_classes}")
    else:
        if num_classes < 2:
            raise ValidationError("LFH needs at least 2 classes")
        if not (1 <= n <= num_classes // 2):
            raise ValidationError(
                f"LFH needs 1 <= N <= floor(C/2), got N={n}, C={num_classes}"
            )
    order = [int(c) for c in rng_for("phase-plan", seed).permutation(num_classes)]
    if protocol == "LFS":
        groups = _even_split(order, n)
    else:
        first = math.ceil(num_classes / 2)
        groups = [tuple(order[:first])] + _even_split(order[first:], n)
    return PhasePlan(protocol, n, tuple(groups))


# ---------------------------------------------------------------------------
# Features and classifier


def featurize(img: RgbImage) -> np.ndarray:
    """Fixed image embedding: area-resize to 16x16, standardise each channel
    over its own pixels (zero-variance channels become zeros), flatten."""
    small = resize_rgb(img, FEATURE_SIDE, FEATURE_SIDE, "area").pixels.astype(np.float64)
    flat = small.reshape(-1, 3)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    standardised = np.where(std > 0, (flat - mean) / safe, 0.0)
    return standardised.reshape(-1)


@dataclass(frozen=True)
class ClassifierState:
    """Linear softmax classifier; rows follow class observation order."""

    class_ids: tuple[int, ...]
    weights: np.ndarray  # (n_classes, FEATURE_DIM)
    bias: np.ndarray  # (n_classes,)

    @classmethod
    def empty(cls, feature_dim: int = FEATURE_DIM) -> "ClassifierState":
        return cls((), np.zeros((0, feature_dim)), np.zeros(0))

    def extend(self, new_class_ids: list[int]) -> "ClassifierState":
        """Add zero-initialised rows for newly observed classes."""
        dup = set(new_class_ids) & set(self.class_ids)
        if dup:
            raise ValidationError(f"classes already observed: {sorted(dup)}")
        rows = len(new_class_ids)
        return ClassifierState(
            self.class_ids + tuple(new_class_ids),
            np.vstack([self.weights, np.zeros((rows, self.weights.shape[1]))]),
            np.concatenate([self.bias, np.zeros(rows)]),
        )

    def row_of(self, class_id: int) -> int:
        try:
            return self.class_ids.index(class_id)
        except ValueError:
            raise ValidationError(f"class {class_id} not observed yet") from None


def loss_and_grad(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y_rows: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of the softmax model and its analytic gradient."""
    logits = x @ weights.T + bias
    logits -= logits.max(axis=1, keepdims=True)
    expz = np.exp(logits)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = x.shape[0]
    loss = float(-np.log(probs[np.arange(n), y_rows] + 1e-300).mean())
    delta = probs
    delta[np.arange(n), y_rows] -= 1.0
    grad_w = delta.T @ x / n
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def _epoch_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    # Step decay x0.1 at 60% and 85% of the schedule.
    lr = base_lr
    for pivot in (math.floor(0.6 * total_epochs), math.floor(0.85 * total_epochs)):
        if pivot > 0 and epoch >= pivot:
            lr *= 0.1
    return lr


def train_phase(
    state: ClassifierState,
    epoch_stream,
    learning_rate: float,
    epochs: int,
    batch_size: int = 32,
) -> ClassifierState:
    """Plain SGD over per-epoch streams.

    `epoch_stream(epoch)` returns the already-shuffled (features, rows)
    arrays for that epoch; batches are consumed in stream order.
    """
    if epochs < 0:
        raise ValidationError("epochs must be >= 0")
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    weights = state.weights.copy()
    bias = state.bias.copy()
    for epoch in range(epochs):
        x, y_rows = epoch_stream(epoch)
        if x.shape[0] == 0:
            continue
        if x.shape[1] != weights.shape[1]:
            raise ValidationError(
                f"feature dim {x.shape[1]} does not match classifier {weights.shape[1]}"
            )
        lr = _epoch_lr(learning_rate, epoch, epochs)
        for start in range(0, x.shape[0], batch_size):
            xb = x[start : start + batch_size]
            yb = y_rows[start : start + batch_size]
            loss, grad_w, grad_b = loss_and_grad(weights, bias, xb, yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch offset {start}, lr {lr}"
                )
            weights -= lr * grad_w
            bias -= lr * grad_b
    return ClassifierState(state.class_ids, weights, bias)


def evaluate(state: ClassifierState, x: np.ndarray, class_labels: np.ndarray) -> float:
    """Top-1 accuracy over the test set; all labels must be observed."""
    if x.shape[0] == 0:
        raise ValidationError("test set must be nonempty")
    rows = np.array([state.row_of(int(c)) for c in class_labels])
    logits = x @ state.weights.T + state.bias
    return float((logits.argmax(axis=1) == rows).mean())


# ---------------------------------------------------------------------------
# Per-epoch sample streams


@dataclass(frozen=True)
class AugmentedItem:
    """One training source: a real image and/or its generated copies.

    kind "new" and "real_exemplar" carry a real feature row and are
    replaced by a uniformly chosen copy with probability p each epoch;
    kind "synthetic" has no real image and contributes exactly one of its
    copies per epoch.
    """

    kind: str  # "new" | "real_exemplar" | "synthetic"
    label_row: int
    real_bank: int | None
    copy_banks: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in ("new", "real_exemplar", "synthetic"):
            raise ValidationError(f"unknown item kind {self.kind!r}")
        if self.kind == "synthetic":
            if self.real_bank is not None:
                raise ValidationError("synthetic items carry no real image")
        elif self.real_bank is None:
            raise ValidationError(f"{self.kind} items need a real feature row")


def epoch_view(
    items: list[AugmentedItem], p: float, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """One epoch's sample stream as shuffled (bank_index, label_row) pairs."""
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"p must be in [0, 1], got {p}")
    picked: list[tuple[int, int]] = []
    for item in items:
        if item.kind == "synthetic":
            if not item.copy_banks:
                continue  # zero copies per image: prompts contribute nothing
            bank = item.copy_banks[int(rng.integers(len(item.copy_banks)))]
        else:
            bank = item.real_bank
            if p > 0.0:
                if not item.copy_banks:
                    raise ValidationError(
                        "p > 0 requires generated copies (K >= 1) for every real image"
                    )
                if rng.random() < p:
                    bank = item.copy_banks[int(rng.integers(len(item.copy_banks)))]
        picked.append((bank, item.label_row))
    order = rng.permutation(len(picked))
    return [picked[int(i)] for i in order]


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass(frozen=True)
class TrainConfig:
    """Sampling, augmentation, and optimisation parameters."""

    p: float = 0.0
    copies: int = 0  # generated copies per image (K)
    alpha: float = 0.0
    units_per_class: int = 5
    epochs_first: int = 200
    epochs_later: int = 170
    learning_rate: float = 0.03
    experiment_seed: int = 0
    batch_size: int = 32
    augment_exemplars: bool = True

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValidationError(f"p must be in [0, 1], got {self.p}")
        if self.copies < 0:
            raise ValidationError("copies must be >= 0")
        if self.p > 0 and self.copies == 0:
            raise ValidationError("p > 0 requires copies >= 1 (nothing to replace with)")


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "LFH"
    phases: int = 4
    classes: int = 10
    n_per_class: int = 60
    image_size: int = 256
    units_per_class: int = 4
    alpha: float = 0.25
    p: float = 0.2
    copies: int = 3
    epochs_first: int = 60
    epochs_later: int = 45
    learning_rate: float = 0.03
    batch_size: int = 32
    experiment_seed: int = 0
    backend: str = "stub"  # "stub" or a service endpoint URL
    gamma_policy: str = "caltech_adaptive"
    scheme: str = "image_first"
    canny_low: float = 100.0
    canny_high: float = 200.0
    augment_exemplars: bool = True

    def __post_init__(self):
        _validate_config(self)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            p=self.p,
            copies=self.copies,
            alpha=self.alpha,
            units_per_class=self.units_per_class,
            epochs_first=self.epochs_first,
            epochs_later=self.epochs_later,
            learning_rate=self.learning_rate,
            experiment_seed=self.experiment_seed,
            batch_size=self.batch_size,
            augment_exemplars=self.augment_exemplars,
        )


def _validate_config(cfg: ExperimentConfig) -> None:
    checks = [
        ("protocol", cfg.protocol in PROTOCOLS, f"must be one of {PROTOCOLS}"),
        ("phases", isinstance(cfg.phases, int) and cfg.phases >= 1, "must be an integer >= 1"),
        ("classes", isinstance(cfg.classes, int) and cfg.classes >= 2, "must be an integer >= 2"),
        ("n_per_class", isinstance(cfg.n_per_class, int) and cfg.n_per_class >= 2, "must be >= 2"),
        ("image_size", isinstance(cfg.image_size, int) and cfg.image_size >= 16, "must be >= 16"),
        ("units_per_class", isinstance(cfg.units_per_class, int) and cfg.units_per_class >= 1, "must be >= 1"),
        ("alpha", 0.0 <= cfg.alpha <= 1.0, "must be in [0, 1]"),
        ("p", 0.0 <= cfg.p <= 1.0, "must be in [0, 1]"),
        ("copies", isinstance(cfg.copies, int) and cfg.copies >= 0, "must be an integer >= 0"),
        ("epochs_first", isinstance(cfg.epochs_first, int) and cfg.epochs_first >= 0, "must be >= 0"),
        ("epochs_later", isinstance(cfg.epochs_later, int) and cfg.epochs_later >= 0, "must be >= 0"),
        ("learning_rate", cfg.learning_rate >= 0, "must be >= 0"),
        ("batch_size", isinstance(cfg.batch_size, int) and cfg.batch_size >= 1, "must be >= 1"),
        ("experiment_seed", isinstance(cfg.experiment_seed, int) and 0 <= cfg.experiment_seed < 2**64, "must be u64"),
        ("backend", isinstance(cfg.backend, str) and bool(cfg.backend), "must be 'stub' or an endpoint URL"),
        ("gamma_policy", cfg.gamma_policy in GAMMA_POLICIES, f"must be one of {GAMMA_POLICIES}"),
        ("scheme", cfg.scheme in SCHEMES, f"must be one of {SCHEMES}"),
        ("canny_low", 0 <= cfg.canny_low <= cfg.canny_high, "must satisfy 0 <= low <= high"),
        ("augment_exemplars", isinstance(cfg.augment_exemplars, bool), "must be a boolean"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise ValidationError(f"config field {name!r}: {msg}")
    if cfg.p > 0 and cfg.copies == 0:
        raise ValidationError("config field 'copies': p > 0 requires copies >= 1")


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config field(s): {sorted(unknown)}")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from exc


@dataclass(frozen=True)
class Metrics:
    per_phase: tuple[float, ...]
    average: float
    last: float

    @classmethod
    def from_accuracies(cls, accs: list[float]) -> "Metrics":
        if not accs:
            raise ValidationError("metrics need at least one phase")
        return cls(tuple(accs), sum(accs) / len(accs), accs[-1])


# ---------------------------------------------------------------------------
# The experiment itself


class _FeatureBank:
    def __init__(self):
        self._rows: list[np.ndarray] = []

    def add(self, feature: np.ndarray) -> int:
        self._rows.append(feature)
        return len(self._rows) - 1

    def matrix(self) -> np.ndarray:
        return np.vstack(self._rows) if self._rows else np.zeros((0, FEATURE_DIM))


def _make_backend(cfg: ExperimentConfig):
    if cfg.backend == "stub":
        return StubBackend()
    return RemoteBackend(cfg.backend)


def _augment_copies(
    image: RgbImage,
    source_id: str,
    text: TextualPrompt,
    cfg: ExperimentConfig,
    base_seed: int,
    backend,
    cache: GenerationCache,
) -> list[RgbImage]:
    """K generated copies of a real image, conditioned on its edge prompt."""
    gamma = choose_gamma(image.height, image.width, cfg.gamma_policy)
    visual = extract_visual_prompt(image, gamma, cfg.scheme, cfg.canny_low, cfg.canny_high)
    out = []
    for k in range(1, cfg.copies + 1):
        req = GenerationRequest(
            edges=visual.edges,
            text=text,
            seed=copy_seed(base_seed, source_id, k),
            out_h=image.height,
            out_w=image.width,
        )
        out.append(generate(req, backend, cache))
    return out


def run_experiment(
    cfg: ExperimentConfig, workdir: str | Path, dataset: ProceduralDataset | None = None
) -> Metrics:
    """Run the full class-incremental protocol and return its metrics.

    Writes the exemplar store under workdir/store, the generation cache
    under workdir/cache, and metrics under workdir/metrics.json|csv.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if dataset is None:
        dataset = ProceduralDataset(
            cfg.classes, cfg.n_per_class, cfg.image_size, seed=cfg.experiment_seed
        )
    elif dataset.num_classes < cfg.classes:
        raise ValidationError("dataset has fewer classes than the config requires")

    plan = make_phase_plan(cfg.classes, cfg.phases, cfg.protocol, cfg.experiment_seed)
    backend = _make_backend(cfg)
    cache = GenerationCache(workdir / "cache")
    base_seed = digest64("generation", cfg.experiment_seed)

    all_train_dims = [
        (s.image.height, s.image.width)
        for s in dataset.train_samples(range(cfg.classes))
    ]
    ratio = avg_area_ratio(all_train_dims, cfg.gamma_policy)
    ledger = allocate(cfg.units_per_class, cfg.alpha, capacity_per_unit(ratio))
    store = ExemplarStore(ledger)

    prompts_by_class = {
        c: normalize_label(dataset.labels[c], "food") for c in range(cfg.classes)
    }

    state = ClassifierState.empty()
    accuracies: list[float] = []
    seen_classes: list[int] = []

    for phase_idx, class_group in enumerate(plan.classes_per_phase):
        new_classes = sorted(class_group)
        bank = _FeatureBank()
        items: list[AugmentedItem] = []

        # Old prompt-backed exemplars, regenerated fresh each phase.
        for class_id in store.classes():
            for rec in store.prompts.get(class_id, []):
                if cfg.copies == 0:
                    continue
                images = regenerate_prompt(rec, cfg.copies, base_seed, backend, cache)
                rows = tuple(bank.add(featurize(im)) for im in images)
                items.append(AugmentedItem("synthetic", state.row_of(class_id), None, rows))

        # Old real-image exemplars, optionally augmented like new data.
        for class_id in store.classes():
            text = prompts_by_class[class_id]
            for ex in store.real.get(class_id, []):
                real_row = bank.add(featurize(ex.image))
                copies = ()
                if cfg.p > 0 and cfg.copies > 0 and cfg.augment_exemplars:
                    gen = _augment_copies(
                        ex.image, ex.source_id, text, cfg, base_seed, backend, cache
                    )
                    copies = tuple(bank.add(featurize(im)) for im in gen)
                items.append(
                    AugmentedItem("real_exemplar", state.row_of(class_id), real_row, copies)
                )

        # This phase's new data.
        state = state.extend(new_classes)
        for sample in dataset.train_samples(new_classes):
            real_row = bank.add(featurize(sample.image))
            copies = ()
            if cfg.p > 0 and cfg.copies > 0:
                gen = _augment_copies(
                    sample.image,
                    sample.source_id,
                    prompts_by_class[sample.class_id],
                    cfg,
                    base_seed,
                    backend,
                    cache,
                )
                copies = tuple(bank.add(featurize(im)) for im in gen)
            items.append(
                AugmentedItem("new", state.row_of(sample.class_id), real_row, copies)
            )

        features = bank.matrix()

        def epoch_stream(epoch: int, _items=items, _features=features, _phase=phase_idx):
            rng = rng_for("epoch", cfg.experiment_seed, _phase, epoch)
            pairs = epoch_view(_items, cfg.p, rng)
            if not pairs:
                return np.zeros((0, FEATURE_DIM)), np.zeros(0, dtype=int)
            rows = np.array([b for b, _ in pairs])
            labels = np.array([l for _, l in pairs])
            return _features[rows], labels

        epochs = cfg.epochs_first if phase_idx == 0 else cfg.epochs_later
        state = train_phase(state, epoch_stream, cfg.learning_rate, epochs, cfg.batch_size)

        # Evaluate on everything observed so far.
        seen_classes.extend(new_classes)
        test = dataset.test_samples(sorted(seen_classes))
        test_x = np.vstack([featurize(s.image) for s in test])
        test_y = np.array([s.class_id for s in test])
        accuracies.append(evaluate(state, test_x, test_y))

        # Select and persist this phase's exemplars and prompts.
        for class_id in new_classes:
            class_samples = dataset.train_samples([class_id])
            feats = np.vstack([featurize(s.image) for s in class_samples])
            rank = herding_order(feats, class_id)
            selection = select_exemplars(rank, ledger)
            real = [
                RealExemplar(class_id, class_samples[i].source_id, class_samples[i].image)
                for i in selection.real
            ]
            text = prompts_by_class[class_id]
            prompt_records = []
            for i in selection.prompts:
                s = class_samples[i]
                gamma = choose_gamma(s.image.height, s.image.width, cfg.gamma_policy)
                visual = extract_visual_prompt(
                    s.image, gamma, cfg.scheme, cfg.canny_low, cfg.canny_high
                )
                prompt_records.append(PromptRecord(visual, text, class_id, s.source_id))
            store.add_class(class_id, real, prompt_records)
        store_save(store, workdir / "store")

    metrics = Metrics.from_accuracies(accuracies)
    write_metrics(metrics, cfg, workdir)
    return metrics


def write_metrics(metrics: Metrics, cfg: ExperimentConfig, workdir: str | Path) -> None:
    workdir = Path(workdir)
    report = {
        "per_phase_accuracy": list(metrics.per_phase),
        "average_accuracy": metrics.average,
        "last_accuracy": metrics.last,
        "config": {k: getattr(cfg, k) for k in sorted(ExperimentConfig.__dataclass_fields__)},
    }
    (workdir / "metrics.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(workdir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "accuracy"])
        for i, acc in enumerate(metrics.per_phase):
            writer.writerow([i, f"{acc:.6f}"])


__all__ = [
    "AugmentedItem",
    "ClassifierState",
    "ExperimentConfig",
    "FEATURE_DIM",
    "Metrics",
    "PhasePlan",
    "TrainConfig",
    "epoch_view",
    "evaluate",
    "featurize",
    "load_experiment_config",
    "loss_and_grad",
    "make_phase_plan",
    "run_experiment",
    "train_phase",
    "write_metrics",
]
