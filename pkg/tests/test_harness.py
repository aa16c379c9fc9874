import json
import math

import numpy as np
import pytest

from edgereplay.dataset import ProceduralDataset
from edgereplay.errors import TrainingDiverged, ValidationError
from edgereplay.harness import (
    AugmentedItem,
    ClassifierState,
    ExperimentConfig,
    FEATURE_DIM,
    Metrics,
    TrainConfig,
    epoch_view,
    evaluate,
    featurize,
    load_experiment_config,
    loss_and_grad,
    make_phase_plan,
    run_experiment,
    train_phase,
)
from edgereplay.images import RgbImage
from edgereplay.seeding import rng_for
from edgereplay.store import store_load

from conftest import random_rgb, solid_rgb


class TestPhasePlan:
    def test_lfs_even_split(self):
        plan = make_phase_plan(100, 5, "LFS", seed=0)
        assert [len(g) for g in plan.classes_per_phase] == [20] * 5

    def test_lfh_remainder_first(self):
        plan = make_phase_plan(256, 10, "LFH", seed=0)
        assert [len(g) for g in plan.classes_per_phase] == [128] + [13] * 8 + [12] * 2

    def test_lfh_odd_classes(self):
        plan = make_phase_plan(101, 2, "LFH", seed=0)
        assert [len(g) for g in plan.classes_per_phase] == [51, 25, 25]

    def test_partition_properties(self):
        plan = make_phase_plan(37, 4, "LFS", seed=3)
        seen = [c for g in plan.classes_per_phase for c in g]
        assert sorted(seen) == list(range(37))

    def test_seed_shuffles_order(self):
        a = make_phase_plan(30, 3, "LFS", seed=1).classes_per_phase
        b = make_phase_plan(30, 3, "LFS", seed=2).classes_per_phase
        assert a != b
        assert a == make_phase_plan(30, 3, "LFS", seed=1).classes_per_phase

    def test_invalid_n_rejected(self):
        with pytest.raises(ValidationError):
            make_phase_plan(10, 0, "LFS", seed=0)
        with pytest.raises(ValidationError):
            make_phase_plan(10, 11, "LFS", seed=0)
        with pytest.raises(ValidationError):
            make_phase_plan(10, 6, "LFH", seed=0)
        with pytest.raises(ValidationError):
            make_phase_plan(10, 3, "LFQ", seed=0)


class TestFeaturize:
    def test_constant_image_is_zero_vector(self):
        feat = featurize(solid_rgb(32, 32, (120, 7, 200)))
        assert feat.shape == (FEATURE_DIM,)
        assert np.all(feat == 0.0)

    def test_identical_images_identical_features(self, rng):
        img = random_rgb(rng, 40, 40)
        assert np.array_equal(featurize(img), featurize(img))

    def test_single_pixel_perturbation_bound(self, rng):
        # Frozen empirical bound: measured max 0.057 over the corpus for
        # perturbations of up to 5 levels on one pixel.
        from edgereplay.dataset import render_sample

        worst = 0.0
        for c in range(4):
            img = render_sample(3, c, 0, 64)
            base = featurize(img)
            for _ in range(4):
                arr = img.pixels.copy()
                i, j, ch = rng.integers(64), rng.integers(64), rng.integers(3)
                delta = int(rng.integers(1, 6)) * (1 if rng.random() < 0.5 else -1)
                arr[i, j, ch] = np.clip(int(arr[i, j, ch]) + delta, 0, 255)
                worst = max(worst, float(np.linalg.norm(featurize(RgbImage.from_array(arr)) - base)))
        assert worst <= 0.08


class TestEpochView:
    def items(self, n=10, copies=5, kind="new"):
        # real banks occupy [0, n); copy banks [n, n + n*copies)
        out = []
        for i in range(n):
            real = i if kind != "synthetic" else None
            copy_banks = tuple(n + i * copies + k for k in range(copies))
            out.append(AugmentedItem(kind, label_row=0, real_bank=real, copy_banks=copy_banks))
        return out

    def test_p_zero_keeps_reals_and_one_copy_per_synthetic(self):
        items = self.items(5, 3, "new") + self.items(4, 3, "synthetic")
        rng = rng_for("t", 0)
        pairs = epoch_view(items, 0.0, rng)
        banks = sorted(b for b, _ in pairs)
        assert len(pairs) == 9
        assert banks[:5] == [0, 1, 2, 3, 4]
        assert all(b >= 5 for b in banks[5:])

    def test_zero_copies_with_p_positive_rejected(self):
        items = [AugmentedItem("new", 0, 0, ())]
        with pytest.raises(ValidationError):
            epoch_view(items, 0.3, rng_for("t", 1))

    def test_synthetic_without_copies_contributes_nothing(self):
        items = [AugmentedItem("synthetic", 0, None, ())]
        assert epoch_view(items, 0.0, rng_for("t", 2)) == []

    def test_replacement_rate_statistics(self):
        n = 10_000
        items = self.items(n, 5, "new")
        for p in (0.2, 0.5):
            pairs = epoch_view(items, p, rng_for("stats", int(p * 10)))
            replaced = sum(1 for b, _ in pairs if b >= n)
            sigma = math.sqrt(p * (1 - p) / n)
            assert abs(replaced / n - p) <= 3 * sigma

    def test_exemplar_items_replaced_like_new_ones(self):
        n = 10_000
        items = self.items(n, 5, "real_exemplar")
        pairs = epoch_view(items, 0.3, rng_for("stats", 99))
        replaced = sum(1 for b, _ in pairs if b >= n)
        sigma = math.sqrt(0.3 * 0.7 / n)
        assert abs(replaced / n - 0.3) <= 3 * sigma

    def test_stream_is_shuffled(self):
        items = self.items(100, 1, "new")
        pairs = epoch_view(items, 0.0, rng_for("t", 3))
        assert [b for b, _ in pairs] != list(range(100))


class TestTraining:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        n, d, c = 12, 8, 3
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        w = rng.normal(size=(c, d)) * 0.3
        b = rng.normal(size=c) * 0.3
        loss, gw, gb = loss_and_grad(w, b, x, y)
        eps = 1e-5
        for _ in range(20):
            i, j = rng.integers(c), rng.integers(d)
            wp, wm = w.copy(), w.copy()
            wp[i, j] += eps
            wm[i, j] -= eps
            num = (loss_and_grad(wp, b, x, y)[0] - loss_and_grad(wm, b, x, y)[0]) / (2 * eps)
            rel = abs(num - gw[i, j]) / max(abs(num), abs(gw[i, j]), 1e-12)
            assert rel < 1e-4

    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(1)
        state = ClassifierState((0, 1), rng.normal(size=(2, FEATURE_DIM)), rng.normal(size=2))
        x = rng.normal(size=(16, FEATURE_DIM))
        y = rng.integers(0, 2, size=16)
        trained = train_phase(state, lambda e: (x, y), 0.0, 5)
        assert np.array_equal(trained.weights, state.weights)
        assert np.array_equal(trained.bias, state.bias)

    def test_separable_classes_reach_full_accuracy(self):
        rng = np.random.default_rng(2)
        x0 = rng.normal(size=(50, FEATURE_DIM)) + 3.0
        x1 = rng.normal(size=(50, FEATURE_DIM)) - 3.0
        x = np.vstack([x0, x1])
        y = np.array([0] * 50 + [1] * 50)
        state = ClassifierState.empty().extend([0, 1])

        def stream(epoch):
            idx = rng_for("sep", epoch).permutation(100)
            return x[idx], y[idx]

        trained = train_phase(state, stream, 0.01, 50)
        assert evaluate(trained, x, y) == 1.0

    def test_divergence_aborts_with_diagnostics(self):
        state = ClassifierState((0, 1), np.zeros((2, 2)), np.zeros(2))
        x = np.array([[1e200, 0.0], [0.0, 1.0], [1e200, 1.0], [1.0, 0.0]])
        y = np.array([0, 1, 0, 1])
        with pytest.raises(TrainingDiverged):
            with np.errstate(all="ignore"):
                train_phase(state, lambda e: (x, y), 1e200, 3)

    def test_extend_preserves_old_rows(self):
        rng = np.random.default_rng(3)
        state = ClassifierState((4,), rng.normal(size=(1, FEATURE_DIM)), rng.normal(size=1))
        grown = state.extend([7, 2])
        assert grown.class_ids == (4, 7, 2)
        assert np.array_equal(grown.weights[0], state.weights[0])
        assert np.all(grown.weights[1:] == 0)
        with pytest.raises(ValidationError):
            grown.extend([7])


class TestEvaluate:
    def test_constant_predictor_on_balanced_classes(self):
        state = ClassifierState((0, 1, 2, 3), np.zeros((4, 2)), np.array([1.0, 0, 0, 0]))
        x = np.random.default_rng(0).normal(size=(100, 2))
        y = np.repeat([0, 1, 2, 3], 25)
        assert evaluate(state, x, y) == 0.25

    def test_perfect_margin_weights(self):
        rng = np.random.default_rng(1)
        centers = np.array([[10.0, 0.0], [-10.0, 0.0], [0.0, 10.0]])
        x = np.vstack([rng.normal(size=(30, 2)) + c for c in centers])
        y = np.repeat([0, 1, 2], 30)
        state = ClassifierState((0, 1, 2), centers, np.zeros(3))
        assert evaluate(state, x, y) == 1.0

    def test_random_weights_near_chance(self):
        rng = np.random.default_rng(2)
        c, n = 5, 2000
        state = ClassifierState(tuple(range(c)), rng.normal(size=(c, 16)), rng.normal(size=c))
        x = rng.normal(size=(n, 16))
        y = rng.integers(0, c, size=n)
        acc = evaluate(state, x, y)
        sigma = math.sqrt((1 / c) * (1 - 1 / c) / n)
        assert abs(acc - 1 / c) <= 3 * sigma

    def test_unobserved_label_rejected(self):
        state = ClassifierState((0,), np.zeros((1, 2)), np.zeros(1))
        with pytest.raises(ValidationError):
            evaluate(state, np.zeros((1, 2)), np.array([5]))


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(classes=6, phases=2, protocol="LFS")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"classes": 6, "phases": 2, "protocol": "LFS"}))
        assert load_experiment_config(path) == cfg

    def test_unknown_field_named(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"clases": 6}))
        with pytest.raises(ValidationError) as err:
            load_experiment_config(path)
        assert "clases" in str(err.value)

    def test_bad_value_names_field(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"alpha": 3.0}))
        with pytest.raises(ValidationError) as err:
            load_experiment_config(path)
        assert "alpha" in str(err.value)

    def test_p_without_copies_rejected(self):
        with pytest.raises(ValidationError):
            TrainConfig(p=0.2, copies=0)

    def test_metrics_average(self):
        m = Metrics.from_accuracies([0.5, 0.7, 0.6])
        assert m.average == pytest.approx(0.6)
        assert m.last == 0.6


SMALL = dict(
    protocol="LFS",
    phases=2,
    classes=4,
    n_per_class=10,
    image_size=64,
    units_per_class=2,
    epochs_first=8,
    epochs_later=6,
    learning_rate=0.03,
)


class TestRunExperiment:
    def test_single_phase_equals_plain_supervised(self, tmp_path):
        cfg = ExperimentConfig(**{**SMALL, "phases": 1, "alpha": 0.0, "p": 0.0, "copies": 0,
                                  "experiment_seed": 21})
        metrics = run_experiment(cfg, tmp_path / "run")
        assert len(metrics.per_phase) == 1

        # replicate: same plan, features, per-epoch shuffles, and learner
        ds = ProceduralDataset(cfg.classes, cfg.n_per_class, cfg.image_size, cfg.experiment_seed)
        plan_classes = sorted(
            make_phase_plan(cfg.classes, 1, "LFS", cfg.experiment_seed).classes_per_phase[0]
        )
        train = ds.train_samples(plan_classes)
        x = np.vstack([featurize(s.image) for s in train])
        state = ClassifierState.empty().extend(plan_classes)
        rows = np.array([state.row_of(s.class_id) for s in train])

        def stream(epoch):
            rng = rng_for("epoch", cfg.experiment_seed, 0, epoch)
            # mirror epoch_view: one rng.random() per real item, then shuffle
            for _ in range(len(rows)):
                pass
            order = [None] * len(rows)
            picked = list(zip(range(len(rows)), rows))
            perm = rng.permutation(len(picked))
            sel = [picked[int(i)] for i in perm]
            return x[[s[0] for s in sel]], np.array([s[1] for s in sel])

        trained = train_phase(state, stream, cfg.learning_rate, cfg.epochs_first, cfg.batch_size)
        test = ds.test_samples(plan_classes)
        tx = np.vstack([featurize(s.image) for s in test])
        ty = np.array([s.class_id for s in test])
        assert metrics.per_phase[0] == pytest.approx(evaluate(trained, tx, ty))

    def test_two_runs_identical_and_stores_bounded(self, tmp_path):
        cfg = ExperimentConfig(**{**SMALL, "alpha": 0.5, "p": 0.25, "copies": 2,
                                  "experiment_seed": 31})
        m1 = run_experiment(cfg, tmp_path / "a")
        m2 = run_experiment(cfg, tmp_path / "b")
        assert m1 == m2
        store = store_load(tmp_path / "a" / "store")
        assert sorted(store.classes()) == list(range(4))
        for c in store.classes():
            assert len(store.real.get(c, [])) <= store.ledger.real_slots
            assert len(store.prompts.get(c, [])) <= store.ledger.prompt_slots

    def test_baseline_path_deterministic(self, tmp_path):
        cfg = ExperimentConfig(**{**SMALL, "alpha": 0.0, "p": 0.0, "copies": 0,
                                  "experiment_seed": 77})
        m1 = run_experiment(cfg, tmp_path / "a")
        m2 = run_experiment(cfg, tmp_path / "b")
        assert m1 == m2
        assert (tmp_path / "a" / "metrics.json").read_bytes() == (
            tmp_path / "b" / "metrics.json"
        ).read_bytes()

    def test_metrics_files_written(self, tmp_path):
        cfg = ExperimentConfig(**{**SMALL, "alpha": 0.0, "p": 0.0, "copies": 0,
                                  "experiment_seed": 5})
        metrics = run_experiment(cfg, tmp_path / "run")
        report = json.loads((tmp_path / "run" / "metrics.json").read_text())
        assert report["average_accuracy"] == pytest.approx(metrics.average)
        csv_lines = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
        assert csv_lines[0] == "phase,accuracy"
        assert len(csv_lines) == 1 + len(metrics.per_phase)
