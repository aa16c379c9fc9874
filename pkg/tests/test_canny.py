import numpy as np
import pytest

from edgereplay.canny import canny_edges, compute_gradients, to_grayscale
from edgereplay.errors import ValidationError
from edgereplay.images import RgbImage

from canny_reference import reference_canny
from conftest import disk_rgb, random_rgb, solid_rgb, step_rgb


def to_rows(img: RgbImage):
    return [
        [tuple(int(c) for c in img.pixels[i, j]) for j in range(img.width)]
        for i in range(img.height)
    ]


def oracle_mask(img: RgbImage, low=100.0, high=200.0) -> np.ndarray:
    return np.array(reference_canny(to_rows(img), low, high))


class TestGrayscale:
    def test_black_maps_to_zero(self):
        assert to_grayscale(solid_rgb(1, 1, (0, 0, 0))).samples[0, 0] == 0

    def test_white_maps_to_full(self):
        assert to_grayscale(solid_rgb(1, 1, (255, 255, 255))).samples[0, 0] == 255

    def test_luma_formula(self):
        # round(0.299*100 + 0.587*200 + 0.114*50) = round(153.0)
        assert to_grayscale(solid_rgb(1, 1, (100, 200, 50))).samples[0, 0] == 153

    def test_total_on_random_inputs(self, rng):
        img = random_rgb(rng, 8, 8)
        luma = to_grayscale(img).samples
        assert luma.dtype == np.uint8
        p = img.pixels.astype(np.int64)
        expected = (299 * p[..., 0] + 587 * p[..., 1] + 114 * p[..., 2] + 500) // 1000
        assert np.array_equal(luma, expected.astype(np.uint8))


class TestCanny:
    def test_constant_image_yields_empty_map(self):
        edges = canny_edges(solid_rgb(16, 16, (137, 137, 137)), 100, 200)
        assert edges.count() == 0

    def test_vertical_step_single_column(self):
        edges = canny_edges(step_rgb(16, 16), 100, 200)
        mask = edges.to_mask()
        cols = sorted(set(np.nonzero(mask)[1].tolist()))
        assert len(cols) == 1
        assert 12 <= edges.count() <= 16
        assert np.array_equal(mask, oracle_mask(step_rgb(16, 16)))

    def test_disk_yields_closed_ring(self):
        img = disk_rgb(32, 32)
        edges = canny_edges(img, 100, 200)
        mask = edges.to_mask()
        assert mask.any()
        # every edge pixel has at least two 8-connected edge neighbours,
        # so the contour has no loose ends
        coords = list(zip(*np.nonzero(mask)))
        for i, j in coords:
            neighbours = sum(
                bool(mask[i + di, j + dj])
                for di in (-1, 0, 1)
                for dj in (-1, 0, 1)
                if (di or dj) and 0 <= i + di < 32 and 0 <= j + dj < 32
            )
            assert neighbours >= 2
        # deterministic: byte-identical rerun
        again = canny_edges(img, 100, 200)
        assert again == edges
        assert np.array_equal(mask, oracle_mask(img))

    def test_threshold_order_validated(self):
        with pytest.raises(ValidationError):
            canny_edges(solid_rgb(8, 8, (1, 2, 3)), 200, 100)
        with pytest.raises(ValidationError):
            canny_edges(solid_rgb(8, 8, (1, 2, 3)), -1, 100)

    @pytest.mark.parametrize("h,w", [(1, 1), (2, 7), (4, 4), (3, 9), (5, 2)])
    def test_tiny_images_are_zero_padded(self, h, w, rng):
        img = random_rgb(rng, h, w)
        edges = canny_edges(img, 100, 200)
        assert (edges.height, edges.width) == (h, w)
        assert np.array_equal(edges.to_mask(), oracle_mask(img))

    def test_matches_oracle_on_varied_images(self, rng):
        cases = []
        for trial in range(24):
            h = int(rng.integers(5, 48))
            w = int(rng.integers(5, 48))
            kind = trial % 4
            if kind == 0:
                cases.append(random_rgb(rng, h, w))
            elif kind == 1:
                cases.append(step_rgb(h, w))
            elif kind == 2:
                cases.append(disk_rgb(h, w))
            else:
                base = rng.integers(0, 256, ((h + 3) // 4, (w + 3) // 4, 3))
                arr = np.kron(base, np.ones((4, 4, 1)))[:h, :w].astype(np.uint8)
                cases.append(RgbImage.from_array(arr))
        for img in cases:
            assert np.array_equal(
                canny_edges(img, 100, 200).to_mask(), oracle_mask(img)
            ), f"mismatch on {img.height}x{img.width}"

    def test_float_thresholds_match_oracle(self, rng):
        img = disk_rgb(24, 24)
        assert np.array_equal(
            canny_edges(img, 50.5, 120.25).to_mask(), oracle_mask(img, 50.5, 120.25)
        )

    def test_translation_consistency(self, rng):
        pattern = rng.integers(0, 256, (7, 7, 3), dtype=np.uint8)

        def embed(dy, dx):
            arr = np.full((32, 32, 3), 128, dtype=np.uint8)
            arr[dy : dy + 7, dx : dx + 7] = pattern
            return canny_edges(RgbImage.from_array(arr), 60, 120).to_mask()

        base = embed(8, 8)
        shifted = embed(12, 10)
        assert np.array_equal(np.roll(np.roll(base, 4, axis=0), 2, axis=1), shifted)


class TestGradients:
    def test_field_shapes_and_ranges(self, rng):
        img = random_rgb(rng, 10, 12)
        field = compute_gradients(img)
        assert field.magnitude.shape == (10, 12)
        assert field.direction.shape == (10, 12)
        assert np.all(field.magnitude >= 0)
        assert np.all(field.direction <= 3)

    def test_vertical_edge_has_horizontal_gradient(self):
        field = compute_gradients(step_rgb(16, 16))
        # at the step, the gradient axis is bin 0 (pointing along +x)
        assert field.direction[8, 7] == 0
        assert field.magnitude[8, 7] > 200
