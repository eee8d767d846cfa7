from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alpr.errors import ChannelMismatch, DegenerateHistogram, OutOfBounds
from alpr.geometry import PixelRect
from alpr.imaging import (
    GeoTransform,
    Histogram256,
    ImageBuf,
    augment,
    binarize,
    crop,
    draw_box,
    grayscale,
    histogram,
    image_from_bytes,
    image_to_bytes,
    otsu_threshold,
    read_image,
    resize,
    write_image,
)

from conftest import make_image
from oracles import otsu_bruteforce


def hist_of(bins: dict[int, int]) -> Histogram256:
    full = [0] * 256
    for level, count in bins.items():
        full[level] = count
    return Histogram256(bins=tuple(full))


class TestGrayscale:
    def test_white_stays_white(self):
        img = ImageBuf.filled(4, 4, 3, 255)
        assert np.all(grayscale(img).data == 255)

    def test_black_stays_black(self):
        img = ImageBuf.filled(4, 4, 3, 0)
        assert np.all(grayscale(img).data == 0)

    def test_pure_red(self):
        img = ImageBuf.filled(4, 4, 3, (255, 0, 0))
        # round(0.299 * 255) = round(76.245)
        assert np.all(grayscale(img).data == 76)

    def test_constant_rgb_maps_to_same_value(self):
        for v in range(256):
            img = ImageBuf.filled(1, 1, 3, v)
            assert grayscale(img).data[0, 0, 0] == v

    def test_rejects_single_channel(self):
        with pytest.raises(ChannelMismatch):
            grayscale(ImageBuf.filled(4, 4, 1, 7))


class TestHistogram:
    def test_all_zero(self):
        h = histogram(ImageBuf.filled(4, 4, 1, 0))
        assert h.bins[0] == 16
        assert sum(h.bins) == 16

    def test_one_pixel_per_intensity(self):
        arr = np.arange(256, dtype=np.uint8).reshape(16, 16, 1)
        h = histogram(ImageBuf(arr))
        assert all(b == 1 for b in h.bins)

    def test_conservation(self):
        img = make_image(31, 17, channels=1, seed=5)
        assert histogram(img).total == 31 * 17

    def test_rejects_rgb(self):
        with pytest.raises(ChannelMismatch):
            histogram(make_image(4, 4, channels=3))


class TestOtsu:
    def test_two_tone_picks_smallest_tie(self):
        # equal mass at 50 and 200: every t in [50, 199] ties, smallest wins
        assert otsu_threshold(hist_of({50: 100, 200: 100})) == 50

    def test_degenerate_constant(self):
        with pytest.raises(DegenerateHistogram):
            otsu_threshold(hist_of({7: 123}))

    def test_matches_bruteforce_on_random_histograms(self, rng):
        for _ in range(100):
            levels = rng.integers(2, 40)
            bins: dict[int, int] = {}
            for _ in range(levels):
                bins[int(rng.integers(0, 256))] = int(rng.integers(1, 500))
            h = hist_of(bins)
            if h.distinct < 2:
                continue
            assert otsu_threshold(h) == otsu_bruteforce(list(h.bins))


class TestBinarize:
    def test_all_zero_at_zero(self):
        img = ImageBuf.filled(3, 3, 1, 0)
        assert np.all(binarize(img, 0).data == 0)

    def test_strict_comparison(self):
        arr = np.array([[50, 200]], dtype=np.uint8).reshape(1, 2, 1)
        out = binarize(ImageBuf(arr), 50)
        assert out.data[0, 0, 0] == 0 and out.data[0, 1, 0] == 255

    def test_at_most_two_values(self, rng):
        img = make_image(16, 16, channels=1, seed=9)
        out = binarize(img, int(rng.integers(0, 256)))
        assert set(np.unique(out.data)) <= {0, 255}

    def test_idempotent_on_binary(self):
        img = make_image(8, 8, channels=1, seed=3)
        once = binarize(img, 128)
        assert binarize(once, 0) == once


class TestResize:
    def test_identity_is_bit_exact(self):
        img = make_image(96, 96, seed=2)
        assert resize(img, 96, 96) == img

    def test_classifier_input_shape(self):
        img = make_image(1920, 1080, seed=4)
        out = resize(img, 96, 96)
        assert (out.width, out.height, out.channels) == (96, 96, 3)

    def test_two_by_two_average_rounds_half_up(self):
        arr = np.array([[0, 0], [255, 255]], dtype=np.uint8).reshape(2, 2, 1)
        out = resize(ImageBuf(arr), 1, 1)
        assert out.data[0, 0, 0] == 128

    @given(
        st.integers(min_value=1, max_value=64),
        st.integers(min_value=1, max_value=64),
    )
    @settings(max_examples=30)
    def test_output_dims(self, tw, th):
        out = resize(make_image(17, 13), tw, th)
        assert (out.width, out.height) == (tw, th)


class TestCrop:
    def test_full_frame_identity(self):
        img = make_image(10, 8)
        assert crop(img, PixelRect(0, 0, 10, 8)) == img

    def test_single_pixel(self):
        img = make_image(10, 8)
        out = crop(img, PixelRect(0, 0, 1, 1))
        assert out.width == 1 and out.height == 1
        assert np.array_equal(out.data[0, 0], img.data[0, 0])

    def test_idempotent(self):
        img = make_image(10, 8)
        once = crop(img, PixelRect(2, 1, 5, 4))
        assert crop(once, PixelRect(0, 0, 5, 4)) == once

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            crop(make_image(10, 8), PixelRect(6, 0, 5, 4))


class TestAugment:
    def test_flip_is_involution(self):
        img = make_image(11, 7, seed=6)
        t = GeoTransform.horizontal_flip()
        assert augment(augment(img, t), t) == img

    def test_rotate_zero_is_identity(self):
        img = make_image(9, 9, seed=7)
        assert augment(img, GeoTransform.rotate(0.0)) == img

    def test_integer_translate_shifts_columns(self):
        img = make_image(10, 4, seed=8)
        out = augment(img, GeoTransform.translate(0.1, 0.0))
        assert np.array_equal(out.data[:, 1:], img.data[:, :-1])
        assert np.all(out.data[:, 0] == 0)

    def test_deterministic_for_fixed_transform(self):
        img = make_image(12, 12, seed=10)
        t = GeoTransform.rotate(17.5)
        assert augment(img, t, seed=1) == augment(img, t, seed=99)

    def test_zoom_preserves_dims(self):
        img = make_image(12, 10)
        out = augment(img, GeoTransform.zoom(1.2))
        assert (out.width, out.height) == (12, 10)

    def test_parameter_bounds_enforced(self):
        with pytest.raises(ValueError):
            GeoTransform.rotate(31.0)
        with pytest.raises(ValueError):
            GeoTransform.translate(0.3, 0.0)
        with pytest.raises(ValueError):
            GeoTransform.zoom(0.5)


class TestDrawBox:
    def test_interior_untouched(self):
        img = make_image(40, 30)
        rect = PixelRect(5, 5, 20, 15)
        out = draw_box(img, rect, "VLP 0.90")
        inner = (slice(rect.y + 2, rect.y + rect.height - 2),
                 slice(rect.x + 2, rect.x + rect.width - 2))
        assert np.array_equal(out.data[inner], img.data[inner])
        assert out.data[rect.y, rect.x, 0] == 255  # outline drawn

    def test_edge_rect_clips(self):
        img = make_image(20, 12)
        out = draw_box(img, PixelRect(0, 0, 20, 12), "X")
        assert (out.width, out.height) == (20, 12)

    def test_empty_label_outline_only(self):
        img = make_image(30, 20)
        rect = PixelRect(4, 9, 10, 8)
        out = draw_box(img, rect, "")
        above = out.data[: rect.y - 1, :]
        assert np.array_equal(above, img.data[: rect.y - 1, :])


class TestPnmIo:
    def test_ppm_round_trip(self, tmp_path):
        img = make_image(13, 7, channels=3, seed=11)
        path = tmp_path / "frame.ppm"
        write_image(path, img)
        assert read_image(path) == img

    def test_pgm_round_trip(self, tmp_path):
        img = make_image(13, 7, channels=1, seed=12)
        path = tmp_path / "crop.pgm"
        write_image(path, img)
        assert read_image(path) == img

    def test_header_comments_tolerated(self):
        img = ImageBuf.filled(2, 2, 1, 9)
        blob = image_to_bytes(img)
        commented = blob.replace(b"P5\n", b"P5\n# fixture\n")
        assert image_from_bytes(commented) == img

    def test_rejects_truncated_payload(self):
        img = make_image(4, 4, channels=3)
        blob = image_to_bytes(img)[:-5]
        with pytest.raises(ValueError):
            image_from_bytes(blob)
