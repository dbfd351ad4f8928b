"""Lab conversion, histogram, and file round-trip tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chromatix.imagecolor import (
    LabImage,
    LumaHistogram,
    histogram_correlation,
    histogram_correlation_matrix,
    lab_to_rgb,
    luma_histogram,
    read_ascii_image,
    rgb_to_lab,
    write_ascii_image,
    load_rgb,
    save_rgb,
)
from chromatix.numerics import ContractError


def solid(r, g, b, shape=(2, 2)):
    return np.full(shape + (3,), 0, dtype=np.uint8) + np.array([r, g, b], np.uint8)


class TestRgbToLab:
    def test_white_is_reference_white(self):
        lab = rgb_to_lab(solid(255, 255, 255))
        assert abs(lab.L[0, 0] - 100.0) < 1e-3
        assert abs(lab.a[0, 0]) < 1e-3
        assert abs(lab.b[0, 0]) < 1e-3

    def test_black(self):
        lab = rgb_to_lab(solid(0, 0, 0))
        assert abs(lab.L[0, 0]) < 1e-3
        assert abs(lab.a[0, 0]) < 1e-3
        assert abs(lab.b[0, 0]) < 1e-3

    def test_grays_stay_on_neutral_axis(self):
        for v in range(0, 256, 17):
            lab = rgb_to_lab(solid(v, v, v))
            assert abs(lab.a[0, 0]) < 1e-3
            assert abs(lab.b[0, 0]) < 1e-3

    def test_zero_sized_rejected(self):
        with pytest.raises(ContractError):
            rgb_to_lab(np.zeros((0, 4, 3), dtype=np.uint8))

    def test_ranges_clamped(self):
        rng = np.random.default_rng(0)
        lab = rgb_to_lab(rng.integers(0, 256, (16, 16, 3)).astype(np.uint8))
        assert lab.L.min() >= 0 and lab.L.max() <= 100
        assert np.abs(lab.a).max() <= 110 and np.abs(lab.b).max() <= 110


class TestLabToRgb:
    def test_round_trip_over_lattice(self):
        # exhaustive 18x18x18 sRGB lattice: max per-channel error <= 1
        vals = np.arange(0, 256, 15, dtype=np.uint8)
        r, g, b = np.meshgrid(vals, vals, vals, indexing="ij")
        rgb = np.stack([r, g, b], axis=-1).reshape(18, 18 * 18, 3)
        back = lab_to_rgb(rgb_to_lab(rgb))
        err = np.abs(back.astype(np.int32) - rgb.astype(np.int32))
        assert err.max() <= 1

    def test_white_round_trip(self):
        lab = LabImage(np.full((1, 1), 100.0, np.float32),
                       np.zeros((1, 1), np.float32), np.zeros((1, 1), np.float32))
        np.testing.assert_array_equal(lab_to_rgb(lab)[0, 0], [255, 255, 255])

    def test_out_of_gamut_clamps(self):
        lab = LabImage(np.full((1, 1), 50.0, np.float32),
                       np.full((1, 1), 110.0, np.float32),
                       np.full((1, 1), -110.0, np.float32))
        out = lab_to_rgb(lab)
        assert out.min() >= 0 and out.max() <= 255


class TestLumaHistogram:
    def test_constant_window_single_bin(self):
        lab = LabImage.from_gray(np.full((8, 8), 50.0, np.float32))
        h = luma_histogram(lab)
        assert h.bins[16] == 64
        assert (h.bins > 0).sum() == 1

    def test_total_matches_window(self):
        lab = LabImage.from_gray(np.random.default_rng(1).uniform(
            0, 100, (20, 20)).astype(np.float32))
        h = luma_histogram(lab, (2, 3, 16, 16))
        assert h.total == 256
        assert h.bins.sum() == 256

    def test_l_100_lands_in_last_bin(self):
        h = luma_histogram(np.full((2, 2), 100.0, np.float32))
        assert h.bins[31] == 4

    def test_matches_per_pixel_loop_oracle(self):
        rng = np.random.default_rng(2)
        L = rng.uniform(0, 100, (13, 17)).astype(np.float32)
        window = (3, 4, 7, 9)
        h = luma_histogram(L, window)
        oracle = np.zeros(32, dtype=np.int64)
        y, x, hh, ww = window
        for yy in range(y, y + hh):
            for xx in range(x, x + ww):
                oracle[min(int(L[yy, xx] * 32 / 100), 31)] += 1
        np.testing.assert_array_equal(h.bins, oracle)

    def test_empty_window_rejected(self):
        with pytest.raises(ContractError):
            luma_histogram(np.zeros((4, 4), np.float32), (0, 0, 0, 2))

    def test_translation_invariant_on_constant_image(self):
        L = np.full((12, 12), 33.0, np.float32)
        a = luma_histogram(L, (0, 0, 4, 4))
        b = luma_histogram(L, (5, 7, 4, 4))
        np.testing.assert_array_equal(a.bins, b.bins)


class TestHistogramCorrelation:
    def test_self_correlation_is_one(self):
        h = LumaHistogram(np.array([1, 5, 2, 9]), 17)
        assert histogram_correlation(h, h) == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        assert histogram_correlation(np.array([1, 2, 3]),
                                     np.array([3, 2, 1])) == pytest.approx(-1.0)

    def test_matches_pearson_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.integers(0, 50, 32)
            b = rng.integers(0, 50, 32)
            expected = np.corrcoef(a, b)[0, 1]
            assert histogram_correlation(a, b) == pytest.approx(expected, abs=1e-9)

    def test_zero_variance_convention(self):
        flat = np.full(8, 3)
        assert histogram_correlation(flat, flat.copy()) == 1.0
        assert histogram_correlation(flat, np.full(8, 5)) == 0.0
        assert histogram_correlation(flat, np.arange(8)) == 0.0

    def test_bin_count_mismatch_rejected(self):
        with pytest.raises(ContractError):
            histogram_correlation(np.zeros(8), np.zeros(9))

    @given(st.integers(0, 2**31 - 1), st.integers(1, 20))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_scale_invariant(self, seed, scale):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 30, 16)
        b = rng.integers(0, 30, 16)
        ab = histogram_correlation(a, b)
        assert histogram_correlation(b, a) == pytest.approx(ab, abs=1e-12)
        assert histogram_correlation(a * scale, b * scale) == pytest.approx(
            ab, abs=1e-9)

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(4)
        rows_a = rng.integers(0, 40, (3, 16))
        rows_b = rng.integers(0, 40, (5, 16))
        rows_a[1] = 7  # one degenerate row
        m = histogram_correlation_matrix(rows_a, rows_b)
        for i in range(3):
            for j in range(5):
                assert m[i, j] == pytest.approx(
                    histogram_correlation(rows_a[i], rows_b[j]), abs=1e-12)


class TestFileIO:
    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        rgb = rng.integers(0, 256, (9, 7, 3)).astype(np.uint8)
        p = tmp_path / "x.png"
        save_rgb(p, rgb)
        np.testing.assert_array_equal(load_rgb(p), rgb)

    def test_ascii_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        rgb = rng.integers(0, 256, (5, 4, 3)).astype(np.uint8)
        p = tmp_path / "x.txt"
        write_ascii_image(p, rgb)
        np.testing.assert_array_equal(read_ascii_image(p), rgb)
