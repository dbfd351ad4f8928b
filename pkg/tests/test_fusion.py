"""Similarity-map, warp, and fake-reference tests against loop oracles."""

import numpy as np
import pytest

from chromatix.correspondence import MappingField
from chromatix.fusion import (
    SimilarityMaps,
    cosine,
    fake_reference,
    matching_error_planes,
    select_samples_cross_check,
    select_samples_threshold,
    similarity_maps,
    upsample_pyramid,
    warp_chrominance,
)
from chromatix.numerics import ContractError


def loop_similarity_oracle(ft_levels, fr_levels, phi_tr, phi_rt):
    """Direct per-pixel evaluation of both similarity formulas."""
    ht, wt = ft_levels[0].shape[1:]
    planes = np.zeros((2 * len(ft_levels), ht, wt))
    for i, (ft, fr) in enumerate(zip(ft_levels, fr_levels)):
        for y in range(ht):
            for x in range(wt):
                qx, qy = phi_tr.map[y, x]
                rx, ry = phi_rt.map[qy, qx]
                planes[i, y, x] = cosine(ft[:, y, x], fr[:, qy, qx])
                planes[len(ft_levels) + i, y, x] = cosine(
                    ft[:, ry, rx], fr[:, qy, qx])
    return planes


def random_field(rng, src_shape, tgt_shape):
    h, w = src_shape
    th, tw = tgt_shape
    m = np.stack([rng.integers(0, tw, (h, w)), rng.integers(0, th, (h, w))],
                 axis=-1).astype(np.int32)
    return MappingField(m, (th, tw))


class TestCosine:
    def test_self_is_one(self):
        assert cosine([1.0, 2.0, -3.0], [1.0, 2.0, -3.0]) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_scale_invariant(self):
        assert cosine([1.0, 1.0], [2.0, 2.0]) == pytest.approx(1.0)

    def test_zero_norm_convention(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            cosine([1.0], [1.0, 2.0])


class TestSimilarityMaps:
    def test_identity_on_identical_pyramids(self):
        rng = np.random.default_rng(0)
        levels = [rng.standard_normal((3, 5, 5)).astype(np.float32) + 0.5
                  for _ in range(5)]
        ident = MappingField.identity(5, 5)
        sims = similarity_maps(levels, [lv.copy() for lv in levels], ident, ident)
        np.testing.assert_allclose(sims.planes, 1.0, atol=1e-6)

    def test_orthogonal_features_give_zero_plane(self):
        ft = [np.stack([np.ones((4, 4)), np.zeros((4, 4))]).astype(np.float32)]
        fr = [np.stack([np.zeros((4, 4)), np.ones((4, 4))]).astype(np.float32)]
        ident = MappingField.identity(4, 4)
        sims = similarity_maps(ft * 5, fr * 5, ident, ident)
        np.testing.assert_allclose(sims.planes, 0.0, atol=1e-7)

    def test_matches_loop_oracle_on_random_fixture(self):
        rng = np.random.default_rng(1)
        ft = [rng.standard_normal((3, 4, 4)).astype(np.float32) for _ in range(2)]
        fr = [rng.standard_normal((3, 6, 5)).astype(np.float32) for _ in range(2)]
        phi_tr = random_field(rng, (4, 4), (6, 5))
        phi_rt = random_field(rng, (6, 5), (4, 4))
        # two-level pyramids exercise the general path
        sims = similarity_maps(ft + ft + ft[:1], fr + fr + fr[:1],
                               phi_tr, phi_rt)
        oracle = loop_similarity_oracle(ft + ft + ft[:1], fr + fr + fr[:1],
                                        phi_tr, phi_rt)
        np.testing.assert_allclose(sims.planes, oracle, atol=1e-6)

    def test_values_bounded(self):
        rng = np.random.default_rng(2)
        ft = [rng.standard_normal((4, 6, 6)).astype(np.float32) for _ in range(5)]
        fr = [rng.standard_normal((4, 6, 6)).astype(np.float32) for _ in range(5)]
        phi_tr = random_field(rng, (6, 6), (6, 6))
        phi_rt = random_field(rng, (6, 6), (6, 6))
        sims = similarity_maps(ft, fr, phi_tr, phi_rt)
        assert sims.planes.min() >= -1.0 and sims.planes.max() <= 1.0

    def test_cycle_consistent_pixels_agree_across_directions(self):
        rng = np.random.default_rng(3)
        ft = [rng.standard_normal((3, 4, 4)).astype(np.float32) for _ in range(5)]
        fr = [rng.standard_normal((3, 4, 4)).astype(np.float32) for _ in range(5)]
        # permutation field with an exact inverse: every pixel cycles back
        perm = np.random.default_rng(4).permutation(16)
        fwd = np.zeros((4, 4, 2), dtype=np.int32)
        bwd = np.zeros((4, 4, 2), dtype=np.int32)
        for src, dst in enumerate(perm):
            sy, sx = divmod(src, 4)
            dy, dx = divmod(int(dst), 4)
            fwd[sy, sx] = (dx, dy)
            bwd[dy, dx] = (sx, sy)
        phi_tr = MappingField(fwd, (4, 4))
        phi_rt = MappingField(bwd, (4, 4))
        sims = similarity_maps(ft, fr, phi_tr, phi_rt)
        cyc = select_samples_cross_check(phi_tr, phi_rt)
        assert cyc.all()
        np.testing.assert_allclose(sims.t_to_r[:, cyc], sims.r_to_t[:, cyc],
                                   atol=1e-6)

    def test_resolution_mismatch_rejected(self):
        rng = np.random.default_rng(5)
        ft = [rng.standard_normal((3, 4, 4)).astype(np.float32)] * 5
        fr = [rng.standard_normal((3, 4, 4)).astype(np.float32)] * 4 + \
            [rng.standard_normal((3, 2, 2)).astype(np.float32)]
        ident = MappingField.identity(4, 4)
        with pytest.raises(ContractError, match="not upsampled"):
            similarity_maps(ft, fr, ident, ident)


class TestUpsamplePyramid:
    def test_levels_reach_full_resolution(self):
        rng = np.random.default_rng(6)
        levels = [rng.standard_normal((2, 8, 8)), rng.standard_normal((3, 4, 4)),
                  rng.standard_normal((4, 2, 2))]
        up = upsample_pyramid(levels, 8, 8)
        assert all(lv.shape[1:] == (8, 8) for lv in up)
        np.testing.assert_allclose(up[0], levels[0], atol=1e-6)

    def test_constant_plane_stays_constant(self):
        up = upsample_pyramid([np.full((1, 3, 3), 2.5, np.float32)], 9, 7)[0]
        np.testing.assert_allclose(up, 2.5, atol=1e-6)


class TestWarpChrominance:
    def test_identity_field_is_noop(self):
        rng = np.random.default_rng(7)
        r_ab = rng.standard_normal((2, 5, 5)).astype(np.float32)
        out = warp_chrominance(r_ab, MappingField.identity(5, 5))
        np.testing.assert_array_equal(out, r_ab)

    def test_constant_chrominance_any_field(self):
        rng = np.random.default_rng(8)
        r_ab = np.stack([np.full((4, 4), 12.0), np.full((4, 4), -7.0)]).astype(
            np.float32)
        field = random_field(rng, (6, 6), (4, 4))
        out = warp_chrominance(r_ab, field)
        assert out.shape == (2, 6, 6)
        np.testing.assert_allclose(out[0], 12.0)
        np.testing.assert_allclose(out[1], -7.0)

    def test_known_2x2_permutation(self):
        r_ab = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        # swap the two rows
        m = np.array([[[0, 1], [1, 1]], [[0, 0], [1, 0]]], dtype=np.int32)
        out = warp_chrominance(r_ab, MappingField(m, (2, 2)))
        np.testing.assert_array_equal(out[0], [[2, 3], [0, 1]])
        np.testing.assert_array_equal(out[1], [[6, 7], [4, 5]])

    def test_gather_only(self):
        rng = np.random.default_rng(9)
        r_ab = rng.standard_normal((2, 5, 5)).astype(np.float32)
        out = warp_chrominance(r_ab, random_field(rng, (5, 5), (5, 5)))
        assert set(out.reshape(-1)) <= set(r_ab.reshape(-1))


class TestFakeReference:
    def test_identity_fields_bit_exact(self):
        rng = np.random.default_rng(10)
        t_ab = rng.standard_normal((2, 6, 6)).astype(np.float32)
        ident = MappingField.identity(6, 6)
        out = fake_reference(t_ab, ident, ident)
        assert out.tobytes() == t_ab.tobytes()

    def test_identity_on_range_collapses_composition(self):
        rng = np.random.default_rng(11)
        t_ab = rng.standard_normal((2, 4, 4)).astype(np.float32)
        phi_tr = random_field(rng, (4, 4), (4, 4))
        out = fake_reference(t_ab, phi_tr, MappingField.identity(4, 4))
        expected = warp_chrominance(t_ab, phi_tr)
        np.testing.assert_array_equal(out, expected)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(12)
        t_ab = rng.standard_normal((2, 4, 5)).astype(np.float32)
        phi_tr = random_field(rng, (4, 5), (3, 6))
        phi_rt = random_field(rng, (3, 6), (4, 5))
        out = fake_reference(t_ab, phi_tr, phi_rt)
        for y in range(4):
            for x in range(5):
                qx, qy = phi_tr.map[y, x]
                rx, ry = phi_rt.map[qy, qx]
                np.testing.assert_array_equal(out[:, y, x], t_ab[:, ry, rx])


class TestSampleSelectionBaselines:
    def test_threshold_picks_top_fraction(self):
        rng = np.random.default_rng(13)
        planes = rng.uniform(-1, 1, (10, 10, 10)).astype(np.float32)
        sims = SimilarityMaps(planes)
        mask = select_samples_threshold(sims, fraction=0.10)
        assert mask.sum() == 10
        avg = planes.mean(axis=0)
        assert avg[mask].min() >= avg[~mask].max() - 1e-7

    def test_cross_check_matches_brute_force(self):
        rng = np.random.default_rng(14)
        phi_tr = random_field(rng, (6, 6), (6, 6))
        phi_rt = random_field(rng, (6, 6), (6, 6))
        mask = select_samples_cross_check(phi_tr, phi_rt)
        for y in range(6):
            for x in range(6):
                qx, qy = phi_tr.map[y, x]
                rx, ry = phi_rt.map[qy, qx]
                assert mask[y, x] == ((rx, ry) == (x, y))

    def test_matching_error_is_one_minus_sim(self):
        planes = np.full((10, 2, 2), 0.25, dtype=np.float32)
        err = matching_error_planes(SimilarityMaps(planes))
        np.testing.assert_allclose(err, 0.75)

    def test_debug_dump_writes_ten_planes(self, tmp_path):
        from chromatix.fusion import dump_similarity_pngs

        rng = np.random.default_rng(15)
        sims = SimilarityMaps(rng.uniform(-1, 1, (10, 8, 8)).astype(np.float32))
        paths = dump_similarity_pngs(sims, tmp_path)
        assert len(paths) == 10
        import os

        assert all(os.path.exists(p) for p in paths)
