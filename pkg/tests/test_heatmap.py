import numpy as np
import pytest

from oovtrack import (
    ChannelOutOfRange,
    CostStack,
    HeatmapStack,
    peaks,
    render_labels,
    sample,
    sample_cost,
    smooth,
    to_cost,
)
from oovtrack.heatmap import sample_each_channel

LOG4 = 1.3862943611198906  # -log(1/4), uniform 2x2 channel


class TestRenderLabels:
    def test_peak_at_pixel_centre(self):
        st = render_labels(np.array([[10.0, 10.0]]), sigma=5.0, dims=(64, 64))
        idx = np.unravel_index(np.argmax(st.values[0]), st.values[0].shape)
        assert idx == (10, 10)
        assert np.isclose(st.values[0, 10, 10], 1.0)

    def test_far_outside_point_is_near_zero(self):
        st = render_labels(np.array([[-50.0, -50.0]]), sigma=5.0, dims=(64, 64))
        assert st.values[0].max() < 1e-10

    def test_scale_progression_brings_points_in(self):
        # the same spread-out point set lands progressively more inside the
        # grid as the scale shrinks
        from oovtrack import ScaleConfig, to_heatmap_space

        pts = np.array([[-200.0, 50.0], [500.0, 128.0], [128.0, -90.0], [128.0, 128.0],
                        [310.0, 330.0], [-40.0, 290.0]])
        counts = []
        for s in (1.0, 0.5, 1.0 / 3.0, 0.25):
            cfg = ScaleConfig(s=s, n_img=(256, 256))
            hm = to_heatmap_space(pts, cfg)
            inside = ((hm >= 0) & (hm <= 255)).all(axis=1)
            counts.append(int(inside.sum()))
        assert counts == sorted(counts)
        assert counts[0] < counts[-1]

    def test_argmax_recovers_in_bounds_points_within_half_pixel(self, rng):
        pts = rng.uniform(5, 58, size=(30, 2))
        st = render_labels(pts, sigma=4.0, dims=(64, 64))
        pk, val = peaks(st)
        assert np.all(np.abs(pk - pts) <= 0.5 + 1e-9)
        assert np.all(val > 0.9)

    def test_amplitudes_scale_channels(self):
        st = render_labels(
            np.array([[20.0, 20.0], [40.0, 40.0]]), sigma=3.0, dims=(64, 64),
            amplitudes=[1.0, 0.25],
        )
        assert np.isclose(st.values[0].max(), 1.0)
        assert np.isclose(st.values[1].max(), 0.25)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            render_labels(np.zeros((1, 2)), sigma=0.0, dims=(8, 8))


class TestSample:
    def test_exact_grid_node(self, rng):
        vals = rng.uniform(0, 1, size=(1, 16, 16)).astype(np.float32)
        st = HeatmapStack(values=vals)
        assert sample(st, 0, (7, 3)) == pytest.approx(float(vals[0, 3, 7]), abs=1e-7)

    def test_uniform_channel_interpolates_to_constant(self, rng):
        st = HeatmapStack(values=np.full((1, 9, 9), 0.37, dtype=np.float32))
        for p in rng.uniform(0, 8, size=(25, 2)):
            assert sample(st, 0, p) == pytest.approx(0.37, abs=1e-6)

    def test_out_of_bounds_returns_zero(self):
        st = HeatmapStack(values=np.ones((1, 8, 8), dtype=np.float32))
        assert sample(st, 0, (-1.0, -1.0)) == 0.0
        assert sample(st, 0, (7.5, 3.0)) == 0.0
        assert sample(st, 0, (3.0, 1000.0)) == 0.0
        # the boundary itself is inside
        assert sample(st, 0, (7.0, 7.0)) == 1.0

    def test_channel_out_of_range(self):
        st = HeatmapStack(values=np.ones((2, 8, 8), dtype=np.float32))
        with pytest.raises(ChannelOutOfRange):
            sample(st, 2, (1, 1))

    def test_lipschitz_in_cell_bound(self, rng):
        # |f(p+d) - f(p)| <= L |d|_1 with L the max adjacent-cell difference
        vals = rng.uniform(0, 1, size=(1, 12, 12)).astype(np.float32)
        st = HeatmapStack(values=vals)
        lx = np.abs(np.diff(vals[0], axis=1)).max()
        ly = np.abs(np.diff(vals[0], axis=0)).max()
        lips = max(lx, ly)
        for _ in range(200):
            p = rng.uniform(0.5, 10.5, 2)
            d = rng.uniform(-0.3, 0.3, 2)
            a = sample(st, 0, p)
            b = sample(st, 0, p + d)
            assert abs(a - b) <= lips * np.abs(d).sum() + 1e-6

    def test_vectorised_matches_scalar(self, rng):
        vals = rng.uniform(0, 1, size=(4, 10, 10)).astype(np.float32)
        st = HeatmapStack(values=vals)
        pts = rng.uniform(-2, 11, size=(7, 4, 2))
        out = sample_each_channel(st, pts)
        for i in range(7):
            for c in range(4):
                assert out[i, c] == pytest.approx(sample(st, c, pts[i, c]), abs=1e-9)


class TestToCost:
    def test_uniform_2x2_is_log4(self):
        st = HeatmapStack(values=np.full((1, 2, 2), 0.5, dtype=np.float32))
        cost = to_cost(st)
        np.testing.assert_allclose(cost.values[0], LOG4, rtol=1e-5)

    def test_single_hot_channel(self):
        v = np.zeros((1, 8, 8), dtype=np.float32)
        v[0, 4, 4] = 1.0
        cost = to_cost(HeatmapStack(values=v), eps=1e-12)
        assert cost.values[0, 4, 4] < 1e-6
        other = np.delete(cost.values[0].ravel(), 4 * 8 + 4)
        assert other.min() > 20.0

    def test_monotone_decreasing_in_heatmap_value(self, rng):
        v = rng.uniform(0, 1, size=(1, 16, 16)).astype(np.float32)
        cost = to_cost(HeatmapStack(values=v))
        flat_v = v[0].ravel()
        flat_c = cost.values[0].ravel()
        order = np.argsort(flat_v)
        # costs sorted by heatmap value must be non-increasing
        diffs = np.diff(flat_c[order])
        assert np.all(diffs <= 1e-6)

    def test_argmin_cost_is_argmax_heatmap(self, rng):
        v = rng.uniform(0, 1, size=(5, 20, 20)).astype(np.float32)
        cost = to_cost(HeatmapStack(values=v))
        for c in range(5):
            assert np.argmax(v[c]) == np.argmin(cost.values[c])

    def test_normalisation_survives_log_round_trip(self, rng):
        v = rng.uniform(0, 1, size=(3, 64, 64)).astype(np.float32)
        v[1] = 0.0  # empty channel exercises the eps floor
        cost = to_cost(HeatmapStack(values=v))
        for c in range(3):
            total = np.exp(-cost.values[c].astype(np.float64)).sum()
            assert total == pytest.approx(1.0, abs=1e-5)

    def test_oob_cost_dominates_grid(self, rng):
        v = rng.uniform(0, 1, size=(3, 16, 16)).astype(np.float32)
        cost = to_cost(HeatmapStack(values=v))
        for c in range(3):
            assert cost.oob_cost[c] >= cost.values[c].max() - 1e-6

    def test_sample_cost_out_of_bounds(self, rng):
        v = rng.uniform(0, 1, size=(2, 16, 16)).astype(np.float32)
        cost = to_cost(HeatmapStack(values=v))
        assert sample_cost(cost, 1, (-5.0, 2.0)) == pytest.approx(float(cost.oob_cost[1]))


class TestSmooth:
    def test_zero_sigma_is_identity(self, rng):
        st = HeatmapStack(values=rng.uniform(0, 1, size=(2, 16, 16)).astype(np.float32))
        out = smooth(st, 0.0)
        assert np.array_equal(out.values, st.values)

    def test_delta_becomes_gaussian_with_peak_preserved(self):
        v = np.zeros((1, 33, 33), dtype=np.float32)
        v[0, 16, 16] = 1.0
        out = smooth(HeatmapStack(values=v), 2.0)
        idx = np.unravel_index(np.argmax(out.values[0]), (33, 33))
        assert idx == (16, 16)
        # discrete Gaussian amplitude ~ 1/(2 pi sigma^2)
        assert out.values[0, 16, 16] == pytest.approx(1.0 / (2 * np.pi * 4.0), rel=0.05)

    def test_mass_preserved_for_interior_blob(self):
        st = render_labels(np.array([[32.0, 32.0]]), sigma=3.0, dims=(64, 64))
        out = smooth(st, 2.0)
        before = st.values[0].astype(np.float64).sum()
        after = out.values[0].astype(np.float64).sum()
        assert after == pytest.approx(before, rel=1e-3)


class TestPeaks:
    def test_peak_location_and_value(self):
        v = np.zeros((2, 8, 8), dtype=np.float32)
        v[0, 2, 5] = 0.7
        v[1, 6, 1] = 0.4
        pk, val = peaks(HeatmapStack(values=v))
        assert pk.tolist() == [[5.0, 2.0], [1.0, 6.0]]
        np.testing.assert_allclose(val, [0.7, 0.4], rtol=1e-6)


class TestStackValidation:
    def test_rejects_out_of_range_values(self):
        with pytest.raises(ValueError):
            HeatmapStack(values=np.full((1, 4, 4), 1.5, dtype=np.float32))
        with pytest.raises(ValueError):
            HeatmapStack(values=np.full((1, 4, 4), -0.1, dtype=np.float32))

    def test_rejects_non_finite(self):
        v = np.zeros((1, 4, 4), dtype=np.float32)
        v[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            HeatmapStack(values=v)

    def test_cost_stack_requires_dominating_oob(self):
        v = np.full((1, 4, 4), 2.0, dtype=np.float32)
        with pytest.raises(ValueError):
            CostStack(values=v, oob_cost=np.array([1.0], dtype=np.float32))
