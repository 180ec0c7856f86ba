import numpy as np
import pytest

from oovtrack import (
    BadMagic,
    NoiseConfig,
    OOVHFormatError,
    OraclePredictor,
    FilePredictor,
    ScaleConfig,
    TruncatedFile,
    VersionMismatch,
    from_heatmap_space,
    load_heatmaps,
    oracle_predict,
    peaks,
    project,
    reference_scene,
    save_heatmaps,
    to_heatmap_space,
)
from oovtrack.predictor import render_noisy, substream

RAYLEIGH_MEAN_S2 = 2.0 * np.sqrt(np.pi / 2.0)  # E|N(0, 2^2 I_2)| = 2 sqrt(pi/2)


class TestOracle:
    def test_zero_noise_peaks_at_rounded_projections(self):
        scene = reference_scene(s=1.0)
        stack = oracle_predict(scene, NoiseConfig())
        p_s = to_heatmap_space(project(scene.model, scene.pose, scene.k), scene.cfg)
        pk, val = peaks(stack)
        np.testing.assert_array_equal(pk, np.round(p_s))
        assert np.all(val > 0.9)

    def test_zero_noise_recovers_projections_through_inverse_map(self):
        # image-space recovery from channel argmaxes, bounded by grid
        # quantisation: 0.5 px at s=1, 0.5/s px below
        for s in (1.0, 0.5):
            scene = reference_scene(s=s)
            stack = oracle_predict(scene, NoiseConfig())
            pk, _ = peaks(stack)
            rec = from_heatmap_space(pk, scene.cfg)
            p_c = project(scene.model, scene.pose, scene.k)
            assert np.abs(rec - p_c).max() <= 0.5 / s + 1e-9

    def test_full_dropout_empties_all_channels(self, scene):
        stack = oracle_predict(scene, NoiseConfig(dropout_prob=1.0))
        assert stack.values.max() < 1e-8

    def test_deterministic_for_fixed_seed(self, scene):
        noise = NoiseConfig(jitter_sigma=2.0, amp_range=(0.5, 1.0), dropout_prob=0.2,
                            clutter_blobs=2, clutter_amp=0.4, seed=99)
        a = oracle_predict(scene, noise)
        b = oracle_predict(scene, noise)
        assert np.array_equal(a.values, b.values)

    def test_predictor_substreams_differ_by_index_not_order(self, scene):
        noise = NoiseConfig(jitter_sigma=2.0, seed=5)
        pred = OraclePredictor(scene, noise)
        a7 = pred.predict(7)
        a3 = pred.predict(3)
        b3 = pred.predict(3)
        b7 = pred.predict(7)
        assert np.array_equal(a7.values, b7.values)
        assert np.array_equal(a3.values, b3.values)
        assert not np.array_equal(a3.values, a7.values)

    def test_jitter_displacement_matches_rayleigh_mean(self):
        # independent oracle: mean norm of a rounded 2D Gaussian offset
        pt = np.array([[32.0, 32.0]])
        noise = NoiseConfig(jitter_sigma=2.0)
        disp = []
        for i in range(1000):
            st = render_noisy(pt, noise, sigma=4.0, dims=(64, 64), scale=1.0,
                              rng=substream(1234, i))
            pk, _ = peaks(st)
            disp.append(np.linalg.norm(pk[0] - pt[0]))
        assert np.mean(disp) == pytest.approx(RAYLEIGH_MEAN_S2, rel=0.10)

    def test_clutter_adds_distant_local_maxima(self):
        pt = np.array([[128.0, 128.0], [64.0, 190.0], [200.0, 40.0]])
        noise = NoiseConfig(clutter_blobs=3, clutter_amp=0.5, seed=3)
        st = render_noisy(pt, noise, sigma=5.0, dims=(256, 256), scale=1.0,
                          rng=np.random.default_rng(3))
        ys, xs = np.mgrid[0:256, 0:256]
        for c in range(3):
            d = np.sqrt((xs - pt[c, 0]) ** 2 + (ys - pt[c, 1]) ** 2)
            far = st.values[c][d > 30.0]
            assert far.max() >= 0.25  # a clutter peak well away from the point

    def test_values_clamped_to_unit_interval_under_clutter(self):
        pt = np.full((4, 2), 50.0)
        noise = NoiseConfig(clutter_blobs=25, clutter_amp=1.0, seed=8)
        st = render_noisy(pt, noise, sigma=8.0, dims=(100, 100), scale=1.0,
                          rng=np.random.default_rng(8))
        assert st.values.max() <= 1.0
        assert st.values.min() >= 0.0


class TestOOVH:
    def test_round_trip_bitwise(self, rng, tmp_path):
        vals = rng.uniform(0, 1, size=(7, 33, 41)).astype(np.float32)
        from oovtrack import HeatmapStack

        st = HeatmapStack(values=vals, scale=0.25)
        path = tmp_path / "x.oovh"
        save_heatmaps(st, path)
        st2 = load_heatmaps(path)
        assert np.array_equal(st.values, st2.values)
        assert st2.scale == np.float32(0.25)
        assert (st2.n_channels, st2.height, st2.width) == (7, 33, 41)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.oovh"
        self._write_valid(path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"JUNK"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagic):
            load_heatmaps(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "x.oovh"
        self._write_valid(path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_heatmaps(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.oovh"
        self._write_valid(path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(TruncatedFile):
            load_heatmaps(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "x.oovh"
        path.write_bytes(b"OOVH\x01")
        with pytest.raises(TruncatedFile):
            load_heatmaps(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = tmp_path / "x.oovh"
        self._write_valid(path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(OOVHFormatError):
            load_heatmaps(path)

    @staticmethod
    def _write_valid(path):
        from oovtrack import HeatmapStack

        st = HeatmapStack(values=np.zeros((2, 4, 5), dtype=np.float32), scale=1.0)
        save_heatmaps(st, path)

    def test_file_predictor_round_trip(self, rng, tmp_path):
        from oovtrack import HeatmapStack

        vals = rng.uniform(0, 1, size=(3, 16, 16)).astype(np.float32)
        st = HeatmapStack(values=vals, scale=0.5)
        save_heatmaps(st, tmp_path / "view_00004.oovh")
        fp = FilePredictor(tmp_path)
        out = fp.predict(4)
        assert np.array_equal(out.values, st.values)

    def test_file_predictor_missing_file_surfaces(self, tmp_path):
        fp = FilePredictor(tmp_path)
        with pytest.raises(FileNotFoundError):
            fp.predict(0)
