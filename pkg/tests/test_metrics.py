import math

import numpy as np
import pytest

from pupinet.metrics import PSNR_CAP, MetricsReport, evaluate_pairs, mae, psnr, ssim

from oracles import mse_loop, psnr_loop, ssim_windowed_loop


class TestMae:
    def test_known_value(self):
        a = np.zeros((2, 2, 2))
        b = np.full((2, 2, 2), 0.1)
        assert mae(a, b) == pytest.approx(0.1)

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(0)
        a, b, c = (rng.random((4, 4, 4)) for _ in range(3))
        assert mae(a, b) == mae(b, a)
        assert mae(a, c) <= mae(a, b) + mae(b, c) + 1e-12


class TestPsnr:
    def test_identical_hits_cap(self):
        a = np.random.default_rng(1).random((4, 4, 4))
        assert psnr(a, a) == PSNR_CAP

    def test_known_value(self):
        # constant error of 0.1 on unit range: psnr = 10*log10(1/0.01) = 20
        a = np.zeros((4, 4, 4))
        b = np.full((4, 4, 4), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=0.01)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = rng.random((4, 5, 6)), rng.random((4, 5, 6))
            assert psnr(a, b) == pytest.approx(psnr_loop(a, b), abs=1e-10)
            assert mae(a, b) ** 2 <= mse_loop(a, b) + 1e-12  # Jensen

    def test_monotone_in_error(self):
        a = np.zeros((4, 4, 4))
        last = np.inf
        for eps in (0.01, 0.05, 0.1, 0.5):
            cur = psnr(a, a + eps)
            assert cur < last
            last = cur

    def test_data_range_parameter(self):
        a = np.zeros((4, 4, 4))
        b = np.full((4, 4, 4), 0.2)
        assert psnr(a, b, data_range=2.0) == pytest.approx(20.0, abs=0.01)


class TestSsim:
    def test_self_similarity_is_exactly_one(self):
        x = np.random.default_rng(3).random((16, 16))
        assert ssim(x, x) == 1.0

    def test_matches_windowed_loop(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a = rng.random((12, 12))
            b = np.clip(a + 0.1 * rng.standard_normal((12, 12)), 0, 1)
            assert ssim(a, b) == pytest.approx(ssim_windowed_loop(a, b, 7), abs=1e-8)

    def test_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a, b = rng.random((10, 10)), rng.random((10, 10))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_degrades_with_noise(self):
        rng = np.random.default_rng(6)
        a = rng.random((16, 16))
        s_small = ssim(a, np.clip(a + 0.02 * rng.standard_normal(a.shape), 0, 1))
        s_large = ssim(a, np.clip(a + 0.4 * rng.standard_normal(a.shape), 0, 1))
        assert s_large < s_small < 1.0

    def test_3d_averages_depth_slices(self):
        rng = np.random.default_rng(7)
        a = rng.random((3, 12, 12))
        b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
        per_slice = [ssim(a[k], b[k]) for k in range(3)]
        assert ssim(a, b) == pytest.approx(float(np.mean(per_slice)), abs=1e-12)

    def test_window_validation(self):
        x = np.random.default_rng(8).random((10, 10))
        with pytest.raises(ValueError):
            ssim(x, x, window=4)
        with pytest.raises(ValueError):
            ssim(x, x, window=1)
        with pytest.raises(ValueError):
            ssim(np.zeros((4, 4)), np.zeros((4, 4)), window=7)


class TestMetricsReport:
    def _report(self):
        r = MetricsReport(split="val")
        r.add(3, 0.05, 26.0, 0.91)
        r.add(7, 0.03, 30.0, 0.95)
        return r

    def test_mean_row(self):
        r = self._report()
        m = r.mean()
        assert m["mae"] == pytest.approx(0.04)
        assert m["psnr"] == pytest.approx(28.0)
        assert m["ssim"] == pytest.approx(0.93)

    def test_csv_round_trip(self, tmp_path):
        r = self._report()
        path = tmp_path / "metrics.csv"
        r.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "pair_id,mae,psnr,ssim"
        assert len(lines) == 3
        r2 = MetricsReport.from_csv(path, split="val")
        assert r2.rows == r.rows
        assert r2.pair_ids == r.pair_ids

    def test_table_scales_ssim_by_100(self):
        table = self._report().format_table()
        assert "93.00" in table  # mean ssim as a percentage
        assert "28.00" in table  # mean psnr unscaled
        lines = table.splitlines()
        assert lines[0].split() == ["PSNR", "SSIM", "MAE"]
        assert lines[1].startswith("val")

    def test_duplicate_pair_rejected(self):
        r = self._report()
        with pytest.raises(ValueError):
            r.add(3, 0.1, 20.0, 0.8)

    def test_empty_mean_rejected(self):
        with pytest.raises(ValueError):
            MetricsReport(split="test").mean()


class TestEvaluatePairs:
    def test_perfect_translator(self):
        rng = np.random.default_rng(9)
        triples = [(i, x, x.copy()) for i, x in ((i, rng.random((4, 8, 8))) for i in range(3))]
        report = evaluate_pairs(lambda v: v, triples, split="test")
        assert report.pair_ids == [0, 1, 2]
        for row in report.rows.values():
            assert row["mae"] == 0.0
            assert row["psnr"] == PSNR_CAP
            assert row["ssim"] == 1.0

    def test_systematic_offset(self):
        rng = np.random.default_rng(10)
        x = rng.random((4, 8, 8)) * 0.5
        report = evaluate_pairs(lambda v: v + 0.1, [(0, x, x)], split="test")
        assert report.rows[0]["mae"] == pytest.approx(0.1)
        assert report.rows[0]["psnr"] == pytest.approx(20.0, abs=0.01)
