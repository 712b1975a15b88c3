"""Reconstruction metrics against hand values and naive loop oracles."""
import math

import numpy as np
import pytest
from scipy import signal

from dartk import metrics as M
from dartk.errors import ConstantInput, Empty, TooShort, ZeroRange, ZeroSignal, ZeroVector

from oracles import (
    naive_cosine,
    naive_mae,
    naive_nrmse,
    naive_pearson,
    naive_rmse,
    naive_snr_db,
    naive_ssim,
)


class TestWorkedExamples:
    def test_identity(self):
        x = np.random.default_rng(0).uniform(-1, 1, 40)
        assert M.rmse(x, x) == 0 and M.nrmse(x, x) == 0 and M.mae(x, x) == 0
        assert M.ssim(x, x) == pytest.approx(1.0, abs=1e-15)

    def test_hand_errors(self):
        assert M.rmse([0, 2], [1, 1]) == 1.0
        assert M.nrmse([0, 2], [1, 1]) == 0.5
        assert M.mae([0, 2], [1, 1]) == 1.0

    def test_constant_reference_nrmse(self):
        with pytest.raises(ZeroRange):
            M.nrmse([1, 1, 1], [0, 1, 2])

    def test_pearson_examples(self):
        x = np.array([0.1, 0.5, -0.3, 0.9])
        assert M.pearson(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-15)
        assert M.pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
        assert M.pearson([1, 0, 1, 0], [0, 1, 1, 0]) == 0.0

    def test_pearson_constant(self):
        with pytest.raises(ConstantInput):
            M.pearson([1, 1, 1], [1, 2, 3])

    def test_ssim_negation(self):
        x = np.tile([0.8, -0.8], 50)
        s2 = np.mean(x * x)
        expect = -(2 * s2 - M.SSIM_C2) / (2 * s2 + M.SSIM_C2)
        assert M.ssim(x, -x) == pytest.approx(expect, rel=1e-12)
        assert M.ssim(x, -x) < 0

    def test_ssim_zero_reconstruction(self):
        x = np.random.default_rng(1).standard_normal(64)
        x -= x.mean()
        assert M.ssim(x, np.zeros_like(x)) == pytest.approx(naive_ssim(list(x), [0.0] * 64), rel=1e-12)

    def test_snr_examples(self):
        assert M.snr_db([1, 1, 1, 1], [1, 1, 1, 0]) == pytest.approx(10 * math.log10(4), abs=1e-12)
        clean, noisy = np.array([1.0, 2, 3]), np.array([1.5, 2, 2])
        assert M.snr_gain_db(clean, noisy, noisy) == 0.0
        assert M.snr_db(clean, clean) == math.inf

    def test_snr_zero_signal(self):
        with pytest.raises(ZeroSignal):
            M.snr_db([0, 0], [1, 0])

    def test_cosine_examples(self):
        x = np.array([0.2, -0.7, 1.1])
        assert M.cosine(x, 3 * x) == pytest.approx(1.0, abs=1e-15)
        assert M.cosine([1, 0], [0, 1]) == 0.0
        assert M.cosine([1, 1], [1, -1]) == 0.0
        with pytest.raises(ZeroVector):
            M.cosine([0, 0], [1, 1])


class TestOracleEquivalence:
    """1000 random segment pairs, relative agreement 1e-12."""

    def test_all_metrics(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 200))
            x = rng.uniform(-1, 1, n)
            y = x + rng.normal(0, rng.uniform(0.01, 1), n)
            xl, yl = list(x), list(y)
            np.testing.assert_allclose(
                [M.rmse(x, y), M.nrmse(x, y), M.mae(x, y), M.pearson(x, y),
                 M.ssim(x, y), M.snr_db(x, y), M.cosine(x, y)],
                [naive_rmse(xl, yl), naive_nrmse(xl, yl), naive_mae(xl, yl), naive_pearson(xl, yl),
                 naive_ssim(xl, yl), naive_snr_db(xl, yl), naive_cosine(xl, yl)],
                rtol=1e-12, atol=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        x, y = rng.uniform(-1, 1, (2, 100))
        for f in (M.rmse, M.mae, M.cosine, M.pearson, M.ssim):
            assert f(x, y) == pytest.approx(f(y, x), rel=1e-14)
        assert M.nrmse(x, 0.5 * y) != pytest.approx(M.nrmse(0.5 * y, x))
        assert M.snr_db(x, 0.5 * y) != pytest.approx(M.snr_db(0.5 * y, x))


class TestReports:
    def test_evaluate_flattens(self):
        rng = np.random.default_rng(4)
        clean = rng.uniform(-1, 1, (3, 50))
        noisy = clean + rng.normal(0, 0.5, clean.shape)
        den = clean + rng.normal(0, 0.1, clean.shape)
        r = M.evaluate(clean, den, noisy)
        assert r.rmse == pytest.approx(M.rmse(clean.ravel(), den.ravel()))
        assert r.snr_gain_db == pytest.approx(M.snr_db(clean, den) - M.snr_db(clean, noisy))
        assert r.flags == {}

    def test_degenerate_flags(self):
        r = M.evaluate(np.ones(10), np.ones(10), np.zeros(10))
        assert math.isnan(r.nrmse) and math.isnan(r.pearson_r)
        assert r.flags["snr_clean_vs_denoised_db"] == "Infinite"
        assert r.flags["nrmse"] == "ZeroRange"

    def test_per_channel(self):
        clean = np.array([[1.0, 2, 3], [0, 1, 0]])
        rows = M.evaluate_per_channel(clean, clean * 0.5)
        assert len(rows) == 2
        assert rows[0].rmse == pytest.approx(M.rmse([1, 2, 3], [0.5, 1, 1.5]))

    def _report(self, **kw):
        base = dict(rmse=0.0, nrmse=0.0, mae=0.0, pearson_r=1.0, ssim=1.0, cosine=1.0,
                    snr_clean_vs_denoised_db=10.0, snr_gain_db=1.0)
        base.update(kw)
        return M.MetricReport(**base)

    def test_aggregate_two(self):
        s = M.aggregate([self._report(rmse=0.01), self._report(rmse=0.03)])["rmse"]
        assert s.mean == pytest.approx(0.02)
        assert s.sd == pytest.approx(math.sqrt(2) * 0.01)
        assert s.n == 2

    def test_aggregate_single(self):
        s = M.aggregate([self._report(rmse=0.5)])["rmse"]
        assert s.sd == 0.0 and s.single

    def test_aggregate_excludes_degenerate(self):
        agg = M.aggregate([self._report(pearson_r=math.nan), self._report(pearson_r=math.nan)])
        assert not agg["pearson_r"].available
        assert agg["pearson_r"].excluded == 2

    def test_aggregate_caps_infinite_snr(self):
        agg = M.aggregate([self._report(snr_clean_vs_denoised_db=math.inf), self._report()])
        s = agg["snr_clean_vs_denoised_db"]
        assert s.mean == pytest.approx((120 + 10) / 2) and s.capped == 1

    def test_aggregate_empty(self):
        with pytest.raises(Empty):
            M.aggregate([])


class TestWelch:
    def test_sinusoid_peak(self):
        fs = 250.0
        t = np.arange(5000) / fs
        p = M.welch_psd(np.sin(2 * np.pi * 10 * t), fs)
        assert abs(p.frequencies[np.argmax(p.power)] - 10) <= (p.frequencies[1] - p.frequencies[0]) / 2

    def test_parseval_white_noise(self):
        rng = np.random.default_rng(5)
        sigma2 = 2.5
        total = np.mean([M.welch_psd(rng.normal(0, math.sqrt(sigma2), 4096), 250.0).total_power()
                         for _ in range(100)])
        assert abs(total - sigma2) / sigma2 < 0.1

    def test_constant_is_dc(self):
        """A Hamming window's main lobe spans bins 0 and 1; nothing lands beyond it."""
        p = M.welch_psd(np.full(1024, 3.0), 100.0)
        assert np.argmax(p.power) == 0
        assert np.all(p.power[2:] < 1e-12 * p.power[0])

    def test_matches_scipy(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 3000))
        p = M.welch_psd(x, 250.0, nperseg=256, overlap=0.5)
        f, ref = signal.welch(x, 250.0, window="hamming", nperseg=256, noverlap=128, detrend=False)
        np.testing.assert_allclose(p.frequencies, f)
        np.testing.assert_allclose(p.power, ref, rtol=1e-10)

    def test_frequency_span_and_sign(self):
        p = M.welch_psd(np.random.default_rng(7).standard_normal(600), 200.0)
        assert p.frequencies[0] == 0 and p.frequencies[-1] == 100.0
        assert np.all(p.power >= 0)

    def test_too_short(self):
        with pytest.raises(TooShort):
            M.welch_psd(np.zeros(100), 250.0)
