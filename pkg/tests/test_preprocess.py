"""Resampling, band-pass filtering, segmentation and normalization."""
import numpy as np
import pytest

from dartk import preprocess as P
from dartk.errors import IrrationalRatio, LengthMismatch, TooShort, UpsamplingUnsupported
from dartk.ingest import Marker, MarkerKind, Recording

from oracles import dft_gain

FS = 250.0


def rec(data, fs=FS, markers=()):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return Recording(data, fs, [f"C{i}" for i in range(data.shape[0])], markers)


def band_limited_noise(rng, n, fs=FS, lo=5.0, hi=30.0):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / fs)
    spec[(f < lo) | (f > hi)] = 0
    return np.fft.irfft(spec, n)


class TestResample:
    def test_identity_ratio(self):
        r = rec(np.random.default_rng(0).standard_normal((2, 300)))
        assert P.resample(r, FS) == r

    def test_length_formula(self):
        r = rec(np.zeros((1, 1000)), fs=500.0)
        assert P.resample(r, FS).n_samples == 500

    def test_sinusoid_5000_to_250(self):
        fs_in = 5000.0
        t = np.arange(int(10 * fs_in)) / fs_in
        out = P.resample(rec(np.sin(2 * np.pi * 10 * t), fs=fs_in), FS)
        ref = np.sin(2 * np.pi * 10 * np.arange(out.n_samples) / FS)
        trim = 50
        r = np.corrcoef(out.data[0, trim:-trim], ref[trim:-trim])[0, 1]
        assert r > 0.999

    def test_markers_rescaled(self):
        r = rec(np.zeros((1, 1000)), fs=1000.0, markers=[Marker(400, MarkerKind.VOLUME_TRIGGER, "V")])
        assert P.resample(r, FS).markers[0].position == 100

    def test_errors(self):
        with pytest.raises(UpsamplingUnsupported):
            P.resample(rec(np.zeros((1, 100)), fs=100.0), FS)
        with pytest.raises(IrrationalRatio):
            P.resample(rec(np.zeros((1, 100)), fs=1000.0 * np.pi), FS)


class TestBandpass:
    spec = P.FilterSpec()

    def _filter(self, x):
        return P.apply_fir(np.atleast_2d(x), P.design_bandpass(self.spec, FS))[0]

    def test_dc_rejected(self):
        y = self._filter(np.ones(5000))
        assert np.max(np.abs(y[self.spec.n_taps:-self.spec.n_taps])) < 1e-3
        assert abs(P.frequency_response(P.design_bandpass(self.spec, FS), 0.0, FS)[0]) < 1e-12

    def test_passband_10hz(self):
        t = np.arange(10000) / FS
        y = self._filter(np.sin(2 * np.pi * 10 * t))
        k = self.spec.n_taps
        amp = np.sqrt(2) * np.std(y[k:-k])
        assert abs(20 * np.log10(amp)) < 0.5

    def test_stopband_02hz(self):
        t = np.arange(20000) / FS
        y = self._filter(np.sin(2 * np.pi * 0.2 * t))
        k = self.spec.n_taps
        amp = np.sqrt(2) * np.std(y[k:-k])
        assert 20 * np.log10(amp) <= -20

    def test_response_matches_dft_oracle(self):
        taps = P.design_bandpass(self.spec, FS)
        for f in (0.2, 1.0, 10.0, 39.0, 60.0):
            assert abs(P.frequency_response(taps, f, FS)[0]) == pytest.approx(dft_gain(taps, f, FS), abs=1e-10)

    def test_impulse_returns_taps(self):
        taps = P.design_bandpass(self.spec, FS)
        n, c = 3000, 1500
        x = np.zeros(n)
        x[c] = 1.0
        y = self._filter(x)
        h = len(taps) // 2
        np.testing.assert_allclose(y[c - h:c + h + 1], taps, atol=1e-12)

    def test_zero_phase(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = band_limited_noise(rng, 8000)
            y = self._filter(x)
            lags = np.arange(-20, 21)
            cc = [np.dot(x[1000:-1000], np.roll(y, -lag)[1000:-1000]) for lag in lags]
            assert lags[int(np.argmax(cc))] == 0

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x, z = rng.standard_normal((2, 3000))
        a, b = 2.5, -0.7
        lhs = self._filter(a * x + b * z)
        rhs = a * self._filter(x) + b * self._filter(z)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.abs(rhs).max())

    def test_forward_backward_squares_response(self):
        taps = P.design_bandpass(self.spec, FS)
        x = np.zeros((1, 4000))
        x[0, 2000] = 1.0
        y = P.apply_fir(x, taps, forward_backward=True)[0]
        np.testing.assert_allclose(y, np.convolve(np.convolve(x[0], taps, "same"), taps, "same"), atol=1e-12)

    def test_too_short(self):
        with pytest.raises(TooShort):
            self._filter(np.zeros(100))

    def test_invalid_band(self):
        with pytest.raises(ValueError):
            P.design_bandpass(P.FilterSpec(f_low=40.0, f_high=1.0), FS)


class TestSegment:
    @pytest.mark.parametrize("n, count", [(1000, 3), (499, 0), (500, 1)])
    def test_counts(self, n, count):
        r = rec(np.random.default_rng(0).standard_normal((2, n)) if n else np.zeros((2, 0)))
        assert len(P.segment(r, r, "s")) == count

    def test_offsets_and_shapes(self):
        r = rec(np.random.default_rng(1).standard_normal((3, 1250)))
        pairs = P.segment(r, r, "s")
        assert [p.source_offset for p in pairs] == [0, 250, 500, 750]
        assert all(p.noisy.data.shape == (3, 500) for p in pairs)

    def test_reconstruction_from_strides(self):
        data = np.random.default_rng(2).standard_normal((2, 1500))
        segs = P.segment_recording(rec(data), "s")
        pieces = [s.data[:, :P.STRIDE] * s.norm_scale for s in segs]
        pieces.append(segs[-1].data[:, P.STRIDE:] * segs[-1].norm_scale)
        np.testing.assert_allclose(np.concatenate(pieces, axis=1), data[:, :1500], rtol=1e-15)

    def test_independent_scales(self):
        clean = rec(np.random.default_rng(3).standard_normal((2, 500)))
        noisy = clean.replace(data=clean.data * 7)
        (pair,) = P.segment(noisy, clean, "s")
        assert pair.noisy.norm_scale == pytest.approx(7 * pair.clean.norm_scale)
        np.testing.assert_allclose(pair.noisy.data, pair.clean.data)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            P.segment(rec(np.zeros((1, 600))), rec(np.zeros((1, 700))), "s")


class TestNormalize:
    def test_scale_200(self):
        w = np.array([[100.0, -200.0], [50.0, 0.0]])
        out, scale = P.normalize(w)
        assert scale == 200.0
        np.testing.assert_array_equal(out, w / 200)

    def test_zero_window(self):
        out, scale = P.normalize(np.zeros((2, 4)))
        assert scale == 1.0 and not out.any()

    def test_hand(self):
        out, scale = P.normalize(np.array([-3.0, 1.0]))
        assert scale == 3.0
        np.testing.assert_allclose(out, [-1.0, 1 / 3])

    def test_idempotent(self):
        w = np.random.default_rng(4).uniform(-1, 1, (3, 50))
        w[1, 7] = -1.0
        out, scale = P.normalize(w)
        assert scale == 1.0
        np.testing.assert_array_equal(out, w)


class TestPipeline:
    def test_preprocess_pair(self):
        rng = np.random.default_rng(5)
        clean = rec(rng.standard_normal((2, 5000)), fs=1000.0)
        noisy = clean.replace(data=clean.data + rng.standard_normal((2, 5000)))
        pairs, fn, fc = P.preprocess_pair(noisy, clean, "s")
        assert fn.sampling_rate == FS and fn.n_samples == 1250
        assert len(pairs) == 4
        assert all(np.abs(p.noisy.data).max() == pytest.approx(1.0) for p in pairs)

    def test_store_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        r = rec(rng.standard_normal((2, 1000)))
        pairs = P.segment(r, r.replace(data=r.data * 0.5), "A") + P.segment(r, r, "B")
        P.save_segments(pairs, tmp_path / "seg")
        back = P.load_segments(tmp_path / "seg")
        assert [p.key for p in back] == [p.key for p in pairs]
        for a, b in zip(back, pairs):
            np.testing.assert_array_equal(a.noisy.data, b.noisy.data)
            assert a.clean.norm_scale == b.clean.norm_scale
        assert sorted(P.group_by_subject(back)) == ["A", "B"]
