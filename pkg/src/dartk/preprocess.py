"""Resampling, band-pass filtering, windowing and normalization.

The pipeline order is fixed: resample to 250 Hz, band-pass 1-40 Hz with a
delay-compensated linear-phase FIR, cut 2 s windows at a 1 s stride, and
scale every window into [-1, 1] by its own joint max-abs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .errors import (
    IoFailure,
    IrrationalRatio,
    LengthMismatch,
    RateMismatch,
    TooShort,
    UpsamplingUnsupported,
)
from .ingest import Recording

TARGET_RATE = 250.0
WINDOW = 500
STRIDE = 250
MAX_RATIO_TERM = 10000


@dataclass(frozen=True)
class FilterSpec:
    f_low: float = 1.0
    f_high: float = 40.0
    n_taps: int = 825
    window: str = "hamming"
    forward_backward: bool = False

    def validate(self, fs: float) -> None:
        if self.n_taps % 2 != 1:
            raise ValueError(f"n_taps must be odd, got {self.n_taps}")
        if not 0 < self.f_low < self.f_high < fs / 2:
            raise ValueError(f"need 0 < {self.f_low} < {self.f_high} < {fs / 2}")


def design_bandpass(spec: FilterSpec, fs: float) -> np.ndarray:
    """Windowed ideal band-pass (difference of two sincs).

    The window leaks a little DC through the low-frequency stop band; a
    scaled copy of the window is subtracted so the DC gain is exactly zero.
    """
    spec.validate(fs)
    n = np.arange(spec.n_taps) - (spec.n_taps - 1) / 2
    lo, hi = spec.f_low / fs, spec.f_high / fs
    ideal = 2 * hi * np.sinc(2 * hi * n) - 2 * lo * np.sinc(2 * lo * n)
    win = signal.get_window(spec.window, spec.n_taps, fftbins=False)
    taps = ideal * win
    taps -= win * (taps.sum() / win.sum())
    return taps


def frequency_response(taps: np.ndarray, freqs, fs: float) -> np.ndarray:
    """Complex response of a centred (zero-phase) FIR at ``freqs`` Hz."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    n = np.arange(len(taps)) - (len(taps) - 1) / 2
    return np.exp(-2j * np.pi * np.outer(freqs / fs, n)) @ taps


def apply_fir(x: np.ndarray, taps: np.ndarray, forward_backward: bool = False) -> np.ndarray:
    """Centred convolution along the last axis with zero-padded edges."""
    if x.shape[-1] < len(taps):
        raise TooShort(f"{x.shape[-1]} samples is shorter than the {len(taps)}-tap filter")
    kernel = taps.reshape((1,) * (x.ndim - 1) + (-1,))
    y = signal.oaconvolve(x, kernel, mode="same", axes=-1)
    if forward_backward:
        # symmetric taps: the time-reversed pass is the same centred convolution
        y = signal.oaconvolve(y, kernel, mode="same", axes=-1)
    return y


def bandpass_zero_phase(rec: Recording, spec: FilterSpec = FilterSpec()) -> Recording:
    taps = design_bandpass(spec, rec.sampling_rate)
    return rec.replace(data=apply_fir(rec.data, taps, spec.forward_backward))


def rational_ratio(fs_in: float, fs_out: float) -> tuple[int, int]:
    ratio = Fraction(fs_out).limit_denominator(10**9) / Fraction(fs_in).limit_denominator(10**9)
    if ratio.numerator > MAX_RATIO_TERM or ratio.denominator > MAX_RATIO_TERM:
        raise IrrationalRatio(f"{fs_in} Hz -> {fs_out} Hz reduces to "
                              f"{ratio.numerator}/{ratio.denominator}")
    return ratio.numerator, ratio.denominator


def resample(rec: Recording, target_hz: float = TARGET_RATE) -> Recording:
    """Polyphase windowed-sinc downsampling by the reduced ratio p/q."""
    p, q = rational_ratio(rec.sampling_rate, target_hz)
    if p == q:
        return rec
    if p > q:
        raise UpsamplingUnsupported(f"{rec.sampling_rate} Hz -> {target_hz} Hz is upsampling")
    n_out = math.ceil(rec.n_samples * p / q)
    if rec.n_samples:
        data = signal.resample_poly(rec.data, p, q, axis=1, window="hamming")
    else:
        data = np.zeros((rec.n_channels, 0))
    markers = []
    for m in rec.markers:
        pos = min(int(round(m.position * p / q)), max(n_out - 1, 0))
        markers.append(type(m)(pos, m.kind, m.description))
    return Recording(data[:, :n_out], target_hz, rec.channel_labels, markers)


def normalize(window: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide by the max-abs over all channels and samples jointly."""
    window = np.asarray(window, dtype=np.float64)
    if window.size == 0:
        raise ValueError("cannot normalize an empty window")
    scale = float(np.max(np.abs(window)))
    if scale == 0.0:
        return window.copy(), 1.0
    return window / scale, scale


def window_starts(n_samples: int, win: int = WINDOW, stride: int = STRIDE) -> np.ndarray:
    if n_samples < win:
        return np.zeros(0, dtype=np.int64)
    return np.arange((n_samples - win) // stride + 1, dtype=np.int64) * stride


def raw_windows(data: np.ndarray, win: int = WINDOW, stride: int = STRIDE) -> np.ndarray:
    """(n_windows, channels, win) view; no copy, no normalization."""
    starts = window_starts(data.shape[-1], win, stride)
    if not len(starts):
        return np.zeros((0, data.shape[0], win))
    view = np.lib.stride_tricks.sliding_window_view(data, win, axis=-1)
    return np.moveaxis(view[:, starts], 1, 0)


@dataclass
class Segment:
    data: np.ndarray          # (channels, T), |values| <= 1
    subject_id: str
    source_offset: int
    norm_scale: float

    @property
    def shape(self):
        return self.data.shape


@dataclass
class SegmentPair:
    noisy: Segment
    clean: Segment

    @property
    def subject_id(self) -> str:
        return self.noisy.subject_id

    @property
    def source_offset(self) -> int:
        return self.noisy.source_offset

    @property
    def key(self) -> tuple[str, int]:
        return self.noisy.subject_id, self.noisy.source_offset


def segment_recording(rec: Recording, subject_id: str, win: int = WINDOW,
                      stride: int = STRIDE) -> list[Segment]:
    out = []
    for start, w in zip(window_starts(rec.n_samples, win, stride), raw_windows(rec.data, win, stride)):
        norm, scale = normalize(w)
        out.append(Segment(norm, subject_id, int(start), scale))
    return out


def segment(noisy: Recording, clean: Recording, subject_id: str = "0",
            win: int = WINDOW, stride: int = STRIDE) -> list[SegmentPair]:
    """Cut aligned noisy/clean recordings into independently normalized pairs."""
    if noisy.n_samples != clean.n_samples or noisy.n_channels != clean.n_channels:
        raise LengthMismatch(f"noisy {noisy.data.shape} vs clean {clean.data.shape}")
    if noisy.sampling_rate != clean.sampling_rate:
        raise RateMismatch(f"noisy {noisy.sampling_rate} Hz vs clean {clean.sampling_rate} Hz")
    return [SegmentPair(a, b) for a, b in zip(segment_recording(noisy, subject_id, win, stride),
                                              segment_recording(clean, subject_id, win, stride))]


def preprocess_pair(noisy: Recording, clean: Recording, subject_id: str,
                    spec: FilterSpec = FilterSpec(), target_hz: float = TARGET_RATE,
                    win: int = WINDOW, stride: int = STRIDE):
    """Full chain for one subject. Returns (pairs, filtered noisy, filtered clean)."""
    fn = bandpass_zero_phase(resample(noisy, target_hz), spec)
    fc = bandpass_zero_phase(resample(clean, target_hz), spec)
    return segment(fn, fc, subject_id, win, stride), fn, fc


# --------------------------------------------------------------------------
# segment store: one (n, 2, C, T) float64 .npy per subject plus index.json


def save_segments(pairs: Sequence[SegmentPair], out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_subject: dict[str, list[SegmentPair]] = {}
    for p in pairs:
        by_subject.setdefault(p.subject_id, []).append(p)
    index = {"format": "dartk-segments", "version": 1, "subjects": {}}
    for sid, ps in sorted(by_subject.items()):
        fname = f"{sid}.npy"
        arr = np.stack([np.stack([p.noisy.data, p.clean.data]) for p in ps])
        np.save(out_dir / fname, arr.astype("<f8"))
        index["subjects"][sid] = {
            "file": fname,
            "shape": list(arr.shape),
            "offsets": [p.source_offset for p in ps],
            "noisy_scales": [p.noisy.norm_scale.hex() for p in ps],
            "clean_scales": [p.clean.norm_scale.hex() for p in ps],
        }
    path = out_dir / "index.json"
    path.write_text(json.dumps(index, indent=1), encoding="utf-8")
    return path


def load_segments(store) -> list[SegmentPair]:
    store = Path(store)
    index_path = store / "index.json" if store.is_dir() else store
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read segment index {index_path}: {exc}") from exc
    pairs = []
    for sid, info in index["subjects"].items():
        arr = np.load(index_path.parent / info["file"])
        for i, off in enumerate(info["offsets"]):
            pairs.append(SegmentPair(
                Segment(arr[i, 0], sid, off, float.fromhex(info["noisy_scales"][i])),
                Segment(arr[i, 1], sid, off, float.fromhex(info["clean_scales"][i]))))
    return pairs


def group_by_subject(pairs: Iterable[SegmentPair]) -> dict[str, list[SegmentPair]]:
    out: dict[str, list[SegmentPair]] = {}
    for p in pairs:
        out.setdefault(p.subject_id, []).append(p)
    return out
