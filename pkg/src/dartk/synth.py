"""Paired clean/corrupted recordings with gradient and cardiac artifacts.

Clean EEG is band-shaped Gaussian noise. The gradient artifact is a comb of
slice-frequency harmonics with 1/k decay plus an exponential transient at
every volume onset; the cardiac (BCG) artifact is a Mexican-hat template at
jittered beat intervals. Each artifact is scaled so that its global peak
equals ``amplitude_ratio`` times the target EEG RMS.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBand, InvalidConfig, RateMismatch
from .ingest import Marker, MarkerKind, Recording

GA_TRANSIENT_TAU_S = 0.01
GA_PHASE_JITTER_RAD = 0.3


@dataclass(frozen=True)
class GaParams:
    tr_s: float = 2.0
    slices_per_tr: int = 30
    amplitude_ratio: float = 20.0
    harmonic_count: int = 10
    gain_spread: float = 0.2
    transient_weight: float = 1.0

    def __post_init__(self):
        if not self.tr_s > 0:
            raise InvalidConfig("ga.tr_s must be > 0")
        if self.slices_per_tr < 1:
            raise InvalidConfig("ga.slices_per_tr must be >= 1")
        if self.amplitude_ratio < 0:
            raise InvalidConfig("ga.amplitude_ratio must be >= 0")

    @property
    def slice_frequency(self) -> float:
        return self.slices_per_tr / self.tr_s


@dataclass(frozen=True)
class BcgParams:
    heart_rate_bpm: float = 65.0
    rate_jitter: float = 0.05
    amplitude_ratio: float = 3.0
    template_width_s: float = 0.1
    per_channel_gain_spread: float = 0.3

    def __post_init__(self):
        if not 20 < self.heart_rate_bpm < 250:
            raise InvalidConfig("bcg.heart_rate_bpm must lie in (20, 250)")
        if self.amplitude_ratio < 0:
            raise InvalidConfig("bcg.amplitude_ratio must be >= 0")
        if not self.template_width_s > 0:
            raise InvalidConfig("bcg.template_width_s must be > 0")


DEFAULT_BANDS = ((1.0, 4.0, 0.25), (4.0, 8.0, 0.2), (8.0, 13.0, 0.35), (13.0, 30.0, 0.2))


@dataclass(frozen=True)
class EegParams:
    band_powers: tuple = DEFAULT_BANDS
    rms_uV: float = 10.0


@dataclass(frozen=True)
class SynthConfig:
    n_channels: int = 4
    duration_s: float = 120.0
    sampling_rate: float = 1000.0
    seed: int = 42
    ga: GaParams = field(default_factory=GaParams)
    bcg: BcgParams = field(default_factory=BcgParams)
    eeg: EegParams = field(default_factory=EegParams)

    def __post_init__(self):
        if not self.duration_s > 0:
            raise InvalidConfig("duration_s must be > 0")
        if self.n_channels < 1:
            raise InvalidConfig("n_channels must be >= 1")
        if not self.sampling_rate > 0:
            raise InvalidConfig("sampling_rate must be > 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sampling_rate))

    @property
    def labels(self) -> list[str]:
        return [f"E{i + 1:02d}" for i in range(self.n_channels)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eeg"]["band_powers"] = [list(b) for b in self.eeg.band_powers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        sub = {"ga": GaParams, "bcg": BcgParams, "eeg": EegParams}
        kw = {}
        allowed = {f.name for f in dataclasses.fields(cls)}
        for k, v in d.items():
            if k not in allowed:
                raise InvalidConfig(f"unknown synth key: {k}")
            if k in sub:
                names = {f.name for f in dataclasses.fields(sub[k])}
                bad = set(v) - names
                if bad:
                    raise InvalidConfig(f"unknown synth.{k} key(s): {sorted(bad)}")
                v = dict(v)
                if k == "eeg" and "band_powers" in v:
                    v["band_powers"] = tuple(tuple(float(x) for x in b) for b in v["band_powers"])
                kw[k] = sub[k](**v)
            else:
                kw[k] = v
        return cls(**kw)


def _streams(seed: int):
    clean, ga, bcg = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(clean), np.random.default_rng(ga), np.random.default_rng(bcg)


def generate_clean(cfg: SynthConfig) -> Recording:
    """Independent band-shaped Gaussian EEG on every channel, RMS = rms_uV."""
    fs, n = cfg.sampling_rate, cfg.n_samples
    for lo, hi, rel in cfg.eeg.band_powers:
        if not 0 < lo < hi < fs / 2:
            raise InvalidBand(f"band ({lo}, {hi}) outside (0, {fs / 2})")
        if rel < 0:
            raise InvalidBand(f"negative relative power {rel} for band ({lo}, {hi})")
    rng, _, _ = _streams(cfg.seed)
    white = rng.standard_normal((cfg.n_channels, n))
    if cfg.eeg.rms_uV == 0 or n == 0:
        return Recording(np.zeros((cfg.n_channels, n)), fs, cfg.labels)
    freqs = np.fft.rfftfreq(n, 1 / fs)
    gain = np.zeros_like(freqs)
    for lo, hi, rel in cfg.eeg.band_powers:
        sel = (freqs >= lo) & (freqs < hi)
        gain[sel] += np.sqrt(rel / (hi - lo))
    shaped = np.fft.irfft(np.fft.rfft(white, axis=1) * gain, n=n, axis=1)
    rms = np.sqrt(np.mean(shaped ** 2, axis=1, keepdims=True))
    rms[rms == 0] = 1.0
    return Recording(shaped / rms * cfg.eeg.rms_uV, fs, cfg.labels)


def volume_onsets(cfg: SynthConfig, n_samples: int) -> np.ndarray:
    n_vol = int(np.floor(n_samples / cfg.sampling_rate / cfg.ga.tr_s + 1e-9))
    pos = np.round(np.arange(n_vol) * cfg.ga.tr_s * cfg.sampling_rate).astype(np.int64)
    return pos[pos < n_samples]


def gradient_artifact(cfg: SynthConfig, n_samples: int, n_channels: int, rng) -> np.ndarray:
    ga, fs = cfg.ga, cfg.sampling_rate
    t = np.arange(n_samples) / fs
    ks = [k for k in range(1, ga.harmonic_count + 1) if k * ga.slice_frequency < fs / 2]
    gains = np.abs(1 + ga.gain_spread * rng.standard_normal(n_channels))
    phases = GA_PHASE_JITTER_RAD * rng.standard_normal((n_channels, max(len(ks), 1)))
    out = np.zeros((n_channels, n_samples))
    for j, k in enumerate(ks):
        out += np.sin(2 * np.pi * k * ga.slice_frequency * t + phases[:, j:j + 1]) / k
    transient = np.zeros(n_samples)
    decay = np.exp(-np.arange(n_samples) / (GA_TRANSIENT_TAU_S * fs))
    for p in volume_onsets(cfg, n_samples):
        transient[p:] += decay[:n_samples - p]
    out += ga.transient_weight * transient
    return out * gains[:, None]


def mexican_hat(t: np.ndarray, width_s: float) -> np.ndarray:
    """Second-derivative-of-Gaussian shape; zero crossings at +/- width_s/2."""
    s = width_s / 2
    u = (t / s) ** 2
    return (1 - u) * np.exp(-u / 2)


def cardiac_peaks(cfg: SynthConfig, n_samples: int, rng) -> np.ndarray:
    mean = 60.0 / cfg.bcg.heart_rate_bpm
    dur = n_samples / cfg.sampling_rate
    t = rng.uniform(0, mean)
    peaks = []
    while t < dur:
        peaks.append(t)
        t += max(rng.normal(mean, cfg.bcg.rate_jitter * mean), 0.3 * mean)
    pos = np.round(np.asarray(peaks) * cfg.sampling_rate).astype(np.int64)
    return pos[pos < n_samples]


def bcg_artifact(cfg: SynthConfig, n_samples: int, n_channels: int, rng):
    fs = cfg.sampling_rate
    peaks = cardiac_peaks(cfg, n_samples, rng)
    gains = 1 + cfg.bcg.per_channel_gain_spread * rng.standard_normal(n_channels)
    half = int(np.ceil(2.5 * cfg.bcg.template_width_s * fs))
    tmpl = mexican_hat(np.arange(-half, half + 1) / fs, cfg.bcg.template_width_s)
    trace = np.zeros(n_samples + 2 * half)
    for p in peaks:
        trace[p:p + 2 * half + 1] += tmpl
    return gains[:, None] * trace[half:half + n_samples], peaks


def _scaled(x: np.ndarray, ratio: float, rms: float) -> np.ndarray:
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0 or ratio == 0:
        return np.zeros_like(x)
    return x * (ratio * rms / peak)


def render_artifacts(cfg: SynthConfig, n_samples: int, n_channels: int):
    """Artifact-only render: (ga, bcg, markers). Deterministic per seed."""
    _, ga_rng, bcg_rng = _streams(cfg.seed)
    rms = cfg.eeg.rms_uV
    ga = _scaled(gradient_artifact(cfg, n_samples, n_channels, ga_rng), cfg.ga.amplitude_ratio, rms)
    bcg_raw, peaks = bcg_artifact(cfg, n_samples, n_channels, bcg_rng)
    bcg = _scaled(bcg_raw, cfg.bcg.amplitude_ratio, rms)
    markers = [Marker(int(p), MarkerKind.VOLUME_TRIGGER, "Volume") for p in volume_onsets(cfg, n_samples)]
    markers += [Marker(int(p), MarkerKind.CARDIAC_PEAK, "QRS") for p in peaks]
    return ga, bcg, markers


def artifact_only(cfg: SynthConfig, n_samples: int | None = None,
                  n_channels: int | None = None) -> np.ndarray:
    n_samples = cfg.n_samples if n_samples is None else n_samples
    n_channels = cfg.n_channels if n_channels is None else n_channels
    ga, bcg, _ = render_artifacts(cfg, n_samples, n_channels)
    return ga + bcg


def add_artifacts(clean: Recording, cfg: SynthConfig) -> Recording:
    if clean.sampling_rate != cfg.sampling_rate:
        raise RateMismatch(f"clean at {clean.sampling_rate} Hz, config at {cfg.sampling_rate} Hz")
    ga, bcg, markers = render_artifacts(cfg, clean.n_samples, clean.n_channels)
    return clean.replace(data=clean.data + (ga + bcg), markers=tuple(markers) + clean.markers)


def generate_pair(cfg: SynthConfig) -> tuple[Recording, Recording]:
    """(corrupted, clean); the clean copy carries the same markers."""
    clean = generate_clean(cfg)
    noisy = add_artifacts(clean, cfg)
    return noisy, clean.replace(markers=noisy.markers)


def subject_configs(cfg: SynthConfig, n_subjects: int) -> list[tuple[str, SynthConfig]]:
    seeds = np.random.SeedSequence(cfg.seed).generate_state(n_subjects, dtype=np.uint32)
    return [(f"S{i:02d}", dataclasses.replace(cfg, seed=int(s))) for i, s in enumerate(seeds)]


def generate_subjects(cfg: SynthConfig, n_subjects: int):
    """[(subject_id, corrupted, clean), ...] with independent per-subject seeds."""
    return [(sid, *generate_pair(c)) for sid, c in subject_configs(cfg, n_subjects)]
