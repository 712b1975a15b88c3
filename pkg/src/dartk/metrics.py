"""Reconstruction metrics on flattened segment vectors.

``x`` is always the clean reference and ``xh`` the reconstruction; NRMSE and
SNR are not symmetric in their arguments. All accumulation is float64.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConstantInput, Empty, TooShort, ZeroRange, ZeroSignal, ZeroVector

SSIM_RANGE = 2.0
SSIM_C1 = (0.01 * SSIM_RANGE) ** 2
SSIM_C2 = (0.03 * SSIM_RANGE) ** 2
SNR_CAP_DB = 120.0

METRIC_NAMES = ("rmse", "nrmse", "mae", "pearson_r", "ssim", "cosine",
                "snr_clean_vs_denoised_db", "snr_gain_db")


def _pair(x, xh):
    x = np.asarray(x, dtype=np.float64).ravel()
    xh = np.asarray(xh, dtype=np.float64).ravel()
    if x.shape != xh.shape:
        raise ValueError(f"length mismatch: {x.size} vs {xh.size}")
    if x.size == 0:
        raise ValueError("empty input")
    return x, xh


def rmse(x, xh) -> float:
    x, xh = _pair(x, xh)
    return math.sqrt(np.mean((x - xh) ** 2))


def nrmse(x, xh) -> float:
    x, xh = _pair(x, xh)
    span = x.max() - x.min()
    if span <= 0:
        raise ZeroRange("reference is constant; NRMSE undefined")
    return rmse(x, xh) / span


def mae(x, xh) -> float:
    x, xh = _pair(x, xh)
    return float(np.mean(np.abs(x - xh)))


def pearson(x, xh) -> float:
    x, xh = _pair(x, xh)
    if x.size < 2:
        raise ConstantInput("need at least two samples")
    dx, dy = x - x.mean(), xh - xh.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ConstantInput("constant input; correlation undefined")
    return float(np.dot(dx, dy) / (math.sqrt(sxx) * math.sqrt(syy)))


def ssim(x, xh, c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Single-window SSIM with global means, variances and covariance."""
    x, xh = _pair(x, xh)
    mx, my = x.mean(), xh.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((xh - my) ** 2)
    cov = np.mean((x - mx) * (xh - my))
    return float((2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))


def snr_db(x, xh) -> float:
    """10 log10(sum x^2 / sum (x - xh)^2); +inf for exact reconstruction."""
    x, xh = _pair(x, xh)
    num = np.dot(x, x)
    if num == 0:
        raise ZeroSignal("reference has zero energy")
    d = x - xh
    den = np.dot(d, d)
    if den == 0:
        return math.inf
    return 10.0 * math.log10(num / den)


def snr_gain_db(clean, noisy, denoised) -> float:
    return snr_db(clean, denoised) - snr_db(clean, noisy)


def cosine(x, xh) -> float:
    x, xh = _pair(x, xh)
    nx, ny = math.sqrt(np.dot(x, x)), math.sqrt(np.dot(xh, xh))
    if nx == 0 or ny == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.dot(x, xh) / (nx * ny))


@dataclass
class MetricReport:
    rmse: float
    nrmse: float
    mae: float
    pearson_r: float
    ssim: float
    cosine: float
    snr_clean_vs_denoised_db: float
    snr_gain_db: float
    flags: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        d = asdict(self)
        d["flags"] = ";".join(f"{k}={v}" for k, v in sorted(self.flags.items()))
        return d


def _guarded(fn, flags, name, *args):
    try:
        v = fn(*args)
    except (ZeroRange, ConstantInput, ZeroSignal, ZeroVector) as exc:
        flags[name] = type(exc).__name__
        return math.nan
    if math.isinf(v):
        flags[name] = "Infinite"
    return v


def evaluate(clean, denoised, noisy=None) -> MetricReport:
    """All metrics for one (clean, denoised[, noisy]) triple.

    Degenerate cases never raise here; they produce NaN (or +/-inf for SNR)
    and an entry in ``flags``.
    """
    flags: dict = {}
    gain = math.nan
    snr_out = _guarded(snr_db, flags, "snr_clean_vs_denoised_db", clean, denoised)
    if noisy is not None:
        snr_in = _guarded(snr_db, flags, "snr_noisy", clean, noisy)
        if not (math.isnan(snr_out) or math.isnan(snr_in)):
            gain = snr_out - snr_in if not (math.isinf(snr_out) and math.isinf(snr_in)) else 0.0
            if math.isinf(gain):
                flags["snr_gain_db"] = "Infinite"
    else:
        flags["snr_gain_db"] = "NoNoisy"
    return MetricReport(
        rmse=rmse(clean, denoised),
        nrmse=_guarded(nrmse, flags, "nrmse", clean, denoised),
        mae=mae(clean, denoised),
        pearson_r=_guarded(pearson, flags, "pearson_r", clean, denoised),
        ssim=ssim(clean, denoised),
        cosine=_guarded(cosine, flags, "cosine", clean, denoised),
        snr_clean_vs_denoised_db=snr_out,
        snr_gain_db=gain,
        flags=flags,
    )


def evaluate_per_channel(clean, denoised, noisy=None) -> list[MetricReport]:
    clean = np.asarray(clean)
    return [evaluate(clean[c], np.asarray(denoised)[c], None if noisy is None else np.asarray(noisy)[c])
            for c in range(clean.shape[0])]


@dataclass
class MetricSummary:
    mean: float
    sd: float
    n: int
    excluded: int
    capped: int = 0

    @property
    def available(self) -> bool:
        return self.n > 0

    @property
    def single(self) -> bool:
        return self.n == 1


def aggregate(reports) -> dict[str, MetricSummary]:
    """Mean and sample SD (n-1) per metric.

    NaN entries are excluded and counted; infinite SNRs are capped at
    +/-120 dB and counted.
    """
    reports = list(reports)
    if not reports:
        raise Empty("no reports to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        keep = ~np.isnan(vals)
        vals = vals[keep]
        capped = int(np.isinf(vals).sum())
        vals = np.clip(vals, -SNR_CAP_DB, SNR_CAP_DB)
        n = len(vals)
        if n == 0:
            out[name] = MetricSummary(math.nan, math.nan, 0, int((~keep).sum()), capped)
            continue
        sd = float(np.std(vals, ddof=1)) if n > 1 else 0.0
        out[name] = MetricSummary(float(np.mean(vals)), sd, n, int((~keep).sum()), capped)
    return out


# --------------------------------------------------------------------------
# spectra


@dataclass
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    nperseg: int
    overlap: float

    def band_power(self, f_lo: float, f_hi: float) -> float:
        df = self.frequencies[1] - self.frequencies[0]
        sel = (self.frequencies >= f_lo) & (self.frequencies <= f_hi)
        return float(self.power[..., sel].sum(axis=-1).sum() * df)

    def total_power(self) -> float:
        df = self.frequencies[1] - self.frequencies[0]
        return float(self.power.sum() * df)


def welch_psd(x, fs: float, nperseg: int = 256, overlap: float = 0.5,
              window: str = "hamming") -> PsdEstimate:
    """One-sided Welch density estimate along the last axis.

    No detrending: a constant input puts all its power in the DC bin.
    The density integrates (sum times bin width) to the mean square.
    """
    from scipy.signal import get_window

    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < nperseg:
        raise TooShort(f"{n} samples < nperseg={nperseg}")
    step = max(1, int(round(nperseg * (1 - overlap))))
    starts = np.arange(0, n - nperseg + 1, step)
    w = get_window(window, nperseg)
    frames = np.stack([x[..., s:s + nperseg] for s in starts], axis=-2) * w
    spec = np.abs(np.fft.rfft(frames, axis=-1)) ** 2 / (fs * np.sum(w * w))
    spec = spec.mean(axis=-2)
    if nperseg % 2 == 0:
        spec[..., 1:-1] *= 2
    else:
        spec[..., 1:] *= 2
    freqs = np.fft.rfftfreq(nperseg, 1 / fs)
    return PsdEstimate(freqs, spec, nperseg, overlap)
