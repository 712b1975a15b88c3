"""Classical artifact removal: AAS, OBS, PCA and FastICA-based rejection.

All methods take and return continuous :class:`Recording` values of the
same shape; the marker-driven ones (AAS, OBS) leave samples outside
complete epochs untouched.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidK, RankDeficient, TooFewMarkers
from .ingest import MarkerKind, Recording
from .metrics import welch_psd

logger = logging.getLogger(__name__)

AAS_WINDOW = 25
OBS_N_BASIS = 4
PCA_K = 3


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class EpochMatrix:
    epochs: np.ndarray       # (n_epochs, epoch_len)
    starts: np.ndarray       # first sample of each epoch
    epoch_len: int


def extract_epochs(x: np.ndarray, starts, epoch_len: int) -> EpochMatrix:
    """Epochs of one channel; epochs that do not fit in the signal are dropped."""
    starts = np.asarray(starts, dtype=np.int64)
    starts = starts[(starts >= 0) & (starts + epoch_len <= len(x))]
    if len(starts):
        idx = starts[:, None] + np.arange(epoch_len)[None, :]
        epochs = x[idx]
    else:
        epochs = np.zeros((0, epoch_len))
    return EpochMatrix(epochs, starts, epoch_len)


def aas(rec: Recording, window: int = AAS_WINDOW, epoch_len: int | None = None,
        kind: MarkerKind = MarkerKind.VOLUME_TRIGGER) -> Recording:
    """Average artifact subtraction.

    The template for epoch ``i`` is the mean of epochs ``max(0, i-window+1)
    .. i``; epoch length defaults to the median inter-marker gap.
    """
    markers = rec.markers_of(kind)
    if len(markers) < max(window, 2):
        raise TooFewMarkers(f"AAS needs at least {max(window, 2)} {kind.value} markers, got {len(markers)}")
    if epoch_len is None:
        epoch_len = int(np.median(np.diff(markers)))
    out = rec.data.copy()
    for ch in range(rec.n_channels):
        em = extract_epochs(rec.data[ch], markers, epoch_len)
        if len(em.starts) == 0:
            continue
        csum = np.cumsum(np.vstack([np.zeros(epoch_len), em.epochs]), axis=0)
        i = np.arange(len(em.starts))
        lo = np.maximum(0, i - window + 1)
        templates = (csum[i + 1] - csum[lo]) / (i + 1 - lo)[:, None]
        for s, e, tpl in zip(em.starts, em.epochs, templates):
            out[ch, s:s + epoch_len] = e - tpl
    return rec.replace(data=out)


def obs_basis(epochs: np.ndarray, n_basis: int, rtol: float = 1e-10) -> np.ndarray:
    """(epoch_len, <=n_basis) basis: epoch mean plus leading PCs of demeaned epochs."""
    mean = epochs.mean(axis=0)
    cols = [mean]
    if n_basis > 1:
        _, s, vt = np.linalg.svd(epochs - mean, full_matrices=False)
        keep = s > rtol * max(s.max() if s.size else 0.0, np.abs(epochs).max(), 1e-300)
        cols += list(vt[keep][: n_basis - 1])
    return np.stack(cols, axis=1)


def obs(rec: Recording, n_basis: int = OBS_N_BASIS, epoch_len: int | None = None,
        kind: MarkerKind = MarkerKind.CARDIAC_PEAK) -> Recording:
    """Optimal basis set: per-epoch least-squares removal of a PCA basis.

    Epochs are centred on each marker, length defaults to the median
    inter-marker interval.
    """
    markers = rec.markers_of(kind)
    if epoch_len is None:
        if len(markers) < 2:
            raise TooFewMarkers(f"OBS needs {kind.value} markers, got {len(markers)}")
        epoch_len = int(np.median(np.diff(markers)))
    starts = markers - epoch_len // 2
    n_fit = int(np.sum((starts >= 0) & (starts + epoch_len <= rec.n_samples)))
    if n_basis > n_fit:
        raise RankDeficient(f"{n_basis} basis functions but only {n_fit} complete epochs")
    if len(markers) < max(n_basis + 1, 10):
        raise TooFewMarkers(f"OBS needs at least {max(n_basis + 1, 10)} markers, got {len(markers)}")
    out = rec.data.copy()
    for ch in range(rec.n_channels):
        em = extract_epochs(rec.data[ch], starts, epoch_len)
        basis = obs_basis(em.epochs, n_basis)
        coef, *_ = np.linalg.lstsq(basis, em.epochs.T, rcond=None)
        resid = em.epochs - (basis @ coef).T
        for s, r in zip(em.starts, resid):
            out[ch, s:s + epoch_len] = r
    return rec.replace(data=out)


def pca_denoise(rec: Recording, k: int = PCA_K) -> Recording:
    """Project out the ``k`` largest-variance spatial components."""
    c = rec.n_channels
    if not 1 <= k < c:
        raise InvalidK(f"k must satisfy 1 <= k < {c}, got {k}")
    mean = rec.data.mean(axis=1, keepdims=True)
    xc = rec.data - mean
    cov = xc @ xc.T / max(rec.n_samples, 1)
    evals, evecs = np.linalg.eigh(cov)
    keep = evecs[:, : c - k]  # eigh sorts ascending
    return rec.replace(data=keep @ (keep.T @ xc) + mean)


@dataclass
class UnmixingModel:
    mean: np.ndarray            # (C, 1)
    whitening: np.ndarray       # (n, C)
    unmixing: np.ndarray        # (n, n), acts on whitened data
    mixing: np.ndarray          # (C, n), pseudo-inverse of unmixing @ whitening
    converged: bool
    n_iter: int
    mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    def sources(self, data: np.ndarray) -> np.ndarray:
        return self.unmixing @ (self.whitening @ (data - self.mean))


def _sym_decorrelate(w):
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, np.finfo(w.dtype).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def whiten(x: np.ndarray, n_components: int):
    """Centre and whiten via the covariance eigendecomposition."""
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    cov = xc @ xc.T / xc.shape[1]
    d, e = np.linalg.eigh(cov)
    order = np.argsort(d)[::-1][:n_components]
    d, e = d[order], e[:, order]
    if np.any(d <= 0):
        raise RankDeficient("covariance is singular in the requested subspace")
    k = (e / np.sqrt(d)).T
    return mean, k, k @ xc


def fastica(rec_or_data, n_components: int | None = None, max_iter: int = 500,
            tol: float = 1e-6, seed: int = 0) -> UnmixingModel:
    """Symmetric FastICA with the tanh (log-cosh) contrast.

    Non-convergence is not an error: the last iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    x = rec_or_data.data if isinstance(rec_or_data, Recording) else np.asarray(rec_or_data, dtype=np.float64)
    c, n = x.shape
    n_components = c if n_components is None else n_components
    if not 1 <= n_components <= c:
        raise InvalidK(f"n_components must be in [1, {c}], got {n_components}")
    mean, k, z = whiten(x, n_components)
    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((n_components, n_components)))
    converged, it = False, 0
    for it in range(1, max_iter + 1):
        g = np.tanh(w @ z)
        w_new = (g @ z.T) / n - np.mean(1 - g * g, axis=1)[:, None] * w
        w_new = _sym_decorrelate(w_new)
        lim = np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1))
        w = w_new
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    mixing = np.linalg.pinv(w @ k)
    return UnmixingModel(mean, k, w, mixing, converged, it, np.zeros(n_components, dtype=bool))


@dataclass(frozen=True)
class SelectionRule:
    """Flag a component when its excess kurtosis or its slice-band power is high."""

    slice_frequency: float | None = 15.0
    n_harmonics: int = 3
    halfwidth_hz: float = 0.5
    power_fraction: float = 0.3
    kurtosis_threshold: float = 5.0
    psd_seconds: float = 4.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def excess_kurtosis(s: np.ndarray) -> np.ndarray:
    sc = s - s.mean(axis=-1, keepdims=True)
    m2 = np.mean(sc ** 2, axis=-1)
    m4 = np.mean(sc ** 4, axis=-1)
    return m4 / np.where(m2 > 0, m2 ** 2, np.inf) - 3.0


def slice_band_fraction(s: np.ndarray, fs: float, rule: SelectionRule) -> np.ndarray:
    if rule.slice_frequency is None:
        return np.zeros(s.shape[0])
    nper = min(s.shape[-1], int(round(rule.psd_seconds * fs)))
    psd = welch_psd(s, fs, nperseg=nper)
    f, p = psd.frequencies, psd.power
    sel = np.zeros_like(f, dtype=bool)
    for h in range(1, rule.n_harmonics + 1):
        sel |= np.abs(f - h * rule.slice_frequency) <= rule.halfwidth_hz
    total = p.sum(axis=-1)
    return np.where(total > 0, p[..., sel].sum(axis=-1) / np.where(total > 0, total, 1), 0.0)


def select_components(model: UnmixingModel, rec: Recording, rule: SelectionRule) -> np.ndarray:
    s = model.sources(rec.data)
    kurt = excess_kurtosis(s)
    frac = slice_band_fraction(s, rec.sampling_rate, rule)
    return (kurt > rule.kurtosis_threshold) | (frac > rule.power_fraction)


def ica_denoise(rec: Recording, model: UnmixingModel, selection: SelectionRule | np.ndarray | None = None) -> Recording:
    """Zero the flagged components and back-project through the mixing matrix."""
    if selection is None:
        mask = np.zeros(model.n_components, dtype=bool)
    elif isinstance(selection, SelectionRule):
        mask = select_components(model, rec, selection)
    else:
        mask = np.asarray(selection, dtype=bool)
    model.mask = mask
    s = model.sources(rec.data)
    s[mask] = 0.0
    return rec.replace(data=model.mixing @ s + model.mean)


# --------------------------------------------------------------------------


METHODS = ("aas", "obs", "pca", "ica")


def run_baseline(method: str, rec: Recording, params: dict | None = None, seed: int = 0):
    """Apply one baseline; returns (corrected recording, provenance dict)."""
    params = dict(params or {})
    prov = {"method": method, "params": params}
    if method == "aas":
        out = aas(rec, window=params.get("window", AAS_WINDOW), epoch_len=params.get("epoch_len"))
    elif method == "obs":
        out = obs(rec, n_basis=params.get("n_basis", OBS_N_BASIS), epoch_len=params.get("epoch_len"))
    elif method == "pca":
        out = pca_denoise(rec, k=params.get("k", PCA_K))
    elif method == "ica":
        rule = SelectionRule(**params.get("rule", {}))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            model = fastica(rec, params.get("n_components"), params.get("max_iter", 500),
                            params.get("tol", 1e-6), seed)
        out = ica_denoise(rec, model, rule)
        prov.update(seed=seed, converged=model.converged, n_iter=model.n_iter,
                    mask=[bool(m) for m in model.mask], rule=rule.to_dict(),
                    warnings=[str(w.message) for w in caught])
    else:
        raise ValueError(f"unknown baseline method {method!r}; choose from {METHODS}")
    return out, prov
