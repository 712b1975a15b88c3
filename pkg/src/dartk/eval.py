"""Experiment orchestration: pooled split, LOSO, ablation, saliency, reports."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import baselines as bl
from . import dar, reference
from .errors import EmptyValidation, IoFailure, ShapeMismatch, TooFewSubjects
from .ingest import Recording
from .metrics import METRIC_NAMES, aggregate, evaluate, pearson, rmse, ssim
from .preprocess import (
    STRIDE,
    TARGET_RATE,
    WINDOW,
    FilterSpec,
    Segment,
    SegmentPair,
    preprocess_pair,
    segment_recording,
)
from .stats import bootstrap_ci, paired_ttest, shapiro_wilk

logger = logging.getLogger(__name__)

DAR = "DAR"
BASELINE_METHODS = {"PCA": "pca", "AAS": "aas", "OBS": "obs", "ICA": "ica"}
DEFAULT_METHODS = (DAR, "PCA", "AAS", "OBS", "ICA")
TEST_METRICS = ("rmse", "pearson_r")
LOSO_METRICS = ("rmse", "pearson_r", "ssim")
ABLATION_EPOCHS = 50

Key = tuple  # (subject_id, source_offset)


@dataclass
class SubjectData:
    """One subject: filtered continuous recordings plus their segment pairs."""

    subject_id: str
    noisy: Recording
    clean: Recording
    pairs: list


def prepare_subjects(raw, spec: FilterSpec = FilterSpec(), target_hz: float = TARGET_RATE,
                     win: int = WINDOW, stride: int = STRIDE) -> list[SubjectData]:
    """``raw`` is an iterable of (subject_id, noisy, clean) recordings."""
    out = []
    for sid, noisy, clean in raw:
        pairs, fn, fc = preprocess_pair(noisy, clean, sid, spec, target_hz, win, stride)
        out.append(SubjectData(sid, fn, fc, pairs))
    return out


def prepare_manifest(man, spec: FilterSpec = FilterSpec(), target_hz: float = TARGET_RATE,
                     win: int = WINDOW, stride: int = STRIDE) -> list[SubjectData]:
    """Load, channel-select and preprocess every noisy/clean pair of a dataset manifest.

    With more than one condition, units are named ``subject@condition``.
    """
    from .ingest import load_recording, select_analysis_channels
    pairs = man.pairs()
    multi = len({c for _, c, _, _ in pairs}) > 1
    out = []
    for sid, cond, npath, cpath in pairs:
        noisy, clean = load_recording(npath), load_recording(cpath)
        if man.channels:
            noisy = select_analysis_channels(noisy, man.channels)
            clean = select_analysis_channels(clean, man.channels)
        unit = f"{sid}@{cond}" if multi else sid
        segs, fn, fc = preprocess_pair(noisy, clean, unit, spec, target_hz, win, stride)
        out.append(SubjectData(unit, fn, fc, segs))
        logger.info("%s: %d segment pairs", unit, len(segs))
    return out


def all_pairs(subjects: Sequence[SubjectData]) -> list[SegmentPair]:
    return [p for s in subjects for p in s.pairs]


def subject_of(unit_id: str) -> str:
    """Recording units of one subject are named ``subject@condition``."""
    return str(unit_id).split("@", 1)[0]


def save_prepared(subjects: Sequence[SubjectData], out_dir) -> Path:
    """Segment store under ``segments/`` plus filtered recordings under ``filtered/``."""
    from .ingest import write_interchange
    from .preprocess import save_segments
    out = Path(out_dir)
    save_segments(all_pairs(subjects), out / "segments")
    units = []
    for s in subjects:
        write_interchange(s.noisy, out / "filtered" / f"{s.subject_id}_noisy")
        write_interchange(s.clean, out / "filtered" / f"{s.subject_id}_clean")
        units.append(s.subject_id)
    path = out / "prepared.json"
    path.write_text(json.dumps({"format": "dartk-prepared", "units": units}, indent=1), encoding="utf-8")
    return path


def load_prepared(path) -> list[SubjectData]:
    from .ingest import read_interchange
    from .preprocess import group_by_subject, load_segments
    root = Path(path)
    try:
        meta = json.loads((root / "prepared.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"not a preprocess output directory: {root} ({exc})") from exc
    groups = group_by_subject(load_segments(root / "segments"))
    return [SubjectData(u, read_interchange(root / "filtered" / f"{u}_noisy"),
                        read_interchange(root / "filtered" / f"{u}_clean"), groups.get(u, []))
            for u in meta["units"]]


def stitch(segments: Sequence[Segment], n_channels: int, n_samples: int) -> np.ndarray:
    """Undo normalization and average overlapping windows back into one array."""
    acc = np.zeros((n_channels, n_samples))
    hits = np.zeros(n_samples)
    for s in segments:
        t = s.data.shape[1]
        acc[:, s.source_offset:s.source_offset + t] += s.data * s.norm_scale
        hits[s.source_offset:s.source_offset + t] += 1
    return acc / np.maximum(hits, 1)


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    kind: str                       # "pooled" | "loso"
    train: tuple
    test: tuple
    train_frac: float | None = None
    seed: int | None = None
    held_out: str | None = None

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise ValueError("train and test sets overlap")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "train_frac": self.train_frac, "seed": self.seed,
                "held_out": self.held_out, "train": [list(k) for k in self.train],
                "test": [list(k) for k in self.test]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(d["kind"], tuple(tuple(k) for k in d["train"]), tuple(tuple(k) for k in d["test"]),
                   d.get("train_frac"), d.get("seed"), d.get("held_out"))


def _sorted_keys(pairs) -> list:
    return sorted((p.key for p in pairs), key=lambda k: (str(k[0]), k[1]))


def pooled_split(pairs, train_frac: float = 0.8, seed: int = 42) -> SplitPlan:
    """Segment-level seeded shuffle; the first ``floor(train_frac * n)`` train."""
    keys = _sorted_keys(pairs)
    if not 0 < train_frac <= 1:
        raise ValueError("train_frac must lie in (0, 1]")
    perm = np.random.default_rng(seed).permutation(len(keys))
    n_train = int(math.floor(train_frac * len(keys)))
    if n_train >= len(keys):
        raise EmptyValidation(f"train_frac={train_frac} leaves no validation segments")
    if n_train == 0:
        raise EmptyValidation("no training segments")
    train = tuple(keys[i] for i in sorted(perm[:n_train]))
    test = tuple(keys[i] for i in sorted(perm[n_train:]))
    return SplitPlan("pooled", train, test, train_frac, seed)


def loso_splits(pairs) -> list[SplitPlan]:
    keys = _sorted_keys(pairs)
    subjects = sorted({subject_of(k[0]) for k in keys})
    if len(subjects) < 3:
        raise TooFewSubjects(f"LOSO needs at least 3 subjects, got {len(subjects)}")
    return [SplitPlan("loso", tuple(k for k in keys if subject_of(k[0]) != s),
                      tuple(k for k in keys if subject_of(k[0]) == s), held_out=s) for s in subjects]


def take(pairs, keys) -> list[SegmentPair]:
    index = {p.key: p for p in pairs}
    return [index[tuple(k)] for k in keys]


# --------------------------------------------------------------------------
# per-method outputs on a set of segments


def baseline_segments(subjects: Sequence[SubjectData], method: str, keys, params: dict | None = None,
                      seed: int = 0, win: int = WINDOW, stride: int = STRIDE):
    """Run a baseline on each needed subject's continuous recording, then segment.

    Returns ({key: Segment}, {subject: provenance}).
    """
    needed = {k[0] for k in keys}
    out, prov = {}, {}
    for s in subjects:
        if s.subject_id not in needed:
            continue
        rec, prov[s.subject_id] = bl.run_baseline(method, s.noisy, params, seed)
        for seg in segment_recording(rec, s.subject_id, win, stride):
            out[seg.subject_id, seg.source_offset] = seg
    return out, prov


def score(pairs: Sequence[SegmentPair], outputs: Sequence[Segment]) -> list[dict]:
    rows = []
    for p, o in zip(pairs, outputs):
        rep = evaluate(p.clean.data, o.data, p.noisy.data)
        rows.append({"subject": p.subject_id, "offset": p.source_offset, **rep.as_row()})
    return rows


def _summaries(rows: list[dict]) -> dict:
    if not rows:
        return {}

    class _R:  # attribute view for aggregate()
        def __init__(self, d):
            self.__dict__.update(d)

    return {k: dataclasses.asdict(v) for k, v in aggregate(_R(r) for r in rows).items()}


def _column(rows, name):
    return np.array([r[name] for r in rows], dtype=np.float64)


def paired_tests(per_segment: dict, reference_method: str = DAR, metrics=TEST_METRICS) -> list[dict]:
    """Reference method against every other method on the same segments."""
    out = []
    if reference_method not in per_segment:
        return out
    for metric in metrics:
        a = _column(per_segment[reference_method], metric)
        for method, rows in per_segment.items():
            if method == reference_method:
                continue
            b = _column(rows, metric)
            ok = ~(np.isnan(a) | np.isnan(b))
            row = {"metric": metric, "reference": reference_method, "method": method, "n": int(ok.sum())}
            try:
                row.update(paired_ttest(a[ok], b[ok]).to_dict())
            except Exception as exc:  # degenerate comparison, recorded not raised
                row.update(error=type(exc).__name__)
            out.append(row)
    return out


# --------------------------------------------------------------------------
# runs


@dataclass
class EvalRun:
    kind: str
    config: dict
    seed: int
    threads: int | None
    backend: str
    split: dict | list | None = None
    per_segment: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    examples: dict = field(default_factory=dict)
    loso: dict = field(default_factory=dict)
    ablation: list = field(default_factory=list)
    saliency: dict = field(default_factory=dict)
    started: float = 0.0
    finished: float = 0.0
    params: object = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "params"}
        return json.loads(json.dumps(d, default=_json_default))

    def save(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(self.to_dict(), indent=1, allow_nan=True), encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write run manifest {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> "EvalRun":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read run manifest {path}: {exc}") from exc
        return cls(**d)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not serializable: {type(o)}")


def _thread_count(threads):
    if threads is not None:
        return int(threads)
    try:
        from threadpoolctl import threadpool_info
        return max((i.get("num_threads", 1) for i in threadpool_info()), default=1)
    except Exception:
        return None


def _examples(pairs, outputs_by_method, n_points: int = 4000) -> dict:
    if not pairs:
        return {}
    p = pairs[0]
    ex = {"subject": p.subject_id, "offset": p.source_offset,
          "clean": p.clean.data.tolist(), "noisy": p.noisy.data.tolist(),
          "denoised": {m: outs[0].data.tolist() for m, outs in outputs_by_method.items()}}
    if DAR in outputs_by_method:
        # every sample of one representative segment
        ex["scatter"] = {"clean": p.clean.data.ravel()[:n_points].tolist(),
                         "predicted": outputs_by_method[DAR][0].data.ravel()[:n_points].tolist()}
    return ex


def run_pooled(subjects: Sequence[SubjectData], methods: Sequence[str] = DEFAULT_METHODS,
               tcfg: dar.TrainConfig = dar.TrainConfig(), dcfg: dar.DarConfig = dar.DarConfig(),
               baseline_params: dict | None = None, train_frac: float = 0.8, split_seed: int = 42,
               threads: int | None = None, config: dict | None = None) -> EvalRun:
    """Train DAR on the pooled 80% and score every method on the held-out 20%."""
    if len({s.subject_id for s in subjects}) < 2:
        raise TooFewSubjects("pooled evaluation needs at least 2 subjects")
    unknown = [m for m in methods if m != DAR and m not in BASELINE_METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}")
    baseline_params = baseline_params or {}
    pairs = all_pairs(subjects)
    plan = pooled_split(pairs, train_frac, split_seed)
    train_pairs, val_pairs = take(pairs, plan.train), take(pairs, plan.test)
    run = EvalRun("pooled", config or {}, tcfg.seed, _thread_count(threads), ad.backend_name(),
                  split=plan.to_dict(), started=time.time())
    outputs = {}
    for method in methods:
        if method == DAR:
            params, report = dar.train(train_pairs, val_pairs, tcfg, dcfg)
            run.params = params
            run.train = report.to_dict()
            outputs[DAR] = dar.denoise_many(params, dcfg, [p.noisy for p in val_pairs])
        else:
            segs, prov = baseline_segments(subjects, BASELINE_METHODS[method], plan.test,
                                           baseline_params.get(method), tcfg.seed)
            outputs[method] = [segs[p.key] for p in val_pairs]
            run.provenance[method] = prov
    for method, outs in outputs.items():
        run.per_segment[method] = score(val_pairs, outs)
        run.aggregates[method] = _summaries(run.per_segment[method])
    run.statistics["paired_tests"] = paired_tests(run.per_segment)
    run.examples = _examples(val_pairs, outputs)
    run.finished = time.time()
    return run


def _split_for_early_stopping(train_pairs, seed: int, frac: float = 0.8):
    # LOSO early stopping uses a slice of the training subjects, never the held-out one
    plan = pooled_split(train_pairs, frac, seed)
    return take(train_pairs, plan.train), take(train_pairs, plan.test)


def loso_summary(per_subject: dict, n_resamples: int = 1000, seed: int = 42) -> dict:
    """Mean, SD, Shapiro-Wilk and bootstrap CI for each metric across subjects."""
    out = {}
    for metric in LOSO_METRICS:
        vals = np.array([per_subject[s][metric] for s in sorted(per_subject)], dtype=np.float64)
        entry = {"mean": float(vals.mean()), "sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                 "n": int(len(vals))}
        try:
            entry["shapiro"] = shapiro_wilk(vals).to_dict()
        except Exception as exc:
            entry["shapiro"] = {"error": type(exc).__name__}
        entry["bootstrap_ci"] = bootstrap_ci(vals, n_resamples=n_resamples, seed=seed).to_dict()
        out[metric] = entry
    return out


def run_loso(subjects: Sequence[SubjectData], tcfg: dar.TrainConfig = dar.TrainConfig(),
             dcfg: dar.DarConfig = dar.DarConfig(), threads: int | None = None,
             config: dict | None = None) -> EvalRun:
    """One fold per subject: train on the rest, test on every segment of the held-out one."""
    pairs = all_pairs(subjects)
    plans = loso_splits(pairs)
    run = EvalRun("loso", config or {}, tcfg.seed, _thread_count(threads), ad.backend_name(),
                  split=[p.to_dict() for p in plans], started=time.time())
    folds, per_subject, tests = [], {}, []
    for plan in plans:
        logger.info("LOSO fold: held out %s", plan.held_out)
        train_all = take(pairs, plan.train)
        test = take(pairs, plan.test)
        fit, stop = _split_for_early_stopping(train_all, tcfg.seed)
        params, report = dar.train(fit, stop, tcfg, dcfg)
        outs = dar.denoise_many(params, dcfg, [p.noisy for p in test])
        rows = score(test, outs)
        run.per_segment[plan.held_out] = rows
        per_subject[plan.held_out] = {m: float(np.nanmean(_column(rows, m))) for m in LOSO_METRICS}
        folds.append({"held_out": plan.held_out, "n_test": len(test), "n_train": len(fit),
                      "n_early_stop": len(stop), "train": report.to_dict(), **per_subject[plan.held_out]})
        tests.append(set(plan.test))
    run.loso = {"folds": folds, "per_subject": per_subject, "summary": loso_summary(per_subject, seed=tcfg.seed)}
    run.aggregates = {s: v for s, v in per_subject.items()}
    run.finished = time.time()
    return run


def run_ablation(subjects: Sequence[SubjectData], variants: Sequence = tuple(dar.Variant),
                 tcfg: dar.TrainConfig | None = None, train_frac: float = 0.8, split_seed: int = 42,
                 threads: int | None = None, config: dict | None = None) -> EvalRun:
    """Train each variant for a fixed budget on one shared split."""
    tcfg = tcfg or dar.TrainConfig(max_epochs=ABLATION_EPOCHS, early_stopping=False)
    pairs = all_pairs(subjects)
    plan = pooled_split(pairs, train_frac, split_seed)
    train_pairs, val_pairs = take(pairs, plan.train), take(pairs, plan.test)
    run = EvalRun("ablation", config or {}, tcfg.seed, _thread_count(threads), ad.backend_name(),
                  split=plan.to_dict(), started=time.time())
    for v in variants:
        v = dar.Variant(v)
        dcfg = dar.DarConfig.for_variant(v)
        params, report = dar.train(train_pairs, val_pairs, tcfg, dcfg)
        outs = dar.denoise_many(params, dcfg, [p.noisy for p in val_pairs])
        rows = score(val_pairs, outs)
        agg = _summaries(rows)
        run.per_segment[v.value] = rows
        run.aggregates[v.value] = agg
        run.ablation.append({"variant": v.value, "parameters": dar.parameter_count(dcfg),
                             "epochs": report.stopped_epoch,
                             **{m: agg[m]["mean"] for m in ("rmse", "nrmse", "pearson_r", "ssim")}})
    run.finished = time.time()
    return run


# --------------------------------------------------------------------------
# saliency


@dataclass
class SaliencyMap:
    values: np.ndarray          # (C, T), >= 0
    channel_means: np.ndarray   # (C,)
    subject_id: str = ""
    source_offset: int = 0

    def to_dict(self) -> dict:
        return {"subject": self.subject_id, "offset": self.source_offset,
                "channel_means": self.channel_means.tolist(), "values": self.values.tolist()}


def saliency(params: dar.ModelParameters, dcfg: dar.DarConfig, seg: Segment, use_loss: bool = False,
             target: Segment | None = None, dtype=np.float32) -> SaliencyMap:
    """|d(sum of outputs)/d input| per channel and sample, in eval mode.

    With ``use_loss`` the scalar is the L1 loss against ``target`` instead.
    """
    data = np.asarray(seg.data)
    if data.ndim != 2:
        raise ShapeMismatch(f"segment must be (channels, T), got {data.shape}")
    if params.convs[0].weight.shape[1] != 1:
        raise ShapeMismatch("model does not take single-channel rows")
    if np.dtype(dtype) != np.float32:
        params = params.astype(dtype)
    x = ad.Tensor(data.astype(dtype)[:, None, :], requires_grad=True)
    with ad.Tape() as tape:
        y = dar.forward(params, dcfg, x, training=False)
        if use_loss:
            if target is None:
                raise ValueError("use_loss needs a target segment")
            scalar = ad.l1_loss(y, ad.Tensor(np.asarray(target.data, dtype=dtype)[:, None, :]))
        else:
            scalar = ad.sum(y)
        tape.backward(scalar)
    g = np.abs(x.grad[:, 0, :]).astype(np.float64)
    return SaliencyMap(g, g.mean(axis=1), seg.subject_id, seg.source_offset)


def mean_saliency(params, dcfg, segments: Sequence[Segment]) -> np.ndarray:
    """Per-channel saliency averaged over segments."""
    return np.mean([saliency(params, dcfg, s).channel_means for s in segments], axis=0)


# --------------------------------------------------------------------------
# reports

TABLE_METRICS = ("rmse", "nrmse", "pearson_r", "ssim", "snr_gain_db")


def _write_csv(path: Path, header, rows) -> Path:
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares line y = a x + b."""
    a, b = np.polyfit(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), 1)
    return float(a), float(b)


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "dartk"  # stable element ids
    return plt


def _save(fig, plt, path: Path, metadata: dict | None = None) -> Path:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None, **(metadata or {})})
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_overlay(example: dict, path: Path, channels=(0, 5, 10)) -> Path:
    plt = _figure()
    clean = np.asarray(example["clean"])
    chans = [c for c in channels if c < clean.shape[0]] or [0]
    fig, axes = plt.subplots(len(chans), 1, figsize=(10, 2.4 * len(chans)), squeeze=False)
    for ax, c in zip(axes[:, 0], chans):
        ax.plot(np.asarray(example["noisy"])[c], "--", lw=0.8, label="corrupted")
        ax.plot(clean[c], lw=1.0, label="clean")
        for m, d in example.get("denoised", {}).items():
            ax.plot(np.asarray(d)[c], lw=1.0, label=m)
        ax.set_ylabel(f"ch {c}")
    axes[0, 0].legend(loc="upper right", fontsize="small", ncol=3)
    axes[-1, 0].set_xlabel("sample")
    return _save(fig, plt, path)


def plot_scatter(clean, predicted, path: Path) -> Path:
    plt = _figure()
    a, b = fit_slope(clean, predicted)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(clean, predicted, s=2, alpha=0.4)
    lim = float(np.max(np.abs(np.concatenate([np.ravel(clean), np.ravel(predicted)])))) or 1.0
    ax.plot([-lim, lim], [-lim, lim], "r--", lw=1)
    ax.set_xlabel("clean amplitude")
    ax.set_ylabel("predicted amplitude")
    ax.set_title(f"fit slope {a:.4f}")
    return _save(fig, plt, path, {"Description": json.dumps({"slope": a, "intercept": b})})


def plot_saliency_bars(channel_means, path: Path, labels=None) -> Path:
    plt = _figure()
    m = np.asarray(channel_means)
    fig, ax = plt.subplots(figsize=(max(4, 0.3 * len(m)), 3))
    ax.bar(np.arange(len(m)), m)
    ax.set_xticks(np.arange(len(m)))
    ax.set_xticklabels(labels if labels is not None else np.arange(len(m)), rotation=90, fontsize="small")
    ax.set_ylabel("mean |gradient|")
    return _save(fig, plt, path)


def plot_loso_box(per_subject: dict, path: Path) -> Path:
    plt = _figure()
    fig, axes = plt.subplots(1, len(LOSO_METRICS), figsize=(3 * len(LOSO_METRICS), 3.2))
    for ax, metric in zip(np.atleast_1d(axes), LOSO_METRICS):
        vals = [per_subject[s][metric] for s in sorted(per_subject)]
        ax.boxplot(vals)
        ax.set_title(metric)
    return _save(fig, plt, path)


def emit_reports(run: EvalRun, out_dir, figures: bool = True) -> list[Path]:
    """Write CSV tables and SVG figures for whatever sections ``run`` holds.

    A ``reports.json`` listing every written file is written last and is
    itself the final entry of the returned list.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc
    files: list[Path] = []
    if run.kind == "pooled":
        header = ["method"] + [f"{m}_{s}" for m in TABLE_METRICS for s in ("mean", "sd")] + ["n"]
        rows = []
        for method, agg in run.aggregates.items():
            row = [method]
            for m in TABLE_METRICS:
                row += [_fmt(agg[m]["mean"]), _fmt(agg[m]["sd"])]
            rows.append(row + [agg["rmse"]["n"]])
        files.append(_write_csv(out / "method_comparison.csv", header, rows))
        dar_rows = [[m, _fmt(v["mean"]), _fmt(v["sd"]), v["n"], v["excluded"]]
                    for m, v in run.aggregates.get(DAR, {}).items()]
        files.append(_write_csv(out / "dar_metrics.csv", ["metric", "mean", "sd", "n", "excluded"], dar_rows))
        deep = [[name, *vals, "published"] for name, vals in reference.DEEP_MODELS.items()]
        if DAR in run.aggregates:
            a = run.aggregates[DAR]
            deep.append([f"{DAR} (this run)", _fmt(a["mae"]["mean"]), _fmt(a["cosine"]["mean"]),
                         _fmt(a["snr_gain_db"]["mean"]), "measured"])
        files.append(_write_csv(out / "deep_model_reference.csv",
                                ["model", "mae", "cosine", "snr_gain_db", "source"], deep))
        tests = run.statistics.get("paired_tests", [])
        files.append(_write_csv(out / "paired_tests.csv",
                                ["metric", "reference", "method", "n", "t", "p", "dof", "cohens_d", "error"],
                                [[t.get(k, "") for k in ("metric", "reference", "method", "n", "t", "p",
                                                         "dof", "cohens_d", "error")] for t in tests]))
        seg_rows = [[method, r["subject"], r["offset"], *[_fmt(r[m]) for m in METRIC_NAMES]]
                    for method, rs in run.per_segment.items() for r in rs]
        files.append(_write_csv(out / "per_segment.csv", ["method", "subject", "offset", *METRIC_NAMES], seg_rows))
        if figures and run.examples:
            files.append(plot_overlay(run.examples, out / "overlay.svg"))
            if "scatter" in run.examples:
                sc = run.examples["scatter"]
                files.append(plot_scatter(sc["clean"], sc["predicted"], out / "scatter.svg"))
    elif run.kind == "loso":
        per = run.loso["per_subject"]
        rows = [[s, *[_fmt(per[s][m]) for m in LOSO_METRICS]] for s in sorted(per)]
        summ = run.loso["summary"]
        rows.append(["mean", *[_fmt(summ[m]["mean"]) for m in LOSO_METRICS]])
        rows.append(["sd", *[_fmt(summ[m]["sd"]) for m in LOSO_METRICS]])
        files.append(_write_csv(out / "loso.csv", ["subject", *LOSO_METRICS], rows))
        path = out / "loso_summary.json"
        path.write_text(json.dumps(summ, indent=1), encoding="utf-8")
        files.append(path)
        if figures:
            files.append(plot_loso_box(per, out / "loso_box.svg"))
    elif run.kind == "ablation":
        cols = ["variant", "parameters", "epochs", "rmse", "nrmse", "pearson_r", "ssim"]
        files.append(_write_csv(out / "ablation.csv", cols, [[_fmt(r[c]) for c in cols] for r in run.ablation]))
    if run.saliency and figures:
        path = out / "saliency.csv"
        m = run.saliency["channel_means"]
        files.append(_write_csv(path, ["channel", "mean_saliency"],
                                [[lbl, _fmt(v)] for lbl, v in zip(run.saliency.get("labels", range(len(m))), m)]))
        files.append(plot_saliency_bars(m, out / "saliency.svg", run.saliency.get("labels")))
    manifest = out / "reports.json"
    manifest.write_text(json.dumps({"kind": run.kind, "files": [f.name for f in files]}, indent=1),
                        encoding="utf-8")
    files.append(manifest)
    return files


def empty_pooled_run() -> EvalRun:
    return EvalRun("pooled", {}, 0, None, ad.backend_name())
