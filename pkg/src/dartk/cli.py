"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numeric failure.
Logs go to stderr; results go to files under ``--out`` only.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("dartk")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="TOML or JSON config file ('default' for built-in defaults)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value, e.g. train.max_epochs=30 (repeatable)")
    p.add_argument("--seed", type=int, help="global seed; overrides every seed in the config")
    p.add_argument("--threads", type=int, help="cap BLAS threads")
    p.add_argument("--out", required=out_required, type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dartk", description="EEG-fMRI artifact removal toolkit")
    ap.add_argument("--version", action="version", version=json.dumps({"dartk": __version__}))
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse a BrainVision or interchange recording")
    p.add_argument("input", type=Path)
    p.add_argument("--channels", help="comma-separated channel labels to keep")
    _common(p)

    p = sub.add_parser("synth", help="generate paired synthetic recordings and a manifest")
    p.add_argument("--subjects", type=int, help="number of subjects (config synth.n_subjects)")
    _common(p)

    p = sub.add_parser("preprocess", help="resample, filter and segment a dataset manifest")
    p.add_argument("manifest", type=Path)
    _common(p)

    p = sub.add_parser("train", help="train DAR on a preprocessed dataset (pooled split)")
    p.add_argument("data", type=Path, help="preprocess output directory")
    p.add_argument("--epochs", type=int, help="max epochs (config train.max_epochs)")
    _common(p)

    p = sub.add_parser("denoise", help="denoise segments or a recording with trained weights")
    p.add_argument("weights", type=Path)
    p.add_argument("input", type=Path, help="preprocess directory or a recording")
    _common(p)

    p = sub.add_parser("baseline", help="apply a classical baseline to a filtered recording")
    p.add_argument("input", type=Path, help="recording (.json interchange or .vhdr)")
    p.add_argument("--method", required=True, choices=["aas", "obs", "pca", "ica"])
    _common(p)

    for name, text in (("eval", "pooled 80/20 evaluation of DAR and baselines"),
                       ("loso", "leave-one-subject-out evaluation"),
                       ("ablate", "architecture ablation sweep")):
        p = sub.add_parser(name, help=text)
        p.add_argument("data", type=Path, help="preprocess output directory")
        p.add_argument("--epochs", type=int, help="max epochs")
        if name == "eval":
            p.add_argument("--methods", help="comma-separated subset of DAR,PCA,AAS,OBS,ICA")
        _common(p)

    p = sub.add_parser("saliency", help="input-gradient saliency of a trained model")
    p.add_argument("weights", type=Path)
    p.add_argument("data", type=Path, help="preprocess output directory")
    p.add_argument("--max-segments", type=int, default=32)
    p.add_argument("--loss", action="store_true", help="gradient of the L1 loss instead of the output sum")
    _common(p)

    p = sub.add_parser("stats", help="paired tests or LOSO summary from a metrics CSV")
    p.add_argument("csv", type=Path, help="per_segment.csv or loso.csv")
    p.add_argument("--reference", default="DAR")
    _common(p)

    p = sub.add_parser("psd", help="Welch power spectral density of a recording")
    p.add_argument("input", type=Path)
    p.add_argument("--nperseg", type=int, default=256)
    _common(p)
    return ap


# --------------------------------------------------------------------------
# helpers


def _config(args):
    from .config import RunConfig
    cfg = RunConfig.build(args.config, args.overrides, args.seed, args.threads)
    if getattr(args, "epochs", None) is not None:
        cfg.data["train"]["max_epochs"] = args.epochs
        cfg.data["eval"]["ablation_epochs"] = args.epochs
    if getattr(args, "subjects", None) is not None:
        cfg.data["synth"]["n_subjects"] = args.subjects
    return cfg


def _outdir(path: Path) -> Path:
    from .errors import IoFailure
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {path}: {exc}") from exc
    return path


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, default=str), encoding="utf-8")
    return path


def _require(path: Path) -> Path:
    from .errors import IoFailure
    if not path.exists():
        raise IoFailure(f"no such file or directory: {path}")
    return path


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, cfg):
    from .ingest import MarkerKind, load_recording, select_analysis_channels, write_interchange
    rec = load_recording(_require(args.input))
    if args.channels:
        rec = select_analysis_channels(rec, [c.strip() for c in args.channels.split(",")])
    out = _outdir(args.out)
    stem = args.input.stem if args.input.suffix != ".json" else args.input.with_suffix("").name
    path = write_interchange(rec, out / stem)
    _write_json(out / f"{stem}.summary.json", {
        "source": str(args.input), "output": path.name, "n_channels": rec.n_channels,
        "n_samples": rec.n_samples, "sampling_rate": rec.sampling_rate,
        "markers": {k.value: int(len(rec.markers_of(k))) for k in MarkerKind}})
    logger.info("wrote %s (%d channels, %d samples)", path, rec.n_channels, rec.n_samples)


def cmd_synth(args, cfg):
    from .ingest import DatasetManifest, ManifestEntry, write_interchange
    from .synth import generate_subjects
    out = _outdir(args.out)
    entries = []
    scfg = cfg.synth_config()
    for sid, noisy, clean in generate_subjects(scfg, cfg.n_subjects):
        for role, rec in (("noisy", noisy), ("clean", clean)):
            write_interchange(rec, out / f"{sid}_{role}")
            entries.append(ManifestEntry(sid, "synthetic", Path(f"{sid}_{role}.json"), role))
    DatasetManifest(entries, scfg.labels).save(out / "manifest.json")
    _write_json(out / "config.json", cfg.to_dict())
    logger.info("wrote %d synthetic subjects to %s", cfg.n_subjects, out)


def cmd_preprocess(args, cfg):
    from .eval import prepare_manifest, save_prepared
    from .ingest import DatasetManifest
    man = DatasetManifest.load(_require(args.manifest))
    p = cfg.data["preprocess"]
    prepared = prepare_manifest(man, cfg.filter_spec(), p["target_rate"], p["window"], p["stride"])
    out = _outdir(args.out)
    save_prepared(prepared, out)
    _write_json(out / "config.json", cfg.to_dict())
    logger.info("total %d segment pairs", sum(len(s.pairs) for s in prepared))


def cmd_train(args, cfg):
    from . import dar
    from .eval import all_pairs, load_prepared, pooled_split, take
    subjects = load_prepared(_require(args.data))
    pairs = all_pairs(subjects)
    ev = cfg.data["eval"]
    plan = pooled_split(pairs, ev["train_frac"], ev["split_seed"])
    dcfg = cfg.dar_config()
    params, report = dar.train(take(pairs, plan.train), take(pairs, plan.test), cfg.train_config(), dcfg)
    out = _outdir(args.out)
    dar.save(params, dcfg, out / "model.darw")
    _write_json(out / "train_report.json", {"config": cfg.to_dict(), "split": plan.to_dict(),
                                            "report": report.to_dict()})
    logger.info("best epoch %d of %d", report.best_epoch, report.stopped_epoch)


def cmd_denoise(args, cfg):
    from . import dar
    from .eval import load_prepared, stitch
    from .ingest import load_recording, write_interchange
    from .preprocess import bandpass_zero_phase, resample, segment_recording
    params, dcfg = dar.load(_require(args.weights))
    out = _outdir(args.out)
    p = cfg.data["preprocess"]
    src = _require(args.input)
    if src.is_dir():
        subjects = load_prepared(src)
        for s in subjects:
            den = dar.denoise_many(params, dcfg, [pp.noisy for pp in s.pairs])
            np.save(out / f"{s.subject_id}_denoised.npy", np.stack([d.data for d in den]))
            _write_json(out / f"{s.subject_id}_denoised.json",
                        {"offsets": [d.source_offset for d in den],
                         "scales": [d.norm_scale.hex() for d in den]})
    else:
        rec = bandpass_zero_phase(resample(load_recording(src), p["target_rate"]), cfg.filter_spec())
        segs = segment_recording(rec, src.stem, p["window"], p["stride"])
        den = dar.denoise_many(params, dcfg, segs)
        write_interchange(rec.replace(data=stitch(den, rec.n_channels, rec.n_samples)), out / f"{src.stem}_denoised")
    logger.info("denoised output in %s", out)


def cmd_baseline(args, cfg):
    from .baselines import run_baseline
    from .ingest import load_recording, write_interchange
    rec = load_recording(_require(args.input))
    params = cfg.data["baselines"][args.method.upper()]
    corrected, prov = run_baseline(args.method, rec, params, cfg.seed)
    out = _outdir(args.out)
    stem = args.input.with_suffix("").name
    write_interchange(corrected, out / f"{stem}_{args.method}")
    _write_json(out / f"{stem}_{args.method}.provenance.json", prov)


def _finish_run(run, cfg, out):
    from . import dar
    from .eval import emit_reports
    run.config = cfg.to_dict()
    run.save(out / "run.json")
    if run.params is not None:
        dar.save(run.params, cfg.dar_config(), out / "model.darw")
    emit_reports(run, out / "reports")


def cmd_eval(args, cfg):
    from .eval import load_prepared, run_pooled
    subjects = load_prepared(_require(args.data))
    ev = cfg.data["eval"]
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else ev["methods"]
    run = run_pooled(subjects, methods, cfg.train_config(), cfg.dar_config(), cfg.data["baselines"],
                     ev["train_frac"], ev["split_seed"], cfg.threads, cfg.to_dict())
    _finish_run(run, cfg, _outdir(args.out))


def cmd_loso(args, cfg):
    from .eval import load_prepared, run_loso
    run = run_loso(load_prepared(_require(args.data)), cfg.train_config(), cfg.dar_config(), cfg.threads)
    _finish_run(run, cfg, _outdir(args.out))


def cmd_ablate(args, cfg):
    from .eval import load_prepared, run_ablation
    ev = cfg.data["eval"]
    tcfg = cfg.train_config(max_epochs=ev["ablation_epochs"], early_stopping=False)
    run = run_ablation(load_prepared(_require(args.data)), tcfg=tcfg, train_frac=ev["train_frac"],
                       split_seed=ev["split_seed"], threads=cfg.threads)
    _finish_run(run, cfg, _outdir(args.out))


def cmd_saliency(args, cfg):
    from . import dar
    from .eval import EvalRun, all_pairs, emit_reports, load_prepared, saliency
    params, dcfg = dar.load(_require(args.weights))
    subjects = load_prepared(_require(args.data))
    pairs = all_pairs(subjects)[: args.max_segments]
    maps = [saliency(params, dcfg, p.noisy, use_loss=args.loss, target=p.clean) for p in pairs]
    means = np.mean([m.channel_means for m in maps], axis=0)
    out = _outdir(args.out)
    labels = list(subjects[0].noisy.channel_labels) if subjects else None
    np.save(out / "saliency_first_segment.npy", maps[0].values)
    run = EvalRun("saliency", cfg.to_dict(), cfg.seed, cfg.threads, "",
                  saliency={"channel_means": means.tolist(), "labels": labels, "n_segments": len(maps)})
    run.save(out / "run.json")
    emit_reports(run, out)


def cmd_stats(args, cfg):
    from .errors import InvalidManifest
    try:
        _stats(args, cfg)
    except (KeyError, ValueError) as exc:
        raise InvalidManifest(f"malformed metrics CSV {args.csv}: {exc}") from exc


def _stats(args, cfg):
    from .eval import loso_summary, paired_tests
    with _require(args.csv).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = _outdir(args.out)
    if rows and "method" in rows[0]:
        per = {}
        for r in rows:
            per.setdefault(r["method"], []).append(
                {k: float(v) if v not in ("", None) else float("nan") for k, v in r.items()
                 if k not in ("method", "subject", "offset")})
        tests = paired_tests(per, args.reference)
        _write_json(out / "paired_tests.json", tests)
    else:
        per = {r["subject"]: {k: float(v) for k, v in r.items() if k != "subject"}
               for r in rows if r["subject"] not in ("mean", "sd")}
        _write_json(out / "loso_stats.json", loso_summary(per, seed=cfg.seed))


def cmd_psd(args, cfg):
    from .eval import _figure, _save
    from .ingest import load_recording
    from .metrics import welch_psd
    rec = load_recording(_require(args.input))
    est = welch_psd(rec.data, rec.sampling_rate, nperseg=min(args.nperseg, rec.n_samples))
    out = _outdir(args.out)
    stem = args.input.with_suffix("").name
    with (out / f"{stem}_psd.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frequency_hz", *rec.channel_labels])
        for i, f in enumerate(est.frequencies):
            w.writerow([repr(float(f)), *[repr(float(v)) for v in est.power[:, i]]])
    plt = _figure()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(est.frequencies, est.power.mean(axis=0))
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("PSD (uV^2/Hz)")
    _save(fig, plt, out / f"{stem}_psd.svg")


COMMANDS = {
    "ingest": cmd_ingest, "synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
    "denoise": cmd_denoise, "baseline": cmd_baseline, "eval": cmd_eval, "loso": cmd_loso,
    "ablate": cmd_ablate, "saliency": cmd_saliency, "stats": cmd_stats, "psd": cmd_psd,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    from .errors import DartkError
    try:
        cfg = _config(args)
        limit = contextlib.nullcontext()
        if cfg.threads is not None:
            from threadpoolctl import threadpool_limits
            limit = threadpool_limits(int(cfg.threads))
        with limit:
            COMMANDS[args.command](args, cfg)
    except DartkError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (FileNotFoundError, PermissionError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
