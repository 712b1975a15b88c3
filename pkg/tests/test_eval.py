"""Splits, LOSO, ablation, saliency and report assembly."""
import csv
import json
import re

import numpy as np
import pytest

from dartk import dar, eval as E, synth
from dartk.errors import EmptyValidation, ShapeMismatch, TooFewSubjects
from dartk.preprocess import Segment, SegmentPair


def subjects(n, duration_s=4.0, c=2, seed=0):
    cfg = synth.SynthConfig(n_channels=c, duration_s=duration_s, sampling_rate=250.0, seed=seed)
    return E.prepare_subjects(synth.generate_subjects(cfg, n))


def fake_pairs(n_subjects, per_subject=3):
    out = []
    for s in range(n_subjects):
        for i in range(per_subject):
            seg = Segment(np.zeros((1, 8)), f"S{s}", 250 * i, 1.0)
            out.append(SegmentPair(seg, seg))
    return out


def fd_column_sums(params, cfg, row, h=1e-6):
    base = dar.forward(params, cfg, dar.ad.Tensor(row[None, None, :])).value.sum()
    sums = np.empty(row.size)
    for j in range(row.size):
        x = row.copy()
        x[j] += h
        sums[j] = (dar.forward(params, cfg, dar.ad.Tensor(x[None, None, :])).value.sum() - base) / h
    return sums


def identity_model():
    """NoTanh weights that pass the input through: x = relu(x) - relu(-x)."""
    cfg = dar.DarConfig.for_variant("NoTanh")
    p = dar.build(cfg, 0)
    c = cfg.kernel // 2
    for conv in p.convs:
        conv.weight.value[:] = 0
        conv.bias.value[:] = 0
    p.convs[0].weight.value[0, 0, c], p.convs[0].weight.value[1, 0, c] = 1, -1
    for conv in p.convs[1:-1]:
        conv.weight.value[0, 0, c] = conv.weight.value[1, 1, c] = 1
    p.convs[-1].weight.value[0, 0, c], p.convs[-1].weight.value[0, 1, c] = 1, -1
    for norm in p.norms:
        norm.gamma.value[:] = 1
        norm.beta.value[:] = 0
        norm.state.running_mean[:] = 0
        norm.state.running_var[:] = 1 - norm.state.eps
    return p, cfg


class TestSplits:
    def test_pooled_reproducible(self):
        pairs = fake_pairs(4, 10)
        a, b = E.pooled_split(pairs, 0.8, 42), E.pooled_split(pairs[::-1], 0.8, 42)
        assert a == b
        assert len(a.train) == 32 and len(a.test) == 8
        assert set(a.train) | set(a.test) == {p.key for p in pairs}
        assert E.pooled_split(pairs, 0.8, 43).test != a.test

    def test_pooled_empty_validation(self):
        with pytest.raises(EmptyValidation):
            E.pooled_split(fake_pairs(2), 1.0)

    def test_loso_seven(self):
        pairs = fake_pairs(7)
        plans = E.loso_splits(pairs)
        assert len(plans) == 7
        tests = [set(p.test) for p in plans]
        assert set().union(*tests) == {p.key for p in pairs}
        assert sum(len(t) for t in tests) == len(pairs)
        for plan in plans:
            assert all(k[0] == plan.held_out for k in plan.test)
            assert not any(k[0] == plan.held_out for k in plan.train)

    def test_loso_two_subjects(self):
        with pytest.raises(TooFewSubjects):
            E.loso_splits(fake_pairs(2))

    def test_units_grouped_by_subject(self):
        pairs = [SegmentPair(Segment(np.zeros((1, 4)), u, 0, 1.0), Segment(np.zeros((1, 4)), u, 0, 1.0))
                 for u in ("A@rest", "A@task", "B@rest", "C@rest")]
        plans = E.loso_splits(pairs)
        assert [p.held_out for p in plans] == ["A", "B", "C"]
        assert len(plans[0].test) == 2

    def test_plan_round_trip(self):
        plan = E.pooled_split(fake_pairs(3), 0.5, 1)
        assert E.SplitPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


@pytest.fixture(scope="module")
def pooled():
    subs = subjects(2, duration_s=60.0, c=4)
    tcfg = dar.TrainConfig(max_epochs=1, batch_size=8)
    return subs, tcfg, E.run_pooled(subs, tcfg=tcfg, threads=1)


class TestRuns:
    def test_pooled_contents(self, pooled):
        _, _, run = pooled
        assert set(run.aggregates) == set(E.DEFAULT_METHODS)
        n_test = len(run.split["test"])
        assert all(len(rows) == n_test for rows in run.per_segment.values())
        tests = run.statistics["paired_tests"]
        assert {(t["metric"], t["method"]) for t in tests} == {
            (m, b) for m in E.TEST_METRICS for b in E.BASELINE_METHODS}

    def test_pooled_deterministic(self, pooled):
        subs, tcfg, run = pooled
        again = E.run_pooled(subs, tcfg=tcfg, threads=1)
        assert json.dumps(again.to_dict()["aggregates"]) == json.dumps(run.to_dict()["aggregates"])

    def test_pooled_one_subject(self):
        with pytest.raises(TooFewSubjects):
            E.run_pooled(subjects(1), methods=[E.DAR])

    def test_manifest_round_trip(self, pooled, tmp_path):
        run = pooled[2]
        back = E.EvalRun.load(run.save(tmp_path / "run.json"))
        assert back.aggregates == run.to_dict()["aggregates"]

    def test_loso(self):
        subs = subjects(3)
        run = E.run_loso(subs, tcfg=dar.TrainConfig(max_epochs=1, batch_size=4))
        assert [f["held_out"] for f in run.loso["folds"]] == ["S00", "S01", "S02"]
        for f, s in zip(run.loso["folds"], subs):
            assert f["n_test"] == len(s.pairs)
        summ = run.loso["summary"]
        for m in E.LOSO_METRICS:
            assert {"mean", "sd", "shapiro", "bootstrap_ci"} <= set(summ[m])
            ci = summ[m]["bootstrap_ci"]
            assert ci["low"] <= summ[m]["mean"] <= ci["high"]

    def test_ablation_rows(self):
        run = E.run_ablation(subjects(2), tcfg=dar.TrainConfig(max_epochs=1, batch_size=4, early_stopping=False))
        assert [r["variant"] for r in run.ablation] == [v.value for v in dar.Variant]
        counts = {r["variant"]: r["parameters"] for r in run.ablation}
        assert counts["HalfChannels"] < counts["Baseline"] == counts["NoTanh"] == 104_833
        assert all(r["epochs"] == 1 for r in run.ablation)


class TestSaliency:
    def _seg(self, c=3, t=32, seed=0):
        return Segment(np.random.default_rng(seed).uniform(-1, 1, (c, t)), "s", 0, 1.0)

    def test_zero_output_layer(self):
        cfg = dar.DarConfig()
        p = dar.build(cfg, 1)
        p.convs[-1].weight.value[:] = 0
        assert not E.saliency(p, cfg, self._seg()).values.any()

    def test_identity_model(self):
        p, cfg = identity_model()
        seg = self._seg()
        np.testing.assert_allclose(dar.denoise(p, cfg, seg).data, seg.data, rtol=1e-5)
        sal = E.saliency(p, cfg, seg)
        np.testing.assert_allclose(sal.values, 1.0, rtol=1e-5)

    def test_nonnegative_and_shape(self):
        cfg = dar.DarConfig()
        sal = E.saliency(dar.build(cfg, 2), cfg, self._seg(c=4, t=50))
        assert sal.values.shape == (4, 50) and sal.channel_means.shape == (4,)
        assert np.all(sal.values >= 0)
        np.testing.assert_allclose(sal.channel_means, sal.values.mean(axis=1))

    def test_matches_forward_differences(self):
        cfg = dar.DarConfig.for_variant("NoTanh")
        p = dar.build(cfg, 3)
        rng = np.random.default_rng(4)
        for norm in p.norms:
            norm.state.running_mean[:] = rng.uniform(-0.1, 0.1, norm.state.running_mean.shape)
            norm.state.running_var[:] = rng.uniform(0.5, 2.0, norm.state.running_var.shape)
        p64 = p.astype(np.float64)
        seg = self._seg(c=1, t=32, seed=5)
        sal = E.saliency(p, cfg, seg, dtype=np.float64)
        fd = np.abs(fd_column_sums(p64, cfg, seg.data[0]))
        np.testing.assert_allclose(sal.values[0], fd, rtol=1e-3, atol=1e-3 * np.abs(fd).max())

    def test_shape_error(self):
        cfg = dar.DarConfig()
        with pytest.raises(ShapeMismatch):
            E.saliency(dar.build(cfg), cfg, Segment(np.zeros(5), "s", 0, 1.0))


class TestReports:
    def _listed(self, files):
        manifest = json.loads(files[-1].read_text())
        return manifest["files"]

    def test_empty_pooled_headers_only(self, tmp_path):
        files = E.emit_reports(E.empty_pooled_run(), tmp_path)
        for f in files[:-1]:
            # the published reference table is constant, not per method
            if f.suffix == ".csv" and f.name != "deep_model_reference.csv":
                rows = list(csv.reader(f.open()))
                assert len(rows) == 1 and rows[0]
        assert self._listed(files) == [f.name for f in files[:-1]]

    def test_scatter_identity_slope(self, tmp_path):
        x = np.random.default_rng(6).standard_normal(500)
        path = E.plot_scatter(x, x, tmp_path / "s.svg")
        meta = re.search(r"<dc:description>(.*?)</dc:description>", path.read_text(), re.S).group(1)
        fit = json.loads(meta.replace("&quot;", '"'))
        assert fit["slope"] == pytest.approx(1.0, abs=1e-12)
        assert fit["intercept"] == pytest.approx(0.0, abs=1e-12)

    def test_pooled_files_match_manifest(self, tmp_path):
        subs = subjects(2, c=4)
        run = E.run_pooled(subs, methods=[E.DAR, "PCA"], tcfg=dar.TrainConfig(max_epochs=1, batch_size=4))
        files = E.emit_reports(run, tmp_path)
        assert all(f.exists() for f in files)
        assert self._listed(files) == [f.name for f in files[:-1]]
        assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f.name for f in files)
        names = {f.name for f in files}
        assert {"method_comparison.csv", "overlay.svg", "scatter.svg"} <= names

    def test_stitch_inverts_segmentation(self):
        s = subjects(1, duration_s=6.0)[0]
        back = E.stitch([p.clean for p in s.pairs], s.clean.n_channels, s.clean.n_samples)
        covered = s.pairs[-1].source_offset + s.pairs[-1].clean.data.shape[1]
        np.testing.assert_allclose(back[:, :covered], s.clean.data[:, :covered], rtol=1e-12, atol=1e-12)
