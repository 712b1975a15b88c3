"""Run configuration: merging, precedence and validation."""
import json

import pytest

from dartk.config import DEFAULTS, RunConfig, parse_override
from dartk.errors import InvalidConfig, IoFailure


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig.build()
        assert cfg.to_dict() == DEFAULTS
        assert cfg.train_config().seed == 42 and cfg.dar_config().widths[1] == 128

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"train": {"lr": 1e-3, "momentum": 0.9}}))
        with pytest.raises(InvalidConfig, match="train.momentum"):
            RunConfig.build(f)

    def test_precedence(self, tmp_path):
        f = tmp_path / "c.toml"
        f.write_text("seed = 1\n[train]\nmax_epochs = 7\nbatch_size = 8\n")
        cfg = RunConfig.build(f, ["train.max_epochs=9"], seed=5)
        assert cfg.data["train"]["max_epochs"] == 9
        assert cfg.data["train"]["batch_size"] == 8
        assert cfg.seed == 5 and cfg.train_config().seed == 5 and cfg.synth_config().seed == 5
        assert cfg.data["eval"]["split_seed"] == 5

    def test_override_values(self):
        assert parse_override("dar.kernel=3") == (("dar", "kernel"), 3)
        assert parse_override("dar.output_activation=none") == (("dar", "output_activation"), "none")
        with pytest.raises(InvalidConfig):
            parse_override("no-equals")

    def test_invalid_values(self):
        with pytest.raises(InvalidConfig):
            RunConfig.build(overrides=["eval.train_frac=1.5"])
        with pytest.raises(InvalidConfig):
            RunConfig.build(overrides=["dar.padding=1"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            RunConfig.build(tmp_path / "absent.toml")
