from __future__ import annotations

import json

import numpy as np
import pytest

from honeycast.evaluate import split_train_test_by_history
from honeycast.models import ForestParams, GbtParams
from honeycast.pipeline import (ConfigError, PipelineConfig, build_matrices, fit_kind,
                                load_config, synthetic_matrices, train_test_metrics)
from honeycast.synthgen import ScenarioConfig


def test_defaults_round_trip():
    cfg = PipelineConfig()
    again = PipelineConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()


@pytest.mark.parametrize("bad", [
    {"sede": 1},
    {"cleaning": {"zz": 1}},
    {"train": {"rf": {"n_tree": 3}}},
    {"tune": {"spaces": {"gbt": {"depth": [1]}}}},
    {"synth": {"n_hive": 3}},
    {"period": "summer"},
    {"models": ["svm"]},
    {"train": {"train_frac": 1.0}},
])
def test_rejects_bad_keys_and_values(bad):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(bad)


def test_digest_ignores_output_dir_only():
    a = PipelineConfig.from_dict({"output_dir": "x"})
    b = PipelineConfig.from_dict({"output_dir": "y"})
    c = PipelineConfig.from_dict({"output_dir": "x", "seed": 1})
    assert a.digest() == b.digest() != c.digest()


def test_load_config_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "period": "complete"}))
    cfg = load_config(p, seed=9, period=None)
    assert cfg.seed == 9 and cfg.period == "complete"


def test_train_params_merge():
    cfg = PipelineConfig.from_dict({"train": {"rf": {"n_trees": 7}}})
    p = cfg.train.params("rf", {"max_depth": 4})
    assert isinstance(p, ForestParams) and p.n_trees == 7 and p.max_depth == 4
    assert cfg.train.params("gbt") == GbtParams()
    assert cfg.train.params("ols") is None


def test_synthetic_matrices_end_to_end():
    mats, cleaned, manifest = synthetic_matrices(
        ScenarioConfig(n_hives=8, n_days=220, hives_per_site=4, seed=2))
    assert set(mats) == {"complete", "production"}
    comp, prod = mats["complete"], mats["production"]
    assert comp.X.shape[1] == prod.X.shape[1] and comp.X.shape[0] > prod.X.shape[0]
    assert np.isfinite(comp.X).all() and np.isfinite(comp.y).all()
    again = build_matrices(cleaned)
    np.testing.assert_array_equal(again["production"].X, prod.X)
    train, test = split_train_test_by_history(prod, 0.8)
    model = fit_kind("ols", train, None, seed=0)
    m = train_test_metrics(model, train, test, "production")
    assert set(m) == {"train", "test"}
    assert manifest["defects"]
