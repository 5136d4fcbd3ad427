"""Pipeline configuration and the in-memory stages the CLI and scripts share."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import FeatureMatrix, HiveSeries, validate_panel
from .evaluate import DEFAULT_SPACES, SearchSpace, compute_metrics, random_search_cv, \
    split_train_test_by_history
from .explain import (ShapConfig, impurity_importance, permutation_importance, sample_background,
                      shap_importance, shap_values)
from .ingest import cells_from_frame, join_panel, read_hive_frame, read_weather_frame, \
    resample_frame
from .models import EnsembleModel, ForestParams, GbtParams, fit_model
from .preprocess import CleanedPanel, CleaningParams, assemble_feature_matrix, clean_panel, \
    filter_production_period
from .synthgen import ScenarioConfig, generate_panel

log = logging.getLogger(__name__)

PERIODS = ("complete", "production")
MODEL_KINDS = ("rf", "gbt", "ols")
LONG_KIND = {"rf": "random_forest", "gbt": "gradient_boosting", "ols": "linear"}


class ConfigError(ValueError):
    pass


@dataclass
class InputsConfig:
    hives_csv: str | None = None
    weather_csv: str | None = None


@dataclass
class IngestConfig:
    radius_km: float = 20.0
    altitude_weight: float = 10.0
    epsilon: float = 1e-6


@dataclass
class TrainConfig:
    train_frac: float = 0.8
    rf: dict = field(default_factory=dict)
    gbt: dict = field(default_factory=dict)

    def params(self, kind: str, tuned: dict | None = None):
        if kind == "ols":
            return None
        base = asdict(ForestParams() if kind == "rf" else GbtParams())
        base.update(getattr(self, kind))
        if tuned:
            base.update(tuned)
        return (ForestParams if kind == "rf" else GbtParams)(**base)


@dataclass
class TuneConfig:
    n_iterations: int = 2500
    k: int = 5
    max_rows: int | None = None
    spaces: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_SPACES))


@dataclass
class EvaluateConfig:
    bins: int = 20


@dataclass
class ExplainConfig:
    background_size: int = 100
    mc_samples: int = 2048
    exact_max_features: int = 15
    n_rows: int = 200
    n_repeats: int = 10


@dataclass
class PipelineConfig:
    seed: int = 0
    period: str = "production"
    models: list = field(default_factory=lambda: list(MODEL_KINDS))
    output_dir: str = "run"
    inputs: InputsConfig = field(default_factory=InputsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    cleaning: CleaningParams = field(default_factory=CleaningParams)
    synth: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.period not in PERIODS:
            raise ConfigError(f"period must be one of {PERIODS}, got {self.period!r}")
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad or not self.models:
            raise ConfigError(f"models must be a non-empty subset of {MODEL_KINDS}, got {self.models}")
        if not 0 < self.train.train_frac < 1:
            raise ConfigError("train.train_frac must be in (0, 1)")
        for kind, cls in (("rf", ForestParams), ("gbt", GbtParams)):
            _check_keys(getattr(self.train, kind), _field_names(cls), f"train.{kind}")
        for kind, space in self.tune.spaces.items():
            if kind not in DEFAULT_SPACES:
                raise ConfigError(f"tune.spaces: unknown model {kind!r}")
            _check_keys(space, _field_names(ForestParams if kind == "rf" else GbtParams),
                        f"tune.spaces.{kind}")
        self.scenario()

    def scenario(self) -> ScenarioConfig:
        if "seed" in self.synth:
            raise ConfigError("synth.seed is set by the top-level seed")
        try:
            return ScenarioConfig(**self.synth, seed=self.seed)
        except TypeError as exc:
            raise ConfigError(f"synth: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"synth: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cleaning"]["lags"] = list(self.cleaning.lags)
        scen = asdict(self.scenario())
        scen.pop("seed")
        d["synth"] = scen
        return _jsonable(d)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return _build(cls, d, "")

    def digest(self) -> str:
        """sha256 of the settings that determine results (the output path is excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    _check_keys(d, _field_names(cls), where)
    kw = {}
    for k, v in d.items():
        sub = _NESTED.get(k) if cls is PipelineConfig else None
        if sub is not None:
            kw[k] = _build(sub, v, f"{where}.{k}".lstrip("."))
        else:
            kw[k] = v
    if cls is CleaningParams and "lags" in kw:
        kw["lags"] = tuple(kw["lags"])
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


_NESTED = {"inputs": InputsConfig, "ingest": IngestConfig, "cleaning": CleaningParams,
           "train": TrainConfig, "tune": TuneConfig, "evaluate": EvaluateConfig,
           "explain": ExplainConfig}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_config(path: str | Path | None, **overrides) -> PipelineConfig:
    d = json.loads(Path(path).read_text()) if path else {}
    d.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(d)


# ------------------------------------------------------------------- stages

@dataclass
class IngestResult:
    panel: list[HiveSeries]
    stats: dict


def ingest_files(hives_csv, weather_csv, cfg: IngestConfig = IngestConfig()) -> IngestResult:
    frame, skipped_h = read_hive_frame(hives_csv)
    wx, skipped_w = read_weather_frame(weather_csv)
    hives = resample_frame(frame)
    validation = validate_panel(hives)
    joined = join_panel(hives, cells_from_frame(wx), cfg.radius_km, cfg.altitude_weight, cfg.epsilon)
    stats = {
        "n_hive_rows": int(len(frame)),
        "n_skipped_hive_rows": skipped_h,
        "n_weather_rows": int(len(wx)),
        "n_skipped_weather_rows": skipped_w,
        "n_hives": validation.n_hives,
        "n_joined": len(joined.panel),
        "excluded": joined.excluded,
        "validation": validation.to_dict(),
    }
    return IngestResult(joined.panel, stats)


def build_matrices(cleaned: CleanedPanel | list[HiveSeries], lags=(1, 2, 3)) -> dict[str, FeatureMatrix]:
    kept = cleaned.kept if isinstance(cleaned, CleanedPanel) else cleaned
    full = assemble_feature_matrix(kept, lags)
    return {"complete": full, "production": filter_production_period(full)}


def variations_from_long(long: pd.DataFrame, locations: pd.DataFrame) -> list[HiveSeries]:
    """Rebuild the per-hive change series from the cleaned long table."""
    loc = locations.set_index("hive_id")
    d = long[long["variable"].str.startswith("d_")]
    out = []
    for hid, g in d.groupby("hive_id", sort=True):
        vals = {}
        for var, gv in g.groupby("variable", sort=False):
            vals[var[2:]] = pd.Series(gv["value"].to_numpy(), index=pd.DatetimeIndex(gv["date"]))
        r = loc.loc[hid]
        out.append(HiveSeries(str(hid), vals, float(r["latitude"]), float(r["longitude"]),
                              float(r["altitude_m"])))
    return out


def synthetic_matrices(scenario: ScenarioConfig, cleaning: CleaningParams = CleaningParams(),
                       ingest: IngestConfig = IngestConfig()):
    """Generate, ingest from disk, clean and featurize one synthetic scenario."""
    with tempfile.TemporaryDirectory() as tmp:
        manifest = generate_panel(scenario, tmp)
        res = ingest_files(Path(tmp) / "hives.csv", Path(tmp) / "weather.csv", ingest)
    cleaned = clean_panel(res.panel, cleaning)
    return build_matrices(cleaned, cleaning.lags), cleaned, manifest


def fit_kind(kind: str, train: FeatureMatrix, params, seed: int, n_jobs: int = 1) -> EnsembleModel:
    return fit_model(kind, train.X, train.y, params, seed=seed,
                     feature_names=train.feature_names, n_jobs=n_jobs)


def train_test_metrics(model: EnsembleModel, train: FeatureMatrix, test: FeatureMatrix,
                       period: str) -> dict:
    return {split: compute_metrics(m.y, model.predict(m.X), split, period).to_dict()
            for split, m in (("train", train), ("test", test))}


def tune_kind(kind: str, train: FeatureMatrix, cfg: TuneConfig, seed: int, n_jobs: int = 1,
              progress=None):
    space = SearchSpace(cfg.spaces[kind], cfg.n_iterations, seed)
    return random_search_cv(train, kind, space, cfg.k, model_seed=seed, max_rows=cfg.max_rows,
                            n_jobs=n_jobs, progress=progress)


def explanation_rows(test: FeatureMatrix, n_rows: int, seed: int) -> np.ndarray:
    if len(test) <= n_rows:
        return np.arange(len(test))
    return np.sort(np.random.default_rng([seed, 2]).choice(len(test), n_rows, replace=False))


def explain_model(model: EnsembleModel, train: FeatureMatrix, test: FeatureMatrix,
                  cfg: ExplainConfig, seed: int):
    """Impurity (trees only), permutation and SHAP attributions on the test split."""
    out = {}
    if model.is_tree_based:
        out["impurity"] = impurity_importance(model)
    out["permutation"] = permutation_importance(model, test.X, test.y, cfg.n_repeats, seed)
    bg = sample_background(train.X, cfg.background_size, seed)
    rows = explanation_rows(test, cfg.n_rows, seed)
    shap_cfg = ShapConfig(cfg.background_size, cfg.exact_max_features, cfg.mc_samples, seed)
    sv = shap_values(model, test.X[rows], bg, shap_cfg)
    out["shap"] = shap_importance(sv)
    return out, sv
