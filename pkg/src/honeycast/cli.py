"""Command-line entry point: one subcommand per pipeline stage.

A run directory holds one subdirectory per stage.  A stage refuses to
overwrite an existing subdirectory; it is written under a temporary name
and renamed only once complete.  Each stage directory carries the
effective ``config.json`` and a ``run_manifest.json`` listing the seed, the
config hash and the sha256 of every input consumed and file produced.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from . import __version__
from .core import FeatureMatrix, PanelError
from .evaluate import per_hive_frame, per_hive_metric_distribution, split_train_test_by_history
from .explain import shap_global_summary, write_importance_csv, write_shap_csv
from .ingest import read_joined_csv, write_joined_csv
from .models import EnsembleModel
from .pipeline import (MODEL_KINDS, PERIODS, ConfigError, PipelineConfig, build_matrices,
                       explain_model, fit_kind, ingest_files, load_config,
                       train_test_metrics, tune_kind, variations_from_long)
from .preprocess import adf_diagnostics, clean_panel, panel_long_frame, stationarity_table
from .synthgen import audit_cleaning, generate_panel

log = logging.getLogger("honeycast")

SCHEMA_VERSION = 1
STAGES = ("synth", "ingest", "clean", "featurize", "tune", "train", "evaluate", "explain", "report")


class RunError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


@dataclass
class Run:
    root: Path
    cfg: PipelineConfig
    workers: int = 1
    print_report: bool = False

    def require(self, stage: str, name: str, code: str = "missing_input") -> Path:
        p = self.root / stage / name
        if not p.is_file():
            msg = f"{stage}/{name} not found; run `{stage}` first"
            if code == "model_not_found":
                msg = f"model not found: {stage}/{name}"
            raise RunError(code, msg)
        return p

    def has(self, stage: str, name: str) -> bool:
        return (self.root / stage / name).is_file()


@dataclass
class StageWriter:
    run: Run
    name: str
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.final = self.run.root / self.name
        if self.final.exists():
            raise RunError("stage_exists", f"{self.final} already exists; use a new --out directory")
        self.dir = self.run.root / f".{self.name}.partial"
        if self.dir.exists():
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True)

    def path(self, name: str) -> Path:
        return self.dir / name

    def uses(self, path: Path) -> Path:
        path = Path(path)
        try:
            key = str(path.resolve().relative_to(self.run.root.resolve()))
        except ValueError:
            key = str(path)
        self.inputs[key] = sha256_file(path)
        return path

    def finish(self) -> dict:
        write_json(self.path("config.json"), self.run.cfg.to_dict())
        artifacts = {p.name: sha256_file(p) for p in sorted(self.dir.iterdir()) if p.is_file()}
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "stage": self.name,
            "package_version": __version__,
            "seed": self.run.cfg.seed,
            "config_sha256": self.run.cfg.digest(),
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": artifacts,
        }
        write_json(self.path("run_manifest.json"), manifest)
        self.dir.rename(self.final)
        return manifest

    def abort(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)


def say(stage: str, msg: str) -> None:
    print(f"[{stage}] {msg}", flush=True)


# ------------------------------------------------------------------- stages

def stage_synth(run: Run, w: StageWriter) -> None:
    scen = run.cfg.scenario()
    manifest = generate_panel(scen, w.dir)
    say("synth", f"{scen.n_hives} hives x {scen.n_days} days, defects {manifest['defect_counts']}")


def _input_paths(run: Run):
    inp = run.cfg.inputs
    if inp.hives_csv or inp.weather_csv:
        if not (inp.hives_csv and inp.weather_csv):
            raise ConfigError("inputs needs both hives_csv and weather_csv")
        for p in (inp.hives_csv, inp.weather_csv):
            if not Path(p).is_file():
                raise RunError("missing_input", f"input file not found: {p}")
        return Path(inp.hives_csv), Path(inp.weather_csv)
    return run.require("synth", "hives.csv"), run.require("synth", "weather.csv")


def stage_ingest(run: Run, w: StageWriter) -> None:
    hives, weather = (w.uses(p) for p in _input_paths(run))
    res = ingest_files(hives, weather, run.cfg.ingest)
    if not res.panel:
        raise RunError("empty_panel", "no hive could be joined to weather cells")
    write_joined_csv(res.panel, w.path("joined.csv"))
    write_json(w.path("ingest_report.json"), res.stats)
    say("ingest", f"{res.stats['n_joined']} hives joined, {len(res.stats['excluded'])} excluded")


def stage_clean(run: Run, w: StageWriter) -> None:
    panel = read_joined_csv(w.uses(run.require("ingest", "joined.csv")))
    cleaned = clean_panel(panel, run.cfg.cleaning)
    report = cleaned.report.to_dict()
    panel_long_frame(cleaned).to_csv(w.path("cleaned_panel.csv"), index=False, float_format="%.17g")
    kept = cleaned.kept
    pd.DataFrame({"hive_id": [h.hive_id for h in kept],
                  "latitude": [h.latitude for h in kept],
                  "longitude": [h.longitude for h in kept],
                  "altitude_m": [h.altitude_m for h in kept]}).to_csv(
        w.path("hives.csv"), index=False, float_format="%.17g")
    write_json(w.path("cleaning_report.json"), report)
    diag = adf_diagnostics(cleaned)
    diag.to_csv(w.path("adf_diagnostics.csv"), index=False, float_format="%.17g")
    stationarity_table(diag).to_csv(w.path("stationarity.csv"), index=False, float_format="%.17g")
    synth_manifest = run.root / "synth" / "manifest.json"
    if synth_manifest.is_file() and not run.cfg.inputs.hives_csv:
        manifest = json.loads(w.uses(synth_manifest).read_text())
        audit = audit_cleaning(panel, manifest, run.cfg.cleaning)
        write_json(w.path("audit.json"), audit.to_dict())
        say("clean", f"audit detection {audit.detection_rate}, "
                     f"false removals {audit.false_removal_rate:.4f}")
    say("clean", f"removed {report['totals']}, discarded {report['n_discarded']} hives")
    if run.print_report:
        sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
        sys.stdout.flush()


def stage_featurize(run: Run, w: StageWriter) -> None:
    long = pd.read_csv(w.uses(run.require("clean", "cleaned_panel.csv")), dtype={"hive_id": str},
                       float_precision="round_trip")
    loc = pd.read_csv(w.uses(run.require("clean", "hives.csv")), dtype={"hive_id": str},
                      float_precision="round_trip")
    mats = build_matrices(variations_from_long(long, loc), run.cfg.cleaning.lags)
    summary = {}
    for period, m in mats.items():
        m.write_csv(w.path(f"matrix_{period}.csv"))
        summary[period] = {"n_rows": m.n_rows, "n_features": m.n_features,
                           "n_hives": int(len(set(m.hive_ids)))}
        say("featurize", f"{period}: {m.n_rows} rows x {m.n_features} features")
    write_json(w.path("features.json"), {"feature_names": list(mats["complete"].feature_names),
                                         "periods": summary})


def _matrix(run: Run, w: StageWriter, period: str) -> FeatureMatrix:
    return FeatureMatrix.read_csv(w.uses(run.require("featurize", f"matrix_{period}.csv")))


def _split(run: Run, m: FeatureMatrix):
    return split_train_test_by_history(m, run.cfg.train.train_frac)


def stage_tune(run: Run, w: StageWriter) -> None:
    period = run.cfg.period
    train, _ = _split(run, _matrix(run, w, period))
    best = {}
    for kind in run.cfg.models:
        if kind == "ols":
            continue
        progress = lambda t, k=kind: say("tune", f"{k} trial {t.trial}: cv mse {t.mean_cv_mse:.6g}")
        res = tune_kind(kind, train, run.cfg.tune, run.cfg.seed, run.workers, progress)
        res.write_log(w.path(f"trials_{kind}.csv"))
        best[kind] = {"params": res.best_params, "mean_cv_mse": res.best_score, **res.meta}
        say("tune", f"{kind} best {res.best_params} (cv mse {res.best_score:.6g})")
    write_json(w.path("best_params.json"), {"schema_version": SCHEMA_VERSION, "period": period,
                                           "best": best})


def model_name(kind: str, period: str) -> str:
    return f"model_{kind}_{period}.json"


def stage_train(run: Run, w: StageWriter) -> None:
    tuned = {}
    if run.has("tune", "best_params.json"):
        data = json.loads(w.uses(run.root / "tune" / "best_params.json").read_text())
        tuned = {k: v["params"] for k, v in data["best"].items()}
    for period in PERIODS:
        train, _ = _split(run, _matrix(run, w, period))
        for kind in run.cfg.models:
            params = run.cfg.train.params(kind, tuned.get(kind))
            model = fit_kind(kind, train, params, run.cfg.seed, run.workers)
            model.save(w.path(model_name(kind, period)))
            say("train", f"{kind} {period}: {train.n_rows} training rows"
                         + (" (tuned)" if kind in tuned else ""))


def _load_model(run: Run, w: StageWriter, kind: str, period: str) -> EnsembleModel:
    if not (run.root / "train").is_dir():
        raise RunError("model_not_found", f"model not found: no train stage in {run.root}")
    return EnsembleModel.load(w.uses(run.require("train", model_name(kind, period),
                                                 "model_not_found")))


def stage_evaluate(run: Run, w: StageWriter) -> None:
    models = {(k, p): _load_model(run, w, k, p) for p in PERIODS for k in run.cfg.models}
    out = {"schema_version": SCHEMA_VERSION, "train_frac": run.cfg.train.train_frac, "models": {}}
    table = []
    for period in PERIODS:
        train, test = _split(run, _matrix(run, w, period))
        for kind in run.cfg.models:
            model = models[kind, period]
            res = train_test_metrics(model, train, test, period)
            out["models"].setdefault(kind, {})[period] = res
            for split, r in res.items():
                table.append({"model": kind, "period": period, "split": split,
                              "r_squared": r["r_squared"], "mse": r["mse"], "mape": r["mape"],
                              "n_rows": r["n_rows"]})
            reports, hist = per_hive_metric_distribution(model, test, run.cfg.evaluate.bins, period)
            per_hive_frame(reports).to_csv(w.path(f"per_hive_{kind}_{period}.csv"), index=False,
                                           float_format="%.17g")
            hist.to_csv(w.path(f"histogram_{kind}_{period}.csv"), index=False, float_format="%.17g")
            say("evaluate", f"{kind} {period}: test R2 {res['test']['r_squared']:.4f}")
    write_json(w.path("metrics.json"), out)
    pd.DataFrame(table).to_csv(w.path("metrics_table.csv"), index=False, float_format="%.17g")


def stage_explain(run: Run, w: StageWriter) -> None:
    period = run.cfg.period
    train, test = _split(run, _matrix(run, w, period))
    for kind in run.cfg.models:
        model = _load_model(run, w, kind, period)
        scores, sv = explain_model(model, train, test, run.cfg.explain, run.cfg.seed)
        write_importance_csv(list(scores.values()), w.path(f"importance_{kind}.csv"))
        write_shap_csv(sv, w.path(f"shap_{kind}.csv"))
        ranking, _ = shap_global_summary(sv)
        ranking.to_csv(w.path(f"shap_ranking_{kind}.csv"), index=False, float_format="%.17g")
        tops = {m: e.ranking()[:3] for m, e in scores.items()}
        say("explain", f"{kind}: top features {tops}")


def stage_report(run: Run, w: StageWriter) -> None:
    stages = {}
    for name in STAGES[:-1]:
        m = run.root / name / "run_manifest.json"
        if m.is_file():
            stages[name] = json.loads(w.uses(m).read_text())
    if not stages:
        raise RunError("missing_input", f"nothing to report in {run.root}")
    report = {"schema_version": SCHEMA_VERSION, "config": run.cfg.to_dict(), "stages": stages}
    for stage, name, key in (("clean", "cleaning_report.json", "cleaning"),
                             ("clean", "audit.json", "audit"),
                             ("tune", "best_params.json", "tuning"),
                             ("evaluate", "metrics.json", "metrics")):
        if run.has(stage, name):
            data = json.loads(w.uses(run.root / stage / name).read_text())
            if key == "cleaning":
                data = {k: v for k, v in data.items() if k != "hives"}
            if key == "audit":
                data = {k: v for k, v in data.items() if k != "missed"}
            report[key] = data
    if (run.root / "explain").is_dir():
        imp = {}
        for p in sorted((run.root / "explain").glob("importance_*.csv")):
            df = pd.read_csv(w.uses(p))
            kind = p.stem.split("_", 1)[1]
            imp[kind] = {m: g.sort_values("score", ascending=False, kind="stable")["feature"]
                         .head(10).tolist() for m, g in df.groupby("method", sort=True)}
        report["top_features"] = imp
    # plot-ready tables are copied next to the summary
    for stage in ("clean", "evaluate", "explain"):
        d = run.root / stage
        if not d.is_dir():
            continue
        for p in sorted(d.glob("*.csv")):
            if p.name in ("cleaned_panel.csv", "hives.csv"):
                continue
            shutil.copyfile(w.uses(p), w.path(f"{stage}__{p.name}"))
    write_json(w.path("report.json"), report)
    say("report", f"bundled {len(stages)} stage manifests")


RUNNERS = {
    "synth": stage_synth, "ingest": stage_ingest, "clean": stage_clean,
    "featurize": stage_featurize, "tune": stage_tune, "train": stage_train,
    "evaluate": stage_evaluate, "explain": stage_explain, "report": stage_report,
}


def run_stage(run: Run, name: str) -> dict:
    w = StageWriter(run, name)
    try:
        RUNNERS[name](run, w)
    except BaseException:
        w.abort()
        raise
    return w.finish()


def run_pipeline(run: Run, tune: bool = False) -> None:
    names = [s for s in STAGES if s != "tune" or tune]
    if run.cfg.inputs.hives_csv:
        names.remove("synth")
    for name in names:
        run_stage(run, name)


# ---------------------------------------------------------------------- cli

class JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with PipelineConfig keys")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--period", choices=PERIODS, help="period used by tune and explain")
    common.add_argument("--out", help="run directory (default: config output_dir)")
    common.add_argument("--model", choices=MODEL_KINDS + ("all",), help="restrict to one model")
    common.add_argument("--workers", type=int, default=1, help="threads for forests and search")
    common.add_argument("--log-level", default="WARNING")

    p = JsonArgumentParser(prog="honeycast", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=JsonArgumentParser)
    helps = {
        "synth": "generate a synthetic hive/weather panel",
        "ingest": "parse the CSV inputs and join weather to hives",
        "clean": "outlier filters, differencing and stationarity diagnostics",
        "featurize": "lagged feature matrices for both periods",
        "tune": "random-search cross-validation for the tree models",
        "train": "fit and serialize the models",
        "evaluate": "train/test metrics and per-hive distributions",
        "explain": "impurity, permutation and SHAP attributions",
        "report": "bundle the run's JSON and CSV outputs",
        "pipeline": "run every stage in order",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "clean":
            sp.add_argument("--report", action="store_true", help="print the cleaning report JSON")
        if name == "pipeline":
            sp.add_argument("--tune", action="store_true", help="include the tune stage")
    return p


def _config_from_args(args) -> PipelineConfig:
    models = None
    if args.model:
        models = list(MODEL_KINDS) if args.model == "all" else [args.model]
    cfg = load_config(args.config, seed=args.seed, period=args.period, models=models,
                      output_dir=args.out)
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sys.stdout.reconfigure(line_buffering=True)
    except AttributeError:
        pass
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = _config_from_args(args)
        run = Run(Path(cfg.output_dir), cfg, args.workers, getattr(args, "report", False))
        run.root.mkdir(parents=True, exist_ok=True)
        if args.command == "pipeline":
            run_pipeline(run, args.tune)
        else:
            run_stage(run, args.command)
    except RunError as exc:
        return _fail(args.command, exc.code, str(exc))
    except ConfigError as exc:
        return _fail(args.command, "config", str(exc))
    except (PanelError, ValueError, OSError, KeyError) as exc:
        log.debug("stage failed", exc_info=True)
        return _fail(args.command, type(exc).__name__, str(exc))
    return 0


def _fail(command: str, code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message, "command": command},
                                sort_keys=True) + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
