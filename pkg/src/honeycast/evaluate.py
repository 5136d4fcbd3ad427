"""Metrics, chronological per-hive split, hive-stratified folds and random search."""
from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .core import FeatureMatrix
from .models import EnsembleModel, fit_model, params_from_dict

log = logging.getLogger(__name__)

MAPE_EPS = 0.01  # kg; targets closer to zero are left out of MAPE

RF_SPACE = {
    "n_trees": [25, 50, 100, 200],
    "max_depth": [5, 10, 20, 30, None],
    "min_samples_split": [2, 50, 100, 200, 400],
    "min_samples_leaf": [1, 50, 100, 200],
    "ccp_alpha": [0.0, 1e-4, 1e-3],
}
GBT_SPACE = {
    "eta": [0.01, 0.05, 0.08, 0.1, 0.3],
    "max_depth": [3, 4, 6, 8, 10],
    "min_child_weight": [1, 3, 5, 7, 10],
    "n_rounds": [50, 100, 200, 500],
}
DEFAULT_SPACES = {"rf": RF_SPACE, "gbt": GBT_SPACE}


@dataclass
class MetricReport:
    r_squared: float
    mse: float
    mape: float
    n_rows: int
    n_excluded_mape: int
    scope: str = ""
    period: str = ""
    hive_id: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("r_squared", "mse", "mape"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


def compute_metrics(y, y_hat, scope: str = "", period: str = "", hive_id: str | None = None,
                    eps: float = MAPE_EPS) -> MetricReport:
    """R^2, MSE and MAPE (percent).

    MAPE skips rows with |y| < ``eps``; with zero target variance R^2 is NaN
    and ``error`` says why.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("y and y_hat must be 1-D and of equal length")
    if len(y) < 2:
        raise ValueError("need at least 2 rows")
    resid = y - y_hat
    sse = float(resid @ resid)
    mse = sse / len(y)
    dev = y - y.mean()
    sst = float(dev @ dev)
    error = None
    if sst == 0.0:
        r2 = math.nan
        error = "zero target variance: R^2 undefined"
    else:
        r2 = 1.0 - sse / sst
    keep = np.abs(y) >= eps
    n_excl = int((~keep).sum())
    mape = 100.0 * float(np.mean(np.abs(resid[keep]) / np.abs(y[keep]))) if keep.any() else math.nan
    return MetricReport(r2, mse, mape, len(y), n_excl, scope, period, hive_id, error)


# ------------------------------------------------------------------ splits

def _hive_groups(hive_ids) -> dict:
    groups: dict = {}
    for i, h in enumerate(hive_ids):
        groups.setdefault(h, []).append(i)
    return groups


def split_indices_by_history(hive_ids, dates, train_frac: float = 0.8):
    """Per hive, the earliest ceil(train_frac * n) rows train and the rest test."""
    if not 0 < train_frac <= 1:
        raise ValueError("train_frac must be in (0, 1]")
    dates = np.asarray(dates)
    train, test = [], []
    for h, idx in _hive_groups(hive_ids).items():
        idx = np.asarray(idx)
        idx = idx[np.argsort(dates[idx], kind="stable")]
        n = len(idx)
        # the tolerance keeps float error in frac*n from bumping an exact product up
        n_train = min(n, math.ceil(train_frac * n - 1e-9))
        if n == 1:
            log.warning("hive %s has a single row; it goes to training only", h)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
    return cat(train), cat(test)


def split_train_test_by_history(matrix: FeatureMatrix, train_frac: float = 0.8):
    tr, te = split_indices_by_history(matrix.hive_ids, matrix.dates, train_frac)
    return matrix.take(tr), matrix.take(te)


def kfold_indices(hive_ids, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Hive-stratified folds: each hive's rows are shuffled and dealt round-robin.

    The dealing position carries over from hive to hive, so global fold sizes
    differ by at most one and every hive is spread as evenly as possible.
    """
    hive_ids = np.asarray(hive_ids, dtype=object)
    n = len(hive_ids)
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=np.int64)
    offset = 0
    groups = _hive_groups(hive_ids)
    for h in sorted(groups, key=str):
        idx = rng.permutation(np.asarray(groups[h]))
        fold[idx] = (offset + np.arange(len(idx))) % k
        offset = (offset + len(idx)) % k
    return [np.flatnonzero(fold == j) for j in range(k)]


# ------------------------------------------------------------------ search

@dataclass
class SearchSpace:
    params: dict[str, list]
    n_iterations: int = 2500
    seed: int = 0

    def __post_init__(self):
        self.params = {k: list(v) for k, v in self.params.items()}
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError("search space is empty")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")

    @property
    def size(self) -> int:
        return math.prod(len(v) for v in self.params.values())

    @property
    def n_trials(self) -> int:
        """Sampling is without replacement, so at most the whole grid."""
        return min(self.n_iterations, self.size)

    def decode(self, code: int) -> dict:
        """Mixed-radix decoding; the last parameter varies fastest."""
        out = {}
        for name, vals in reversed(list(self.params.items())):
            code, r = divmod(code, len(vals))
            out[name] = vals[r]
        return {k: out[k] for k in self.params}

    def grid(self) -> list[dict]:
        names = list(self.params)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.params.values())]

    def sample(self) -> list[dict]:
        rng = np.random.default_rng(self.seed)
        codes = rng.choice(self.size, size=self.n_trials, replace=False)
        return [self.decode(int(c)) for c in codes]


@dataclass
class Trial:
    trial: int
    params: dict
    mean_cv_mse: float
    std_cv_mse: float
    fold_mse: list[float]


@dataclass
class SearchResult:
    kind: str
    best_params: dict
    best_score: float
    trials: list[Trial]
    meta: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "trial": [t.trial for t in self.trials],
            "params_json": [json.dumps(t.params, sort_keys=True) for t in self.trials],
            "mean_cv_mse": [t.mean_cv_mse for t in self.trials],
            "std_cv_mse": [t.std_cv_mse for t in self.trials],
        })

    def write_log(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def cv_mse(kind: str, params: dict, X, y, folds: Sequence[np.ndarray], seed: int = 0,
           n_jobs: int = 1) -> list[float]:
    out = []
    all_rows = np.arange(len(y))
    for test_idx in folds:
        train_idx = np.setdiff1d(all_rows, test_idx, assume_unique=True)
        model = fit_model(kind, X[train_idx], y[train_idx], params_from_dict(kind, params),
                          seed=seed, n_jobs=n_jobs)
        r = y[test_idx] - model.predict(X[test_idx])
        out.append(float(r @ r / len(r)))
    return out


def random_search_cv(matrix: FeatureMatrix, kind: str, space: SearchSpace, k: int = 5,
                     model_seed: int = 0, max_rows: int | None = None, n_jobs: int = 1,
                     progress=None) -> SearchResult:
    """Seeded random search without replacement, scored by mean k-fold MSE.

    ``max_rows`` optionally subsamples the matrix (seeded by the space seed)
    before the folds are drawn.  Every trial uses the same folds and model
    seed; the best trial is the first one, in sampling order, with the lowest
    mean.  ``n_jobs`` evaluates trials concurrently without changing results.
    """
    X, y, hives = matrix.X, matrix.y, matrix.hive_ids
    rows = np.arange(len(y))
    if max_rows is not None and len(y) > max_rows:
        rng = np.random.default_rng([space.seed, 1])
        rows = np.sort(rng.choice(len(y), size=max_rows, replace=False))
        X, y, hives = X[rows], y[rows], hives[rows]
    folds = kfold_indices(hives, k, space.seed)
    combos = space.sample()

    def run(i_params):
        i, params = i_params
        fold = cv_mse(kind, params, X, y, folds, model_seed)
        t = Trial(i, params, float(np.mean(fold)), float(np.std(fold)), fold)
        if progress is not None:
            progress(t)
        return t

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trials = list(pool.map(run, enumerate(combos)))
    else:
        trials = [run(x) for x in enumerate(combos)]
    best = trials[0]
    for t in trials[1:]:
        if t.mean_cv_mse < best.mean_cv_mse:
            best = t
    meta = {"k": k, "n_rows": int(len(y)), "space_size": space.size,
            "n_trials": len(trials), "search_seed": space.seed, "model_seed": model_seed,
            "best_trial": best.trial}
    return SearchResult(kind, dict(best.params), best.mean_cv_mse, trials, meta)


# --------------------------------------------------------------- per hive

def per_hive_metric_distribution(model: EnsembleModel, test: FeatureMatrix, bins: int = 20,
                                 period: str = ""):
    """Per-hive test metrics (hives with >= 2 rows) and histogram bins per metric."""
    pred = model.predict(test.X)
    reports = []
    for h, idx in sorted(_hive_groups(test.hive_ids).items(), key=lambda kv: str(kv[0])):
        if len(idx) < 2:
            continue
        idx = np.asarray(idx)
        reports.append(compute_metrics(test.y[idx], pred[idx], "test", period, str(h)))
    return reports, metric_histograms(reports, bins)


def metric_histograms(reports: Sequence[MetricReport], bins: int = 20) -> pd.DataFrame:
    rows = []
    for metric in ("r_squared", "mse", "mape"):
        vals = np.array([getattr(r, metric) for r in reports], dtype=float)
        vals = vals[np.isfinite(vals)]
        if len(vals) == 0:
            continue
        counts, edges = np.histogram(vals, bins=bins)
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            rows.append({"metric": metric, "bin_left": a, "bin_right": b, "count": int(c)})
    return pd.DataFrame(rows, columns=["metric", "bin_left", "bin_right", "count"])


def per_hive_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    cols = ["hive_id", "n_rows", "r_squared", "mse", "mape", "n_excluded_mape"]
    return pd.DataFrame([{c: getattr(r, c) for c in cols} for r in reports], columns=cols)
