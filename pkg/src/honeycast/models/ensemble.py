"""Random forests, gradient boosting and the OLS baseline behind one model type."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .tree import (Tree, TreeParams, _prepare, fit_tree_presorted, presort, restrict_order,
                   sorted_values)

SCHEMA_VERSION = 1
KINDS = ("single_tree", "random_forest", "gradient_boosting", "linear")
OLS_RIDGE = 1e-8


@dataclass(frozen=True)
class GbtParams:
    eta: float = 0.08
    max_depth: int | None = 6
    min_child_weight: int = 7
    n_rounds: int = 100

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.min_child_weight < 1:
            raise ValueError("min_child_weight must be >= 1")

    def tree_params(self) -> TreeParams:
        return TreeParams(max_depth=self.max_depth, min_samples_split=2,
                          min_samples_leaf=self.min_child_weight)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 50
    max_depth: int | None = 30
    min_samples_split: int = 200
    min_samples_leaf: int = 200
    ccp_alpha: float = 0.0
    feature_subsample: float | int | None = 1 / 3
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_split, self.min_samples_leaf,
                          self.ccp_alpha, self.feature_subsample)


@dataclass(eq=False)
class EnsembleModel:
    kind: str
    feature_names: tuple[str, ...]
    trees: list[Tree] = field(default_factory=list)
    learning_rate: float = 1.0
    base_prediction: float = 0.0
    coefficients: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        self.feature_names = tuple(self.feature_names)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def is_tree_based(self) -> bool:
        return self.kind != "linear"

    def tree_outputs(self, X) -> np.ndarray:
        """(n_trees, n_rows) raw tree predictions."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.kind == "linear":
            return self.base_prediction + X @ self.coefficients
        if self.kind == "single_tree":
            return self.trees[0].predict(X)
        if self.kind == "random_forest":
            total = np.zeros(X.shape[0])
            for t in self.trees:
                total += t.predict(X)
            return total / len(self.trees)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return self.base_prediction + self.learning_rate * total

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "params": self.params,
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "base_prediction": self.base_prediction,
            "coefficients": None if self.coefficients is None else self.coefficients.tolist(),
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        coef = d.get("coefficients")
        return cls(
            kind=d["kind"],
            feature_names=tuple(d["feature_names"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            base_prediction=float(d["base_prediction"]),
            coefficients=None if coef is None else np.asarray(coef, dtype=np.float64),
            params=d.get("params", {}),
            seed=d.get("seed"),
            meta=d.get("meta", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        return cls.from_json(Path(path).read_text())


def _names(feature_names, p):
    return tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(p))


def _params_dict(params) -> dict:
    d = asdict(params)
    return {k: (float(v) if isinstance(v, float) else v) for k, v in d.items()}


def fit_single_tree(X, y, params: TreeParams = TreeParams(), feature_names=None,
                    seed: int = 0) -> EnsembleModel:
    from .tree import fit_regression_tree

    tree = fit_regression_tree(X, y, params, seed=seed)
    return EnsembleModel("single_tree", _names(feature_names, np.shape(X)[1]), [tree],
                         params=_params_dict(params), seed=seed)


def tree_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def fit_random_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0,
                      feature_names=None, n_jobs: int = 1) -> EnsembleModel:
    """Bagged trees with per-split feature subsampling; prediction is the tree mean.

    Each tree draws its bootstrap counts and feature-sampling seed from its own
    child SeedSequence, so the result does not depend on ``n_jobs``.
    """
    X, y, _ = _prepare(X, y)
    n = len(y)
    base_order = presort(X)
    base_vals = sorted_values(X, base_order)
    tp = params.tree_params()

    def one(ss: np.random.SeedSequence) -> Tree:
        rng = np.random.default_rng(ss)
        if params.bootstrap:
            w = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
            order, vals = restrict_order(base_order, base_vals, w)
        else:
            w = np.ones(n)
            order, vals = base_order.copy(), base_vals.copy()
        split_seed = int(rng.integers(0, 2**32))
        return fit_tree_presorted(X, y, w, order, vals, tp, split_seed)

    seeds = tree_seeds(seed, params.n_trees)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(s) for s in seeds]
    return EnsembleModel("random_forest", _names(feature_names, X.shape[1]), trees,
                         params=_params_dict(params), seed=seed)


def fit_gradient_boosting(X, y, params: GbtParams = GbtParams(), seed: int = 0,
                          feature_names=None, callback=None) -> EnsembleModel:
    """First-order boosting under squared loss.

    Starts from the target mean; every round fits a tree to the current
    residuals and adds it scaled by ``eta``.  ``callback(round, train_mse)``
    is invoked after each round.
    """
    X, y, _ = _prepare(X, y)
    n = len(y)
    base = float(y.mean())
    pred = np.full(n, base)
    order0 = presort(X)
    vals0 = sorted_values(X, order0)
    w = np.ones(n)
    tp = params.tree_params()
    trees = []
    total = np.zeros(n)
    for m in range(params.n_rounds):
        resid = y - pred
        tree = fit_tree_presorted(X, resid, w, order0.copy(), vals0.copy(), tp, seed)
        trees.append(tree)
        total += tree.predict(X)
        pred = base + params.eta * total
        if callback is not None:
            callback(m, float(np.mean((y - pred) ** 2)))
    return EnsembleModel("gradient_boosting", _names(feature_names, X.shape[1]), trees,
                         learning_rate=params.eta, base_prediction=base,
                         params=_params_dict(params), seed=seed)


def fit_linear_ols(X, y, feature_names=None) -> EnsembleModel:
    """Least squares with intercept via SVD.

    A rank-deficient design falls back to ridge with lambda = 1e-8 on the
    centered columns (intercept unpenalized); the fallback is recorded in
    ``meta``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    rank = int(np.linalg.matrix_rank(Xc)) if p else 0
    meta = {"rank": rank, "rank_deficient": rank < p, "n_rows": n}
    if rank < p:
        A = Xc.T @ Xc + OLS_RIDGE * np.eye(p)
        beta = np.linalg.solve(A, Xc.T @ (y - ym))
        meta["ridge_lambda"] = OLS_RIDGE
    else:
        beta, *_ = np.linalg.lstsq(Xc, y - ym, rcond=None)
    intercept = float(ym - xm @ beta)
    return EnsembleModel("linear", _names(feature_names, p), [], base_prediction=intercept,
                         coefficients=beta, meta=meta)


def fit_model(kind: str, X, y, params=None, seed: int = 0, feature_names=None,
              n_jobs: int = 1) -> EnsembleModel:
    if kind in ("rf", "random_forest"):
        return fit_random_forest(X, y, params or ForestParams(), seed, feature_names, n_jobs)
    if kind in ("gbt", "gradient_boosting"):
        return fit_gradient_boosting(X, y, params or GbtParams(), seed, feature_names)
    if kind in ("ols", "linear"):
        return fit_linear_ols(X, y, feature_names)
    if kind == "single_tree":
        return fit_single_tree(X, y, params or TreeParams(), feature_names, seed)
    raise ValueError(f"unknown model kind {kind!r}")


def params_from_dict(kind: str, d: dict):
    d = dict(d)
    if d.get("max_depth") is not None and isinstance(d["max_depth"], float) and math.isinf(d["max_depth"]):
        d["max_depth"] = None
    if kind in ("rf", "random_forest"):
        return ForestParams(**d)
    if kind in ("gbt", "gradient_boosting"):
        return GbtParams(**d)
    if kind == "single_tree":
        return TreeParams(**d)
    return None
