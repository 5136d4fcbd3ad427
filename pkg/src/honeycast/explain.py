"""Impurity, permutation and Shapley-value attributions for fitted models.

Shapley values use the interventional value function

    v(S) = mean_b f(x_S, b_{not S})

over a background sample b, so a feature the model ignores gets exactly
zero and the attributions of a row add up to f(x) - mean_b f(b).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .models import EnsembleModel


class UnsupportedMethod(ValueError):
    pass


@dataclass
class ShapConfig:
    background_size: int = 100
    exact_max_features: int = 15
    mc_samples: int = 2048
    seed: int = 0
    allow_sampling: bool = True

    def __post_init__(self):
        if self.background_size < 1:
            raise ValueError("background must be non-empty")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be >= 2")


@dataclass
class Explanation:
    method: str
    feature_names: tuple[str, ...]
    scores: np.ndarray | None = None
    std: np.ndarray | None = None
    phi: np.ndarray | None = None
    phi_se: np.ndarray | None = None
    rows: np.ndarray | None = None
    baseline: float | None = None
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, map(float, self.scores)))

    def ranking(self) -> list[str]:
        """Features by descending score; ties keep feature order."""
        order = np.argsort(-np.asarray(self.scores), kind="stable")
        return [self.feature_names[i] for i in order]

    def importance_frame(self) -> pd.DataFrame:
        std = self.std if self.std is not None else np.zeros(len(self.feature_names))
        return pd.DataFrame({"method": self.method, "feature": list(self.feature_names),
                             "score": self.scores, "std": std})


def _predictor(model) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model, EnsembleModel):
        return model.predict
    if callable(model):
        return lambda X: np.asarray(model(X), dtype=np.float64)
    raise TypeError("model must be an EnsembleModel or a callable on a 2-D array")


# ------------------------------------------------------------------ impurity

def impurity_importance(model: EnsembleModel) -> Explanation:
    """Mean decrease in SSE per feature.

    Within a tree every split contributes (SSE_parent - SSE_left - SSE_right)
    divided by the root sample count; tree totals are normalized, averaged
    over trees and normalized again.
    """
    if not model.is_tree_based:
        raise UnsupportedMethod("impurity importance needs a tree-based model")
    p = len(model.feature_names)
    acc = np.zeros(p)
    for t in model.trees:
        imp = np.zeros(p)
        internal = np.flatnonzero(t.feature >= 0)
        gain = t.sse[internal] - t.sse[t.left[internal]] - t.sse[t.right[internal]]
        np.add.at(imp, t.feature[internal], np.maximum(gain, 0.0) / t.n_samples[0])
        total = imp.sum()
        if total > 0:
            acc += imp / total
    acc /= max(len(model.trees), 1)
    s = acc.sum()
    scores = acc / s if s > 0 else acc
    return Explanation("impurity", model.feature_names, scores=scores,
                       metadata={"n_trees": model.n_trees, "kind": model.kind})


# --------------------------------------------------------------- permutation

def permutation_importance(model, X, y, n_repeats: int = 10, seed: int = 0,
                           feature_names: Sequence[str] | None = None) -> Explanation:
    """Increase in MSE when one column is shuffled; mean and std over repeats."""
    f = _predictor(model)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    names = tuple(feature_names) if feature_names is not None else getattr(
        model, "feature_names", tuple(f"x{i}" for i in range(p)))
    base = float(np.mean((y - f(X)) ** 2))
    rng = np.random.default_rng(seed)
    deltas = np.zeros((n_repeats, p))
    Xp = X.copy()
    for r in range(n_repeats):
        for j in range(p):
            Xp[:, j] = X[rng.permutation(n), j]
            deltas[r, j] = float(np.mean((y - f(Xp)) ** 2)) - base
            Xp[:, j] = X[:, j]
    return Explanation("permutation", names, scores=deltas.mean(axis=0), std=deltas.std(axis=0),
                       metadata={"seed": seed, "n_repeats": n_repeats, "baseline_mse": base,
                                 "n_rows": n})


# ---------------------------------------------------------------------- shap

def sample_background(X, size: int = 100, seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("background must be non-empty")
    if len(X) <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(len(X), size=size, replace=False))
    return X[idx]


def shapley_weights(K: int) -> np.ndarray:
    """w[s] = s! (K - s - 1)! / K! for coalition size s."""
    return np.array([math.factorial(s) * math.factorial(K - s - 1) / math.factorial(K)
                     for s in range(K)])


def _coalition_values(f, x, background, masks, chunk_rows=2_000_000):
    B, K = background.shape
    out = np.empty(len(masks))
    step = max(1, chunk_rows // B)
    for a in range(0, len(masks), step):
        m = masks[a:a + step]
        H = np.where(m[:, None, :], x[None, None, :], background[None, :, :])
        out[a:a + step] = f(H.reshape(-1, K)).reshape(len(m), B).mean(axis=1)
    return out


def exact_shap(f, x, background) -> np.ndarray:
    """Enumerate all 2^K coalitions."""
    K = background.shape[1]
    codes = np.arange(2**K)
    masks = ((codes[:, None] >> np.arange(K)) & 1).astype(bool)
    v = _coalition_values(f, x, background, masks)
    size = masks.sum(axis=1)
    w = shapley_weights(K)
    phi = np.zeros(K)
    for i in range(K):
        without = codes[~masks[:, i]]
        phi[i] = np.sum(w[size[without]] * (v[without | (1 << i)] - v[without]))
    return phi


def sampled_shap(f, x, background, n_samples: int, rng, chunk_rows=1_000_000):
    """Permutation sampling over (ordering, background row) pairs.

    Orderings come in antithetic pairs (an ordering and its reverse) sharing
    one background row; background rows are dealt in a shuffled cycle.  Each
    sample walks its ordering from the background row to x, crediting every
    feature with the change in f when it switches.  Returns the estimate and
    its standard error computed over pair means.
    """
    B, K = background.shape
    n_pairs = max(1, n_samples // 2)
    cycle = rng.permutation(B)
    contrib = np.zeros((n_pairs, K))
    step = max(1, chunk_rows // (2 * (K + 1)))
    steps = np.arange(K + 1)[None, :, None]
    for a in range(0, n_pairs, step):
        m = min(step, n_pairs - a)
        perms = np.argsort(rng.random((m, K)), axis=1)
        orders = np.concatenate([perms, perms[:, ::-1]])
        bg = background[cycle[(a + np.arange(m)) % B]]
        bg = np.concatenate([bg, bg])
        inv = np.argsort(orders, axis=1)
        # after s steps of ordering q, feature j comes from x iff its position is < s
        switched = inv[:, None, :] < steps
        H = np.where(switched, x[None, None, :], bg[:, None, :])
        vals = f(H.reshape(-1, K)).reshape(2 * m, K + 1)
        delta = np.diff(vals, axis=1)
        c = np.zeros((2 * m, K))
        np.put_along_axis(c, orders, delta, axis=1)
        contrib[a:a + m] = 0.5 * (c[:m] + c[m:])
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / math.sqrt(n_pairs) if n_pairs > 1 else np.full(K, np.inf)
    total_se = (contrib.sum(axis=1).std(ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else np.inf
    return phi, se, total_se


def shap_values(model, X, background, config: ShapConfig = ShapConfig(),
                method: str = "auto", feature_names: Sequence[str] | None = None) -> Explanation:
    """Shapley values for each row of ``X`` against ``background``.

    ``method`` is ``auto`` (exact when K <= exact_max_features, else sampled
    if allowed), ``exact`` or ``sampled``.
    """
    f = _predictor(model)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if len(background) == 0:
        raise ValueError("background must be non-empty")
    K = X.shape[1]
    if background.shape[1] != K:
        raise ValueError("background and rows must have the same columns")
    if method == "auto":
        if K <= config.exact_max_features:
            method = "exact"
        elif config.allow_sampling:
            method = "sampled"
        else:
            raise UnsupportedMethod(
                f"{K} features exceed exact_max_features={config.exact_max_features} "
                "and sampling is disabled")
    if method == "exact" and K > config.exact_max_features:
        raise UnsupportedMethod(f"exact path limited to {config.exact_max_features} features")
    names = tuple(feature_names) if feature_names is not None else getattr(
        model, "feature_names", tuple(f"x{i}" for i in range(K)))
    baseline = float(f(background).mean())
    phi = np.zeros_like(X)
    se = None
    meta = {"method": method, "background_size": len(background), "seed": config.seed,
            "n_features": K}
    if method == "exact":
        for r, x in enumerate(X):
            phi[r] = exact_shap(f, x, background)
    elif method == "sampled":
        se = np.zeros_like(X)
        sum_se = np.zeros(len(X))
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(len(X))]
        for r, x in enumerate(X):
            phi[r], se[r], sum_se[r] = sampled_shap(f, x, background, config.mc_samples, rngs[r])
        meta.update(mc_samples=config.mc_samples, sum_se=sum_se.tolist())
    else:
        raise ValueError(f"unknown method {method!r}")
    return Explanation("shap", names, phi=phi, phi_se=se, rows=X, baseline=baseline, metadata=meta)


def shap_global_summary(explanation: Explanation) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Ranking by mean |phi| (ties by feature order) and the long signed table."""
    phi = explanation.phi
    mean_abs = np.abs(phi).mean(axis=0)
    order = np.argsort(-mean_abs, kind="stable")
    names = explanation.feature_names
    ranking = pd.DataFrame({
        "rank": np.arange(1, len(order) + 1),
        "feature": [names[i] for i in order],
        "mean_abs_phi": mean_abs[order],
    })
    n, K = phi.shape
    long = pd.DataFrame({
        "row_id": np.repeat(np.arange(n), K),
        "feature": np.tile(np.array(names, dtype=object), n),
        "phi": phi.ravel(),
        "feature_value": explanation.rows.ravel(),
    })
    return ranking, long


def shap_importance(explanation: Explanation) -> Explanation:
    """Collapse per-row values to mean |phi| scores."""
    return Explanation("shap", explanation.feature_names,
                       scores=np.abs(explanation.phi).mean(axis=0),
                       std=np.abs(explanation.phi).std(axis=0),
                       baseline=explanation.baseline, metadata=dict(explanation.metadata))


def write_importance_csv(explanations: Sequence[Explanation], path) -> None:
    frames = [e.importance_frame() for e in explanations]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g")


def write_shap_csv(explanation: Explanation, path) -> None:
    _, long = shap_global_summary(explanation)
    with open(path, "w", newline="") as fh:
        fh.write(f"# baseline={explanation.baseline!r}\n")
        long.to_csv(fh, index=False, float_format="%.17g")


def read_shap_csv(path) -> tuple[float, pd.DataFrame]:
    with open(path) as fh:
        first = fh.readline()
    baseline = float(first.split("=", 1)[1])
    return baseline, pd.read_csv(path, comment="#", float_precision="round_trip")
