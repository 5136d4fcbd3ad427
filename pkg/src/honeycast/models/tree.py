"""Greedy least-squares regression trees (CART).

The builder presorts every feature once and grows the tree one level at a
time: a level is a single pass over each feature's sort order, so it costs
O(n * p), and the same presort serves every tree of a forest or boosting run.

Candidate thresholds are midpoints between consecutive distinct values.
Ties in split quality go to the lowest feature index, then the smallest
threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np

LEAF = -1
# relative tolerance (w.r.t. the node SSE) under which two gains are equal
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    ccp_alpha: float = 0.0
    # None or 1.0 -> all features; float in (0, 1) -> ceil(frac * p); int -> count
    feature_subsample: float | int | None = None

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 1:
            raise ValueError("min_samples_split must be >= 1")
        if self.ccp_alpha < 0:
            raise ValueError("ccp_alpha must be non-negative")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")

    def n_candidates(self, p: int) -> int:
        f = self.feature_subsample
        if f is None:
            return p
        if isinstance(f, (int, np.integer)) and not isinstance(f, bool):
            return int(min(max(f, 1), p))
        if not 0 < f <= 1:
            raise ValueError(f"feature_subsample fraction {f} not in (0, 1]")
        return int(min(max(math.ceil(f * p), 1), p))


class TreeNode(NamedTuple):
    """A node view: leaves have ``feature == -1``."""

    feature: int
    threshold: float
    left: int
    right: int
    value: float
    sse: float
    n_samples: float

    @property
    def is_leaf(self) -> bool:
        return self.feature == LEAF


@dataclass(eq=False)
class Tree:
    """Array-backed binary tree; node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    sse: np.ndarray
    n_samples: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def node(self, i: int) -> TreeNode:
        return TreeNode(int(self.feature[i]), float(self.threshold[i]), int(self.left[i]),
                        int(self.right[i]), float(self.value[i]), float(self.sse[i]),
                        float(self.n_samples[i]))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max()) if self.n_nodes else 0

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value)

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def to_dict(self) -> dict:
        return {
            "j": self.feature.tolist(),
            "s": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "c_m": self.value.tolist(),
            "sse": self.sse.tolist(),
            "n": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["j"], dtype=np.int64), np.asarray(d["s"], dtype=np.float64),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["c_m"], dtype=np.float64), np.asarray(d["sse"], dtype=np.float64),
                   np.asarray(d["n"], dtype=np.float64))

    def equals(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("feature", "threshold", "left", "right", "value", "sse", "n_samples"))


@nb.njit(cache=True, nogil=True)
def _predict(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        k = 0
        while feature[k] != -1:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


@nb.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        k = 0
        while feature[k] != -1:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = k
    return out


@nb.njit(cache=True, nogil=True)
def _build(X, y, w, order, vals, max_depth, min_split, min_leaf, n_try, seed):
    """Level-wise exact greedy growth.

    ``order[f]`` lists the sampled rows sorted by feature ``f`` and ``vals[f]``
    the matching values; both are never re-sorted, only compacted in place
    when enough rows have settled in leaves.  ``slot[r]`` is the position of
    row ``r``'s node within the current level (-1 once the row sits in a leaf).
    """
    p, m = order.shape
    n = X.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    sse = np.zeros(cap)
    nsamp = np.zeros(cap)

    slot = np.full(n, -1, dtype=np.int64)
    for k in range(m):
        slot[order[0, k]] = 0
    # targets and weights laid out like ``order`` keep the scans sequential
    ys = np.empty((p, m))
    ws = np.empty((p, m))
    for f in range(p):
        for k in range(m):
            r = order[f, k]
            ys[f, k] = y[r]
            ws[f, k] = w[r]
    feats = np.arange(p)
    subsample = n_try < p
    if subsample:
        np.random.seed(seed)

    m_act = m
    open_nodes = np.zeros(1, dtype=np.int64)
    n_open = 1
    n_nodes = 1
    depth = 0
    while n_open > 0:
        Wn = np.zeros(n_open)
        Sn = np.zeros(n_open)
        Qn = np.zeros(n_open)
        for k in range(m_act):
            r = order[0, k]
            i = slot[r]
            if i >= 0:
                Wn[i] += w[r]
                Sn[i] += w[r] * y[r]
        mean = Sn / Wn
        for k in range(m_act):
            r = order[0, k]
            i = slot[r]
            if i >= 0:
                d = y[r] - mean[i]
                Qn[i] += w[r] * d * d

        ok = np.zeros(n_open, dtype=np.bool_)
        cand = np.zeros((p, n_open), dtype=np.bool_)
        any_cand = np.zeros(p, dtype=np.bool_)
        tol = np.empty(n_open)
        for i in range(n_open):
            q = open_nodes[i]
            value[q] = mean[i]
            sse[q] = Qn[i]
            nsamp[q] = Wn[i]
            tol[i] = TIE_RTOL * Qn[i]
            if (max_depth >= 0 and depth >= max_depth) or Wn[i] < min_split \
                    or Wn[i] < 2 * min_leaf or Qn[i] <= 0.0:
                continue
            ok[i] = True
            if subsample:
                for a in range(n_try):
                    jj = a + np.random.randint(0, p - a)
                    t = feats[a]
                    feats[a] = feats[jj]
                    feats[jj] = t
                for a in range(n_try):
                    cand[feats[a], i] = True
                    any_cand[feats[a]] = True
            else:
                for f in range(p):
                    cand[f, i] = True
                    any_cand[f] = True

        # a split is taken when sl^2 * W / (wl * wr) beats the incumbent gain;
        # that gain is SSE_parent - SSE_left - SSE_right with targets centered
        # at the node mean, compared here without dividing
        best_gain = tol.copy()
        best_f = np.full(n_open, -1, dtype=np.int64)
        best_s = np.zeros(n_open)
        WL = np.zeros(n_open)
        SL = np.zeros(n_open)
        last = np.full(n_open, np.inf)
        for f in range(p):
            if not any_cand[f]:
                continue
            WL[:] = 0.0
            SL[:] = 0.0
            last[:] = np.inf
            cf = cand[f]
            for k in range(m_act):
                r = order[f, k]
                i = slot[r]
                if i < 0 or not cf[i]:
                    continue
                v = vals[f, k]
                wk = ws[f, k]
                if v > last[i]:
                    wl = WL[i]
                    wr = Wn[i] - wl
                    if wl >= min_leaf and wr >= min_leaf:
                        sl = SL[i]
                        lhs = sl * sl * Wn[i]
                        if lhs > (best_gain[i] + tol[i]) * (wl * wr) or \
                                (best_f[i] == -1 and lhs > tol[i] * (wl * wr)):
                            best_gain[i] = lhs / (wl * wr)
                            best_f[i] = f
                            s = 0.5 * (last[i] + v)
                            if not (s < v) or not (s >= last[i]):
                                s = last[i]
                            best_s[i] = s
                WL[i] += wk
                SL[i] += wk * (ys[f, k] - mean[i])
                last[i] = v

        new_open = np.empty(2 * n_open, dtype=np.int64)
        child = np.full(n_open, -1, dtype=np.int64)
        n_new = 0
        for i in range(n_open):
            if best_f[i] < 0:
                continue
            q = open_nodes[i]
            feature[q] = best_f[i]
            threshold[q] = best_s[i]
            left[q] = n_nodes
            right[q] = n_nodes + 1
            new_open[n_new] = n_nodes
            new_open[n_new + 1] = n_nodes + 1
            child[i] = n_new
            n_new += 2
            n_nodes += 2

        n_alive = 0
        for k in range(m_act):
            r = order[0, k]
            i = slot[r]
            if i < 0:
                continue
            f = best_f[i]
            if f < 0:
                slot[r] = -1
            else:
                slot[r] = child[i] if X[r, f] <= best_s[i] else child[i] + 1
                n_alive += 1

        if n_alive < m_act // 2:
            for f in range(p):
                a = 0
                for k in range(m_act):
                    r = order[f, k]
                    if slot[r] >= 0:
                        order[f, a] = r
                        vals[f, a] = vals[f, k]
                        ys[f, a] = ys[f, k]
                        ws[f, a] = ws[f, k]
                        a += 1
            m_act = n_alive

        open_nodes = new_open[:n_new]
        n_open = n_new
        depth += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], sse[:n_nodes], nsamp[:n_nodes])


@nb.njit(cache=True)
def _prune_mask(feature, left, right, sse, root_weight, alpha):
    """Keep-as-leaf flags of the smallest subtree minimizing R(T) + alpha * |leaves|."""
    n = feature.shape[0]
    cost = np.zeros(n)
    collapse = np.zeros(n, dtype=np.bool_)
    for i in range(n - 1, -1, -1):
        own = sse[i] / root_weight + alpha
        if feature[i] == -1:
            cost[i] = own
        else:
            sub = cost[left[i]] + cost[right[i]]
            if own <= sub + 1e-12 * abs(sub):
                cost[i] = own
                collapse[i] = True
            else:
                cost[i] = sub
    return collapse


def presort(X: np.ndarray) -> np.ndarray:
    """(p, n) row indices sorting each column; stable so equal values keep row order."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


def sorted_values(X: np.ndarray, order: np.ndarray) -> np.ndarray:
    """(p, n) column values laid out in presort order."""
    return np.take_along_axis(np.ascontiguousarray(X.T), order, axis=1)


def restrict_order(order: np.ndarray, vals: np.ndarray, weights: np.ndarray):
    """Drop zero-weight rows from a presort and its sorted values."""
    keep = weights[order] > 0
    m = int(keep[0].sum())
    return order[keep].reshape(-1, m), vals[keep].reshape(-1, m)


def cost_complexity_prune(tree: Tree, alpha: float) -> Tree:
    if alpha <= 0 or tree.n_nodes == 1:
        return tree
    collapse = _prune_mask(tree.feature, tree.left, tree.right, tree.sse,
                           float(tree.n_samples[0]), float(alpha))
    new_id = {}
    keep = []
    stack = [0]
    while stack:
        i = stack.pop()
        new_id[i] = len(keep)
        keep.append(i)
        if tree.feature[i] != LEAF and not collapse[i]:
            stack.append(int(tree.right[i]))
            stack.append(int(tree.left[i]))
    keep = np.asarray(keep)
    feat = tree.feature[keep].copy()
    lft = np.full(len(keep), LEAF, dtype=np.int64)
    rgt = np.full(len(keep), LEAF, dtype=np.int64)
    for pos, i in enumerate(keep):
        if feat[pos] != LEAF and collapse[i]:
            feat[pos] = LEAF
        if feat[pos] != LEAF:
            lft[pos] = new_id[int(tree.left[i])]
            rgt[pos] = new_id[int(tree.right[i])]
    thr = np.where(feat == LEAF, 0.0, tree.threshold[keep])
    return Tree(feat, thr, lft, rgt, tree.value[keep].copy(), tree.sse[keep].copy(),
                tree.n_samples[keep].copy(), dict(tree.meta))


def fit_tree_presorted(X, y, w, order, vals, params: TreeParams, seed: int = 0) -> Tree:
    """Fit on rows with positive weight; ``order`` and ``vals`` are compacted in place."""
    p = X.shape[1]
    depth = -1 if params.max_depth is None else int(params.max_depth)
    arrays = _build(X, y, w, order, vals, depth, float(params.min_samples_split),
                    float(params.min_samples_leaf), params.n_candidates(p),
                    int(seed) % (2**32))
    tree = Tree(*[a.copy() for a in arrays])
    return cost_complexity_prune(tree, params.ccp_alpha)


def _prepare(X, y, sample_weight=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, p) and aligned with y")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty matrix")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if (w < 0).any() or not (w > 0).any():
        raise ValueError("sample weights must be non-negative with a positive total")
    return X, y, w


def fit_regression_tree(X, y, params: TreeParams = TreeParams(), sample_weight=None,
                        seed: int = 0) -> Tree:
    """Greedy SSE-minimizing tree.

    Integer ``sample_weight`` values behave like repeated rows, which is how
    bootstrap resamples are fed in.
    """
    X, y, w = _prepare(X, y, sample_weight)
    order = presort(X)
    vals = sorted_values(X, order)
    if (w == 0).any():
        order, vals = restrict_order(order, vals, w)
    return fit_tree_presorted(X, y, w, order, vals, params, seed)


class Split(NamedTuple):
    feature: int
    threshold: float
    sse_left: float
    sse_right: float


def best_split(X, y, candidate_features=None, min_samples_leaf: int = 1) -> Split | None:
    """Best single split of the samples, or None when no split lowers the SSE."""
    X, y, w = _prepare(X, y)
    if len(y) < 2:
        return None
    p = X.shape[1]
    cols = list(range(p)) if candidate_features is None else sorted(candidate_features)
    Xs = np.ascontiguousarray(X[:, cols])
    stump = fit_regression_tree(Xs, y, TreeParams(max_depth=1, min_samples_leaf=min_samples_leaf))
    if stump.n_nodes == 1:
        return None
    j = int(stump.feature[0])
    return Split(cols[j], float(stump.threshold[0]), float(stump.sse[1]), float(stump.sse[2]))


def predict_tree(tree: Tree, x) -> float | np.ndarray:
    """Route by ``x[j] <= s`` to the left child; returns the leaf constant."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("predict_tree requires every feature value")
    out = tree.predict(x)
    return float(out[0]) if x.ndim == 1 else out
