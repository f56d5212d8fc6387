"""Histogram gradient-boosted regression trees of fixed depth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

from .linear import Underdetermined


@dataclass
class Tree:
    """Complete binary tree in heap layout.

    ``feature[k]``/``threshold[k]`` route a row right when ``x[feature] >
    threshold``; unsplit nodes carry ``threshold=inf`` so every row goes left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    leaf_value: np.ndarray

    @property
    def depth(self) -> int:
        return int(round(math.log2(self.leaf_value.shape[0])))

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            right = X[rows, self.feature[node]] > self.threshold[node]
            node = 2 * node + 1 + right
        return node - (self.leaf_value.shape[0] - 1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_value[self.apply(X)]


@dataclass
class TreeEnsembleModel:
    trees: list
    base_score: float
    learning_rate: float
    max_depth: int
    family: str = "gaussian"
    params: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def raw_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        raw = self.raw_predict(X)
        if self.family == "binomial":
            return np.clip(expit(raw), 1e-12, 1 - 1e-12)
        return raw

    predict_proba = predict


def _bin_edges(X: np.ndarray, max_bins: int) -> list:
    edges = []
    qs = np.linspace(0, 1, max_bins + 1)[1:-1]
    for j in range(X.shape[1]):
        e = np.unique(np.quantile(X[:, j], qs, method="lower"))
        # a threshold equal to the column max would never split
        edges.append(e[e < X[:, j].max()])
    return edges


@njit(cache=True)
def _grow_tree(Xb, rows, g, h, depth, min_leaf, reg_lambda, n_bins, n_edges):
    """Grow one tree level-wise on binned data from gradient/hessian sums.

    ``g`` is the negative gradient. Returns the split feature and split bin
    per inner node (bin -1: unsplit, every row goes left) and the Newton leaf
    values ``sum(g) / (sum(h) + reg_lambda)``.
    """
    m = rows.shape[0]
    p = Xb.shape[1]
    n_inner = 2 ** depth - 1
    feature = np.zeros(n_inner, dtype=np.int64)
    split_bin = np.full(n_inner, -1, dtype=np.int64)
    node = np.zeros(m, dtype=np.int64)
    for level in range(depth):
        first = 2 ** level - 1
        n_nodes = 2 ** level
        G = np.zeros((n_nodes, p, n_bins))
        H = np.zeros((n_nodes, p, n_bins))
        C = np.zeros((n_nodes, p, n_bins), dtype=np.int64)
        for i in range(m):
            k = node[i] - first
            r = rows[i]
            for j in range(p):
                b = Xb[r, j]
                G[k, j, b] += g[i]
                H[k, j, b] += h[i]
                C[k, j, b] += 1
        for k in range(n_nodes):
            gt = 0.0
            ht = 0.0
            ct = 0
            for b in range(n_bins):
                gt += G[k, 0, b]
                ht += H[k, 0, b]
                ct += C[k, 0, b]
            if ct < 2 * min_leaf:
                continue
            parent = gt * gt / (ht + reg_lambda)
            best = 1e-12
            for j in range(p):
                gl = 0.0
                hl = 0.0
                cl = 0
                for b in range(n_edges[j]):
                    gl += G[k, j, b]
                    hl += H[k, j, b]
                    cl += C[k, j, b]
                    cr = ct - cl
                    if cl < min_leaf or cr < min_leaf:
                        continue
                    gr = gt - gl
                    hr = ht - hl
                    gain = gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent
                    if gain > best:
                        best = gain
                        feature[first + k] = j
                        split_bin[first + k] = b
        for i in range(m):
            k = node[i]
            right = 0
            if split_bin[k] >= 0 and Xb[rows[i], feature[k]] > split_bin[k]:
                right = 1
            node[i] = 2 * k + 1 + right
    n_leaves = n_inner + 1
    Gs = np.zeros(n_leaves)
    Hs = np.zeros(n_leaves)
    for i in range(m):
        leaf = node[i] - n_inner
        Gs[leaf] += g[i]
        Hs[leaf] += h[i]
    values = np.zeros(n_leaves)
    for leaf in range(n_leaves):
        if Hs[leaf] > 0:
            values[leaf] = Gs[leaf] / (Hs[leaf] + reg_lambda)
    return feature, split_bin, values


@njit(cache=True)
def _apply_binned(Xb, feature, split_bin, depth):
    n = Xb.shape[0]
    out = np.empty(n, dtype=np.int64)
    n_inner = 2 ** depth - 1
    for i in range(n):
        k = 0
        for _ in range(depth):
            right = 0
            if split_bin[k] >= 0 and Xb[i, feature[k]] > split_bin[k]:
                right = 1
            k = 2 * k + 1 + right
        out[i] = k - n_inner
    return out


def fit_gbt(X, y, family: str = "gaussian", trees: int = 200, depth: int = 3, rate: float = 0.05,
            subsample: float = 0.8, seed: int = 0, min_leaf: int = 5, max_bins: int = 64,
            reg_lambda: float = 0.0) -> TreeEnsembleModel:
    """Stagewise gradient boosting on squared (gaussian) or logistic (binomial) loss.

    Deterministic given ``seed``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 20:
        raise Underdetermined("gradient boosting needs at least 20 observations")
    params = dict(trees=trees, depth=depth, rate=rate, subsample=subsample, seed=seed)
    if family == "binomial":
        m = min(max(y.mean(), 1e-6), 1 - 1e-6)
        base = math.log(m / (1 - m))
        lam = max(reg_lambda, 1e-6)
    elif family == "gaussian":
        base = float(y.mean())
        lam = reg_lambda
    else:
        raise ValueError(f"unknown family {family!r}")
    model = TreeEnsembleModel([], base, rate, depth, family, params)
    if trees == 0 or p == 0:
        return model

    edges = _bin_edges(X, max_bins)
    n_bins = max(len(e) for e in edges) + 1
    Xb = np.column_stack([np.searchsorted(edges[j], X[:, j], side="left") for j in range(p)]).astype(np.int64)
    n_edges = np.array([len(e) for e in edges], dtype=np.int64)
    rng = np.random.default_rng(seed)
    raw = np.full(n, base)
    m_sub = max(min_leaf * 2, int(round(subsample * n)))
    for _ in range(trees):
        rows = np.sort(rng.choice(n, size=m_sub, replace=False)) if m_sub < n else np.arange(n)
        if family == "binomial":
            mu = expit(raw[rows])
            g = y[rows] - mu
            h = mu * (1 - mu)
        else:
            g = y[rows] - raw[rows]
            h = np.ones(rows.shape[0])
        feat, sbin, vals = _grow_tree(Xb, rows, g, h, depth, min_leaf, lam, n_bins, n_edges)
        thr = np.array([edges[f][b] if b >= 0 else np.inf for f, b in zip(feat, sbin)])
        model.trees.append(Tree(feat, thr, vals))
        raw += rate * vals[_apply_binned(Xb, feat, sbin, depth)]
    return model
