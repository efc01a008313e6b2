"""Gradient-boosted regression trees for squared error.

Features are bucketed once into at most 64 quantile bins.  Trees grow level by
level: one pass over the samples fills the gradient histograms of every open
node, then each node takes the split with the largest variance reduction that
leaves at least ``min_leaf`` samples on each side.  A split on bin ``b`` sends
``x <= cut[b]`` left, so raw-valued prediction reproduces the binned training
partition exactly.
"""

from __future__ import annotations

import numba
import numpy as np

MAX_BINS = 64


def quantile_cuts(X: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    cuts = []
    qs = np.linspace(0, 1, max_bins + 1)[1:-1]
    for j in range(X.shape[1]):
        col = X[:, j]
        u = np.unique(col)
        if u.size <= max_bins:
            c = u[:-1]
        else:
            c = np.unique(np.quantile(col, qs, method="lower"))
            c = c[c < u[-1]]
        cuts.append(c.astype(float))
    return cuts


def bin_features(X: np.ndarray, cuts: list[np.ndarray]) -> np.ndarray:
    B = np.empty(X.shape, dtype=np.uint8)
    for j, c in enumerate(cuts):
        B[:, j] = np.searchsorted(c, X[:, j], side="left")
    return B


@numba.njit(cache=True)
def _histograms(binned, resid, node, rowmap, n_rows, n_bins):
    # residual sum and count share a cache line: hist[..., 0] and hist[..., 1]
    n, F = binned.shape
    hist = np.zeros((n_rows, F, n_bins, 2))
    for i in range(n):
        if node[i] < 0:
            continue
        k = rowmap[node[i]]
        if k < 0:
            continue
        r = resid[i]
        for f in range(F):
            b = binned[i, f]
            hist[k, f, b, 0] += r
            hist[k, f, b, 1] += 1.0
    return hist


@numba.njit(cache=True)
def _children(hist, part, parents, small, big, n_next):
    child = np.empty((n_next,) + hist.shape[1:])
    for j in range(parents.shape[0]):
        child[small[j]] = part[j]
        child[big[j]] = hist[parents[j]] - part[j]
    return child


@numba.njit(cache=True)
def _best_splits(hist, n_cuts, min_leaf):
    n_open, F, _, _ = hist.shape
    best_f = np.full(n_open, -1, dtype=np.int64)
    best_b = np.zeros(n_open, dtype=np.int64)
    for k in range(n_open):
        tot_g = 0.0
        tot_n = 0.0
        for b in range(n_cuts[0] + 1):
            tot_g += hist[k, 0, b, 0]
            tot_n += hist[k, 0, b, 1]
        if tot_n < 2 * min_leaf:
            continue
        parent = tot_g * tot_g / tot_n
        best = 1e-12 * abs(parent) + 0.0
        for f in range(F):
            gl = 0.0
            nl = 0.0
            for b in range(n_cuts[f]):
                gl += hist[k, f, b, 0]
                nl += hist[k, f, b, 1]
                nr = tot_n - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                gr = tot_g - gl
                gain = gl * gl / nl + gr * gr / nr - parent
                if gain > best:
                    best = gain
                    best_f[k] = f
                    best_b[k] = b
    return best_f, best_b


@numba.njit(cache=True)
def _route(binned, node, split_f, split_b, child_base, open_gid):
    # open slot k splits into slots child_base[k] and child_base[k] + 1 of the
    # next level; a closed slot stores -1 - (global leaf id)
    for i in range(node.shape[0]):
        k = node[i]
        if k < 0:
            continue
        c = child_base[k]
        if c < 0:
            node[i] = -1 - open_gid[k]
            continue
        if binned[i, split_f[k]] <= split_b[k]:
            node[i] = c
        else:
            node[i] = c + 1


@numba.njit(cache=True)
def _predict(X, feat, thr, left, value, roots, out):
    # tree-major so one tree's nodes stay in cache; each row still sums its
    # leaves in tree order, which keeps results independent of the batch
    n = X.shape[0]
    out[:] = 0.0
    for t in range(roots.shape[0]):
        r = roots[t]
        for i in range(n):
            j = r
            while feat[j] >= 0:
                # siblings are adjacent (right == left + 1), so step without a branch
                j = left[j] + np.int64(not X[i, feat[j]] <= thr[j])
            out[i] += value[j]


class GbtModel:
    family = "gbt"

    def __init__(self, n_trees: int = 300, max_depth: int = 10, learning_rate: float = 0.1,
                 min_leaf: int = 5) -> None:
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.learning_rate = float(learning_rate)
        self.min_leaf = int(min_leaf)
        self.base = 0.0
        self.feat = np.zeros(0, np.int64)
        self.thr = np.zeros(0)
        self.left = np.zeros(0, np.int64)
        self.right = np.zeros(0, np.int64)
        self.value = np.zeros(0)
        self.roots = np.zeros(0, np.int64)
        self.train_loss: list[float] = []

    def fit(self, X, y, X_val=None, y_val=None, seed: int = 0) -> "GbtModel":
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        cuts = quantile_cuts(X)
        n_cuts = np.array([c.size for c in cuts], dtype=np.int64)
        binned = bin_features(X, cuts)
        nb = int(n_cuts.max()) + 1 if n_cuts.size else 1
        self.base = float(y.mean())
        pred = np.full(y.shape[0], self.base)
        feat, thr, left, right, value, roots = [], [], [], [], [], []
        self.train_loss = [float(np.mean((y - pred) ** 2))]
        for _ in range(self.n_trees):
            resid = y - pred
            root = len(feat)
            roots.append(root)
            node = np.zeros(y.shape[0], dtype=np.int64)
            open_ids = [root]  # global node id of each open slot
            feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1); value.append(0.0)
            hist = _histograms(binned, resid, node, np.zeros(1, np.int64), 1, nb)
            for depth in range(self.max_depth + 1):
                n_open = len(open_ids)
                if depth < self.max_depth:
                    sf, sb = _best_splits(hist, n_cuts, self.min_leaf)
                else:
                    sf = np.full(n_open, -1, dtype=np.int64)
                    sb = np.zeros(n_open, dtype=np.int64)
                child_base = np.full(n_open, -1, dtype=np.int64)
                cum = np.cumsum(hist[np.arange(n_open), np.maximum(sf, 0), :, 1], axis=1)
                n_le = cum[np.arange(n_open), sb]
                n_all = cum[:, -1]
                nxt = []
                parents, small, big = [], [], []
                for k, gid in enumerate(open_ids):
                    if sf[k] < 0:
                        continue
                    f, b = int(sf[k]), int(sb[k])
                    feat[gid] = f
                    thr[gid] = float(cuts[f][b])
                    c = child_base[k] = len(nxt)
                    nxt += [len(feat), len(feat) + 1]
                    left[gid], right[gid] = nxt[-2], nxt[-1]
                    for _side in range(2):
                        feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1); value.append(0.0)
                    n_left = n_le[k]
                    n_right = n_all[k] - n_left
                    parents.append(k)
                    small.append(c if n_left <= n_right else c + 1)
                    big.append(c + 1 if n_left <= n_right else c)
                _route(binned, node, sf, sb, child_base, np.array(open_ids, dtype=np.int64))
                if not nxt or depth == self.max_depth:
                    break
                # build the smaller child of each split; its sibling is parent minus it
                rowmap = np.full(len(nxt), -1, dtype=np.int64)
                rowmap[small] = np.arange(len(small))
                part = _histograms(binned, resid, node, rowmap, len(small), nb)
                hist = _children(hist, part, np.array(parents), np.array(small), np.array(big), len(nxt))
                open_ids = nxt
            leaf = -1 - node - root
            n_nodes = len(feat) - root
            sums = np.bincount(leaf, weights=resid, minlength=n_nodes)
            counts = np.bincount(leaf, minlength=n_nodes)
            is_leaf = np.array(feat[root:]) < 0
            leaf_values = np.where(is_leaf & (counts > 0), self.learning_rate * sums / np.maximum(counts, 1), 0.0)
            value[root:] = leaf_values.tolist()
            pred = pred + leaf_values[leaf]
            self.train_loss.append(float(np.mean((y - pred) ** 2)))
        self._set(feat, thr, left, right, value, roots)
        return self

    def _set(self, feat, thr, left, right, value, roots) -> None:
        self.feat = np.array(feat, dtype=np.int64)
        self.thr = np.array(thr, dtype=float)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=float)
        self.roots = np.array(roots, dtype=np.int64)
        inner = self.feat >= 0
        if not np.array_equal(self.right[inner], self.left[inner] + 1):
            raise ValueError("tree children must be stored as adjacent left/right pairs")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty(X.shape[0])
        _predict(X, self.feat, self.thr, self.left, self.value, self.roots, out)
        return out + self.base

    def state(self) -> dict:
        return {
            "hyper": [self.n_trees, self.max_depth, self.learning_rate, self.min_leaf],
            "base": self.base, "feat": self.feat, "thr": self.thr, "left": self.left,
            "right": self.right, "value": self.value, "roots": self.roots,
            "train_loss": np.array(self.train_loss),
        }

    @classmethod
    def from_state(cls, s: dict) -> "GbtModel":
        n, d, lr, ml = s["hyper"]
        m = cls(int(n), int(d), float(lr), int(ml))
        m.base = float(s["base"])
        m._set(s["feat"], s["thr"], s["left"], s["right"], s["value"], s["roots"])
        m.train_loss = [float(v) for v in s["train_loss"]]
        return m
