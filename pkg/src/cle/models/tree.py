"""CART decision trees (Gini impurity) and bagged random forests.

Features are pre-binned: every column gets up to ``max_bins - 1`` candidate
thresholds at midpoints between its distinct training values, so split search
at a node is one histogram over (feature, bin, class).
"""
import heapq
import math

import numpy as np
import scipy.sparse as sp

from ..errors import SingleClass
from .base import BlackBoxModel
from .featurize import featurizer_for, gold_key

MAX_BINS = 32


def gini(counts):
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - p @ p)


def gini_gain(parent, left, right):
    """Impurity decrease of a split, children weighted by their share of rows."""
    n = float(np.sum(parent))
    nl, nr = float(np.sum(left)), float(np.sum(right))
    return gini(parent) - (nl / n) * gini(left) - (nr / n) * gini(right)


def make_thresholds(X, max_bins=MAX_BINS):
    thresholds = []
    for j in range(X.shape[1]):
        u = np.unique(X[:, j])
        mids = (u[:-1] + u[1:]) / 2.0
        if mids.size > max_bins - 1:
            mids = np.unique(np.quantile(mids, np.linspace(0, 1, max_bins - 1)))
        thresholds.append(mids)
    return thresholds


def bin_codes(X, thresholds):
    """code = number of thresholds strictly below x; x <= t_k  <=>  code <= k."""
    codes = np.zeros(X.shape, dtype=np.uint8)
    for j, t in enumerate(thresholds):
        if t.size:
            codes[:, j] = np.searchsorted(t, X[:, j], side="left")
    return codes


class _Grower:
    def __init__(self, codes, thresholds, y, n_classes, max_depth=None,
                 max_features=None, max_distinct_features=None, rng=None):
        self.codes = codes
        self.thresholds = thresholds
        self.n_thr = np.array([t.size for t in thresholds])
        self.y = y
        self.k = n_classes
        self.max_depth = max_depth
        self.max_features = max_features
        self.budget = max_distinct_features
        self.rng = rng
        self.used = []
        self.nodes = []  # [feature, threshold, left, right, counts, depth]
        self._offsets = (np.arange(codes.shape[1], dtype=np.int64) * MAX_BINS)[None, :]
        self._bin_index = np.arange(MAX_BINS - 1)[None, :]

    def _candidates(self, restrict=None):
        m = self.codes.shape[1]
        if restrict is not None:
            feats = np.array(sorted(restrict), dtype=np.int64)
        elif self.max_features is not None and self.max_features < m:
            feats = np.sort(self.rng.choice(m, self.max_features, replace=False))
        else:
            feats = np.arange(m)
        return feats[self.n_thr[feats] > 0]

    def best_split(self, idx, restrict=None):
        feats = self._candidates(restrict)
        if feats.size == 0:
            return None
        B, F, c = MAX_BINS, feats.size, self.k
        y = self.y[idx]
        key = (self._offsets[:, :F] + self.codes[np.ix_(idx, feats)]) * c + y[:, None]
        hist = np.bincount(key.ravel(), minlength=F * B * c).reshape(F, B, c)
        left = np.cumsum(hist, axis=1)[:, :-1, :].astype(np.float64)
        total = np.bincount(y, minlength=c).astype(np.float64)
        right = total - left
        ones = np.ones(c)
        nl = left @ ones
        nr = float(len(idx)) - nl
        valid = (nl > 0) & (nr > 0) & (self._bin_index < self.n_thr[feats][:, None])
        if not valid.any():
            return None
        score = (np.divide((left * left) @ ones, nl, out=np.zeros_like(nl), where=valid)
                 + np.divide((right * right) @ ones, nr, out=np.zeros_like(nr), where=valid))
        score[~valid] = -np.inf
        flat = int(np.argmax(score))  # first maximum: lowest feature, then threshold
        fi, k = divmod(flat, B - 1)
        n = float(len(idx))
        gain = (n - total @ total / n) - (n - score[fi, k])
        # gain is in "row-weighted Gini" units: n * impurity decrease
        return float(gain), int(feats[fi]), int(k)

    def grow(self, idx):
        heap = []
        order = 0

        def push(node_id, idx, depth):
            nonlocal order
            counts = np.bincount(self.y[idx], minlength=self.k)
            self.nodes.append([-1, 0.0, -1, -1, counts, depth])
            if counts.max() == len(idx) or len(idx) < 2:
                return
            if self.max_depth is not None and depth >= self.max_depth:
                return
            split = self._allowed_split(idx)
            if split is not None:
                heapq.heappush(heap, (-split[0], order, len(self.nodes) - 1, idx, split))
                order += 1

        push(0, idx, 0)
        while heap:
            _, _, nid, idx, (gain, f, k) = heapq.heappop(heap)
            if self.budget is not None and f not in self.used and len(self.used) >= self.budget:
                split = self._allowed_split(idx)
                if split is not None:
                    heapq.heappush(heap, (-split[0], order, nid, idx, split))
                    order += 1
                continue
            if f not in self.used:
                self.used.append(f)
            go_left = self.codes[idx, f] <= k
            node = self.nodes[nid]
            node[0], node[1] = f, float(self.thresholds[f][k])
            depth = node[5] + 1
            node[2] = len(self.nodes)
            push(None, idx[go_left], depth)
            node[3] = len(self.nodes)
            push(None, idx[~go_left], depth)
        return self._arrays()

    def _allowed_split(self, idx):
        if self.budget is not None and len(self.used) >= self.budget:
            if not self.used:
                return None
            return self.best_split(idx, restrict=self.used)
        return self.best_split(idx)

    def _arrays(self):
        feature = np.array([n[0] for n in self.nodes], dtype=np.int64)
        threshold = np.array([n[1] for n in self.nodes])
        left = np.array([n[2] for n in self.nodes], dtype=np.int64)
        right = np.array([n[3] for n in self.nodes], dtype=np.int64)
        counts = np.array([n[4] for n in self.nodes], dtype=np.float64)
        return Tree(feature, threshold, left, right, counts)


class Tree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.counts = counts

    @property
    def depth(self):
        d = np.zeros(self.feature.size, dtype=np.int64)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def used_features(self):
        return sorted(set(int(f) for f in self.feature if f >= 0))

    def leaves(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = X[r, f[inner]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])

    def proba(self, X):
        c = self.counts[self.leaves(X)]
        return c / c.sum(axis=1, keepdims=True)

    def vote(self, X):
        return self.counts[self.leaves(X)].argmax(axis=1)


def _dense_columns(X, columns):
    sub = X[:, columns]
    return sub.toarray() if sp.issparse(sub) else np.asarray(sub, dtype=np.float64)


class TreeModel(BlackBoxModel):
    def __init__(self, featurizer, tree, classes):
        self.featurizer = featurizer
        self.modality = featurizer.modality
        self.classes = list(classes)
        self.used = tree.used_features()
        remap = {f: i for i, f in enumerate(self.used)}
        feature = np.array([remap.get(int(f), -1) for f in tree.feature], dtype=np.int64)
        self.tree = Tree(feature, tree.threshold, tree.left, tree.right, tree.counts)
        self.full_tree = tree

    def _predict_proba(self, instances):
        X = _dense_columns(self.featurizer.transform(instances), self.used) if self.used \
            else np.zeros((len(instances), 0))
        return self.tree.proba(X)

    def gold_features(self):
        keys = []
        for f in self.used:
            key = gold_key(self.featurizer, f)
            if key not in keys:
                keys.append(key)
        return keys


class ForestModel(BlackBoxModel):
    """Probability of a class = fraction of trees voting for it."""

    def __init__(self, featurizer, trees, classes):
        self.featurizer = featurizer
        self.modality = featurizer.modality
        self.classes = list(classes)
        self.used = sorted(set().union(*(t.used_features() for t in trees)))
        remap = {f: i for i, f in enumerate(self.used)}
        self._raw_trees = trees
        self.trees = [Tree(np.array([remap.get(int(f), -1) for f in t.feature], dtype=np.int64),
                           t.threshold, t.left, t.right, t.counts) for t in trees]

    def _predict_proba(self, instances):
        X = _dense_columns(self.featurizer.transform(instances), self.used) if self.used \
            else np.zeros((len(instances), 0))
        votes = np.zeros((len(instances), len(self.classes)))
        rows = np.arange(len(instances))
        for t in self.trees:
            votes[rows, t.vote(X)] += 1.0
        return votes / len(self.trees)


def _prepare(dataset, featurizer):
    train = dataset.split("train")
    y = train.label_ids()
    if np.unique(y).size < 2:
        raise SingleClass("training split contains a single class")
    featurizer = featurizer or featurizer_for(dataset)
    X = featurizer.transform(train.instances)
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    thresholds = make_thresholds(X)
    return featurizer, X, bin_codes(X, thresholds), thresholds, y


def train_tree(dataset, max_distinct_features=None, max_depth=None, featurizer=None):
    featurizer, X, codes, thresholds, y = _prepare(dataset, featurizer)
    grower = _Grower(codes, thresholds, y, len(dataset.classes), max_depth=max_depth,
                     max_distinct_features=max_distinct_features)
    tree = grower.grow(np.arange(len(y)))
    return TreeModel(featurizer, tree, dataset.classes)


def train_forest(dataset, n_trees=30, seed=0, bootstrap=True, max_features="sqrt",
                 max_depth=None, featurizer=None, prepared=None):
    """Bagged CART trees with per-split feature subsampling.

    ``prepared`` may carry the output of an earlier call's featurization
    (``forest.prepared``) to skip re-binning when many forests are trained
    on the same data.
    """
    if prepared is None:
        prepared = _prepare(dataset, featurizer)
    featurizer, X, codes, thresholds, y = prepared
    n, m = codes.shape
    if max_features == "sqrt":
        n_feat = max(1, int(math.sqrt(m)))
    elif max_features is None:
        n_feat = None
    else:
        n_feat = int(max_features)
    trees, bags = [], []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = np.sort(rng.integers(0, n, size=n)) if bootstrap else np.arange(n)
        grower = _Grower(codes, thresholds, y, len(dataset.classes), max_depth=max_depth,
                         max_features=n_feat, rng=rng)
        trees.append(grower.grow(idx))
        bags.append(idx)
    model = ForestModel(featurizer, trees, dataset.classes)
    model.prepared = prepared
    model.bags = bags
    return model


def oob_accuracy(forest):
    """Accuracy on training rows, each voted on only by trees that did not draw it."""
    _, X, _, _, y = forest.prepared
    votes = np.zeros((len(y), len(forest.classes)))
    rows = np.arange(len(y))
    for raw, bag in zip(forest._raw_trees, forest.bags):
        out = np.ones(len(y), dtype=bool)
        out[bag] = False
        votes[rows[out], raw.vote(X)[out]] += 1.0
    seen = votes.sum(axis=1) > 0
    return float(np.mean(votes[seen].argmax(axis=1) == y[seen]))
