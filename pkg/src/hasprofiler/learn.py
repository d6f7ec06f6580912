"""Classifiers: CART decision tree, Random Forest with OOB error and
permutation importance, and k-NN over standardized features.

Trees are grown greedily on Gini impurity with thresholds at midpoints of
consecutive sorted unique values. All ties (leaf majority, forest vote,
k-NN neighbor) break toward the lowest class code / lowest index so that
identical inputs and seeds always reproduce identical models and
predictions. The hot loops are numba-compiled.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import (ArityMismatch, EmptyDataset, EmptyNode, FormatError,
                     VersionError)
from .features import Dataset

_NO_DEPTH_LIMIT = 1 << 30

MODEL_MAGIC = "HASPROFILER-MODEL"
MODEL_VERSION = 1


def gini(class_counts) -> float:
    """Gini impurity 1 - sum((c_i / n)^2) of a node's class counts."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("negative class count")
    total = counts.sum()
    if total == 0:
        raise EmptyNode("impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


@njit(cache=True)
def _grow_tree(X, y, n_classes, max_depth, min_leaf, n_sub, seed):
    n, m = X.shape
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thresh = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes), np.int64)

    idx = np.arange(n)
    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)

    np.random.seed(seed)
    perm = np.arange(m)
    tmp = np.empty(n, np.int64)

    n_nodes = 1
    max_depth_used = 0
    sp = 0
    stack_node[sp], stack_lo[sp], stack_hi[sp], stack_depth[sp] = 0, 0, n, 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo, hi, depth = stack_lo[sp], stack_hi[sp], stack_depth[sp]
        node_n = hi - lo
        if depth > max_depth_used:
            max_depth_used = depth
        for i in range(lo, hi):
            counts[node, y[idx[i]]] += 1
        pure = False
        for c in range(n_classes):
            if counts[node, c] == node_n:
                pure = True
        if pure or depth >= max_depth or node_n < 2 * min_leaf:
            continue  # leaf

        parent_imp = 1.0
        for c in range(n_classes):
            p = counts[node, c] / node_n
            parent_imp -= p * p

        np.random.shuffle(perm)
        # zero-gain splits are allowed: an impure node with distinct values
        # still partitions (XOR-like patterns resolve one level deeper)
        best_gain = -1.0
        best_feat = -1
        best_thr = 0.0
        lcounts = np.empty(n_classes, np.int64)
        for fi in range(n_sub):
            f = perm[fi]
            vals = np.empty(node_n, np.float64)
            labels = np.empty(node_n, np.int64)
            for i in range(node_n):
                vals[i] = X[idx[lo + i], f]
                labels[i] = y[idx[lo + i]]
            order = np.argsort(vals)
            for c in range(n_classes):
                lcounts[c] = 0
            for i in range(node_n - 1):
                lcounts[labels[order[i]]] += 1
                v0 = vals[order[i]]
                v1 = vals[order[i + 1]]
                if v0 == v1:
                    continue
                ln = i + 1
                rn = node_n - ln
                if ln < min_leaf or rn < min_leaf:
                    continue
                limp = 1.0
                rimp = 1.0
                for c in range(n_classes):
                    pl = lcounts[c] / ln
                    pr = (counts[node, c] - lcounts[c]) / rn
                    limp -= pl * pl
                    rimp -= pr * pr
                gain = parent_imp - (ln * limp + rn * rimp) / node_n
                if gain > best_gain + 1e-15:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v0 + v1)
        if best_feat == -1:
            continue  # constant within the sampled features: leaf

        # stable partition: <= threshold goes left
        n_left = 0
        for i in range(lo, hi):
            if X[idx[i], best_feat] <= best_thr:
                tmp[n_left] = idx[i]
                n_left += 1
        n_right = 0
        for i in range(lo, hi):
            if X[idx[i], best_feat] > best_thr:
                tmp[n_left + n_right] = idx[i]
                n_right += 1
        for i in range(node_n):
            idx[lo + i] = tmp[i]

        feat[node] = best_feat
        thresh[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[sp], stack_lo[sp] = n_nodes, lo
        stack_hi[sp], stack_depth[sp] = lo + n_left, depth + 1
        sp += 1
        stack_node[sp], stack_lo[sp] = n_nodes + 1, lo + n_left
        stack_hi[sp], stack_depth[sp] = hi, depth + 1
        sp += 1
        n_nodes += 2

    return (feat[:n_nodes], thresh[:n_nodes], left[:n_nodes],
            right[:n_nodes], counts[:n_nodes], max_depth_used)


@njit(cache=True)
def _route_to_leaves(feat, thresh, left, right, X):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feat[node] != -1:
            if X[i, feat[node]] <= thresh[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass
class TreeModel:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray       # (n_nodes, n_classes) class counts
    n_features: int
    class_names: list[str]
    max_depth_used: int = 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class ForestModel:
    trees: list[TreeModel]
    bootstrap_indices: list[np.ndarray]   # per tree, length N each
    n_features: int
    class_names: list[str]
    rng_seed: int
    feature_subsample: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class Scaler:
    means: np.ndarray
    stds: np.ndarray    # population std; degenerate columns substituted by 1


@dataclass
class KnnModel:
    matrix: np.ndarray        # standardized training features
    labels: np.ndarray
    k: int
    scaler: Scaler
    class_names: list[str]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


# --- decision tree ---

def train_tree(ds: Dataset, max_depth: int | None = None, min_leaf: int = 1,
               feature_subsample: int | None = None, seed: int = 0) -> TreeModel:
    if ds.n_samples == 0:
        raise EmptyDataset("cannot train a tree on an empty dataset")
    n_sub = ds.n_features if feature_subsample is None \
        else min(feature_subsample, ds.n_features)
    depth_cap = _NO_DEPTH_LIMIT if max_depth is None else max_depth
    X = np.ascontiguousarray(ds.features, dtype=np.float64)
    y = np.ascontiguousarray(ds.labels, dtype=np.int64)
    feat, thresh, left, right, counts, depth_used = _grow_tree(
        X, y, len(ds.class_names), depth_cap, min_leaf, n_sub, seed)
    return TreeModel(feat, thresh, left, right, counts, ds.n_features,
                     list(ds.class_names), int(depth_used))


def _check_arity(model, x: np.ndarray):
    if x.shape[-1] != model.n_features:
        raise ArityMismatch(f"expected {model.n_features} features, "
                            f"got {x.shape[-1]}")


def predict_tree_batch(model: TreeModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_arity(model, X)
    leaves = _route_to_leaves(model.feature, model.threshold, model.left,
                              model.right, X)
    return np.argmax(model.counts[leaves], axis=1)   # ties -> lowest code


def predict_tree(model: TreeModel, x) -> tuple[int, np.ndarray]:
    """Class of one sample plus per-class leaf count proportions."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _check_arity(model, x)
    leaf = _route_to_leaves(model.feature, model.threshold, model.left,
                            model.right, x)[0]
    counts = model.counts[leaf].astype(np.float64)
    return int(np.argmax(counts)), counts / counts.sum()


# --- random forest ---

def train_forest(ds: Dataset, n_trees: int = 30,
                 feature_subsample: int | None = None, seed: int = 0,
                 max_depth: int | None = None, min_leaf: int = 1,
                 identity_bootstrap: bool = False) -> ForestModel:
    """Bootstrap-aggregated trees with per-node feature subsampling.

    ``identity_bootstrap`` is a test hook that trains every tree on the
    full dataset in order (no resampling), making a 1-tree forest
    equivalent to a plain tree.
    """
    if ds.n_samples == 0:
        raise EmptyDataset("cannot train a forest on an empty dataset")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n_sub = feature_subsample if feature_subsample is not None \
        else math.ceil(math.sqrt(ds.n_features))
    rng = np.random.default_rng(seed)
    # draw all per-tree randomness up front so tree construction order
    # (serial or parallel) cannot change the model
    plans = []
    for _ in range(n_trees):
        if identity_bootstrap:
            boot = np.arange(ds.n_samples)
        else:
            boot = rng.integers(0, ds.n_samples, ds.n_samples)
        plans.append((boot, int(rng.integers(0, 2**31 - 1))))
    trees = []
    for boot, tree_seed in plans:
        trees.append(train_tree(ds.subset(boot), max_depth=max_depth,
                                min_leaf=min_leaf, feature_subsample=n_sub,
                                seed=tree_seed))
    return ForestModel(trees, [boot for boot, _ in plans], ds.n_features,
                       list(ds.class_names), seed, n_sub)


def _forest_votes(model: ForestModel, X: np.ndarray) -> np.ndarray:
    votes = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        votes[rows, predict_tree_batch(tree, X)] += 1
    return votes


def predict_forest_batch(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_arity(model, X)
    return np.argmax(_forest_votes(model, X), axis=1)  # ties -> lowest code


def predict_forest(model: ForestModel, x) -> int:
    return int(predict_forest_batch(model, np.asarray(x).reshape(1, -1))[0])


@dataclass
class OobResult:
    error: float
    n_evaluated: int
    n_skipped: int

    @property
    def defined(self) -> bool:
        return self.n_evaluated > 0


def _oob_masks(model: ForestModel, n: int) -> list[np.ndarray]:
    masks = []
    for boot in model.bootstrap_indices:
        in_bag = np.zeros(n, dtype=bool)
        in_bag[boot] = True
        masks.append(~in_bag)
    return masks


def oob_error(model: ForestModel, ds: Dataset) -> OobResult:
    """Error of samples voted on only by trees whose bootstrap excludes them."""
    votes = np.zeros((ds.n_samples, model.n_classes), dtype=np.int64)
    for tree, mask in zip(model.trees, _oob_masks(model, ds.n_samples)):
        if not mask.any():
            continue
        pred = predict_tree_batch(tree, ds.features[mask])
        votes[np.flatnonzero(mask), pred] += 1
    covered = votes.sum(axis=1) > 0
    n_eval = int(covered.sum())
    if n_eval == 0:
        return OobResult(0.0, 0, ds.n_samples)
    pred = np.argmax(votes[covered], axis=1)
    err = float(np.mean(pred != ds.labels[covered]))
    return OobResult(err, n_eval, ds.n_samples - n_eval)


@dataclass
class ImportanceResult:
    raw: np.ndarray          # mean per-tree OOB error increase per feature
    scores: np.ndarray       # raw / max(raw), or raw unchanged if degenerate
    degenerate: bool         # all raw scores <= 0; scores left unnormalized


def permutation_importance(model: ForestModel, ds: Dataset,
                           seed: int = 0,
                           n_repeats: int = 5) -> ImportanceResult:
    """Per-feature mean OOB error increase under column permutation,
    normalized over the maximum obtained value. Deltas are averaged over
    ``n_repeats`` independent permutations per tree to damp estimator
    variance for weakly used features."""
    rng = np.random.default_rng(seed)
    masks = _oob_masks(model, ds.n_samples)
    baselines = []
    oob_data = []
    for tree, mask in zip(model.trees, masks):
        rows = np.flatnonzero(mask)
        if rows.size == 0:
            baselines.append(None)
            oob_data.append(None)
            continue
        Xo = ds.features[rows]
        yo = ds.labels[rows]
        baselines.append(float(np.mean(predict_tree_batch(tree, Xo) != yo)))
        oob_data.append((Xo, yo))
    raw = np.zeros(ds.n_features)
    for m in range(ds.n_features):
        deltas = []
        for tree, base, data in zip(model.trees, baselines, oob_data):
            if data is None:
                continue
            Xo, yo = data
            Xp = Xo.copy()
            for _ in range(n_repeats):
                Xp[:, m] = Xo[rng.permutation(Xo.shape[0]), m]
                err = float(np.mean(predict_tree_batch(tree, Xp) != yo))
                deltas.append(err - base)
        raw[m] = np.mean(deltas) if deltas else 0.0
    top = raw.max()
    if top <= 0:
        return ImportanceResult(raw, raw.copy(), True)
    return ImportanceResult(raw, raw / top, False)


# --- standardization and k-NN ---

def fit_scaler(ds: Dataset) -> Scaler:
    if ds.n_samples == 0:
        raise EmptyDataset("cannot fit a scaler on an empty dataset")
    means = ds.features.mean(axis=0)
    stds = ds.features.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return Scaler(means, stds)


def apply_scaler(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (X - scaler.means) / scaler.stds


def knn_train(ds: Dataset, k: int = 1) -> KnnModel:
    if ds.n_samples == 0:
        raise EmptyDataset("cannot train k-NN on an empty dataset")
    if k < 1:
        raise ValueError("k must be >= 1")
    scaler = fit_scaler(ds)
    return KnnModel(apply_scaler(scaler, ds.features), ds.labels.copy(),
                    k, scaler, list(ds.class_names))


def knn_predict_batch(model: KnnModel, X: np.ndarray,
                      chunk: int = 512) -> np.ndarray:
    """Majority class among the k nearest training points (Euclidean in
    standardized space); distance ties break toward the lower training
    index, vote ties toward the lowest class code."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_arity(model, X)
    Xs = apply_scaler(model.scaler, X)
    train = model.matrix
    sq_train = np.einsum("ij,ij->i", train, train)
    out = np.empty(Xs.shape[0], dtype=np.int64)
    k = min(model.k, train.shape[0])
    for lo in range(0, Xs.shape[0], chunk):
        part = Xs[lo:lo + chunk]
        d2 = sq_train[None, :] - 2.0 * part @ train.T \
            + np.einsum("ij,ij->i", part, part)[:, None]
        for i in range(part.shape[0]):
            row = d2[i]
            if k < row.shape[0]:
                kth = row[np.argpartition(row, k - 1)[:k]].max()
                eligible = np.flatnonzero(row <= kth)
            else:
                eligible = np.arange(row.shape[0])
            order = np.lexsort((eligible, row[eligible]))
            nearest = eligible[order[:k]]
            votes = np.bincount(model.labels[nearest],
                                minlength=model.n_classes)
            out[lo + i] = int(np.argmax(votes))
    return out


def knn_predict(model: KnnModel, x) -> int:
    return int(knn_predict_batch(model, np.asarray(x).reshape(1, -1))[0])


# --- serialization ---

def _tree_to_json(tree: TreeModel) -> dict:
    return {"feature": tree.feature.tolist(),
            "threshold": tree.threshold.tolist(),
            "left": tree.left.tolist(),
            "right": tree.right.tolist(),
            "counts": tree.counts.tolist(),
            "max_depth_used": tree.max_depth_used}


def _tree_from_json(obj: dict, n_features: int,
                    class_names: list[str]) -> TreeModel:
    return TreeModel(np.asarray(obj["feature"], dtype=np.int64),
                     np.asarray(obj["threshold"], dtype=np.float64),
                     np.asarray(obj["left"], dtype=np.int64),
                     np.asarray(obj["right"], dtype=np.int64),
                     np.asarray(obj["counts"], dtype=np.int64),
                     n_features, class_names, obj["max_depth_used"])


def save_model(model, path) -> None:
    doc = {"magic": MODEL_MAGIC, "version": MODEL_VERSION,
           "class_names": None, "n_features": None, "payload": None}
    if isinstance(model, TreeModel):
        doc.update(kind="tree", class_names=model.class_names,
                   n_features=model.n_features,
                   payload=_tree_to_json(model))
    elif isinstance(model, ForestModel):
        doc.update(kind="forest", class_names=model.class_names,
                   n_features=model.n_features,
                   payload={"trees": [_tree_to_json(t) for t in model.trees],
                            "bootstrap_indices":
                                [b.tolist() for b in model.bootstrap_indices],
                            "rng_seed": model.rng_seed,
                            "feature_subsample": model.feature_subsample})
    elif isinstance(model, KnnModel):
        doc.update(kind="knn", class_names=model.class_names,
                   n_features=model.n_features,
                   payload={"matrix": model.matrix.tolist(),
                            "labels": model.labels.tolist(),
                            "k": model.k,
                            "means": model.scaler.means.tolist(),
                            "stds": model.scaler.stds.tolist()})
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise FormatError("model file magic missing or corrupt")
    if doc.get("version") != MODEL_VERSION:
        raise VersionError(f"unsupported model version {doc.get('version')}")
    kind = doc.get("kind")
    class_names = doc["class_names"]
    n_features = doc["n_features"]
    payload = doc["payload"]
    if kind == "tree":
        return _tree_from_json(payload, n_features, class_names)
    if kind == "forest":
        trees = [_tree_from_json(t, n_features, class_names)
                 for t in payload["trees"]]
        boots = [np.asarray(b, dtype=np.int64)
                 for b in payload["bootstrap_indices"]]
        return ForestModel(trees, boots, n_features, class_names,
                           payload["rng_seed"], payload["feature_subsample"])
    if kind == "knn":
        scaler = Scaler(np.asarray(payload["means"]),
                        np.asarray(payload["stds"]))
        return KnnModel(np.asarray(payload["matrix"], dtype=np.float64),
                        np.asarray(payload["labels"], dtype=np.int64),
                        payload["k"], scaler, class_names)
    raise FormatError(f"unknown model kind {kind!r}")
