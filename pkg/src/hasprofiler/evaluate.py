"""k-fold cross-validation, confusion matrices, per-scenario accuracy and
runtime benchmarking."""
from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import BadK, EmptyDataset
from .features import Dataset
from . import learn


@dataclass(frozen=True)
class ModelSpec:
    """Which classifier to train and with what parameters."""

    kind: str                     # "forest" | "tree" | "knn"
    n_trees: int = 30
    knn_k: int = 1
    max_depth: int | None = None
    min_leaf: int = 1
    feature_subsample: int | None = None
    seed: int = 0

    def train(self, ds: Dataset):
        if self.kind == "forest":
            return learn.train_forest(ds, n_trees=self.n_trees,
                                      feature_subsample=self.feature_subsample,
                                      seed=self.seed, max_depth=self.max_depth,
                                      min_leaf=self.min_leaf)
        if self.kind == "tree":
            return learn.train_tree(ds, max_depth=self.max_depth,
                                    min_leaf=self.min_leaf,
                                    feature_subsample=self.feature_subsample,
                                    seed=self.seed)
        if self.kind == "knn":
            return learn.knn_train(ds, k=self.knn_k)
        raise ValueError(f"unknown model kind {self.kind!r}")


def predict_batch(model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, learn.ForestModel):
        return learn.predict_forest_batch(model, X)
    if isinstance(model, learn.TreeModel):
        return learn.predict_tree_batch(model, X)
    if isinstance(model, learn.KnnModel):
        return learn.knn_predict_batch(model, X)
    raise TypeError(f"cannot predict with {type(model).__name__}")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray            # rows = true class, columns = predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def row_percentages(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(sums > 0, 100.0 * self.counts / sums, 0.0)
        return pct

    def recall(self, class_index: int) -> float:
        row = self.counts[class_index]
        total = row.sum()
        return float(row[class_index]) / total if total else 0.0

    def to_text(self) -> str:
        """Aligned table with row-normalized percentages."""
        pct = self.row_percentages()
        width = max(9, max(len(n) for n in self.class_names) + 1)
        lines = ["True (%)".ljust(width)
                 + "".join(n.rjust(width) for n in self.class_names)]
        for i, name in enumerate(self.class_names):
            lines.append(name.ljust(width)
                         + "".join(f"{pct[i, j]:{width}.1f}"
                                   for j in range(len(self.class_names))))
        return "\n".join(lines)


def confusion(true, pred, class_names: list[str]) -> ConfusionMatrix:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    c = len(class_names)
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, list(class_names))


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Random partition of 0..n-1 into k parts with sizes differing by <= 1."""
    if not 2 <= k <= n:
        raise BadK(f"k={k} outside [2, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


@dataclass
class RuntimeStats:
    train_mean_s: float
    train_std_s: float
    predict_per_1000_mean_ms: float
    predict_per_1000_std_ms: float
    repetitions: int


@dataclass
class CvReport:
    k: int
    fold_accuracies: list[float]
    pooled: ConfusionMatrix
    overall_accuracy: float
    per_scenario: dict[str, float] | None = None
    runtime: RuntimeStats | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {"k": self.k,
               "fold_accuracies": self.fold_accuracies,
               "overall_accuracy": self.overall_accuracy,
               "confusion_counts": self.pooled.counts.tolist(),
               "class_names": self.pooled.class_names,
               "per_scenario": self.per_scenario,
               "runtime": asdict(self.runtime) if self.runtime else None,
               "warnings": self.warnings}
        return json.dumps(doc, indent=2)


def cross_validate(ds: Dataset, spec: ModelSpec, k: int = 10,
                   seed: int = 0) -> CvReport:
    """Train on k-1 folds and validate on the held-out fold, k times; every
    sample is validated exactly once and pooled into one confusion matrix."""
    if ds.n_samples == 0:
        raise EmptyDataset("cannot cross-validate an empty dataset")
    notes = []
    class_counts = np.bincount(ds.labels, minlength=len(ds.class_names))
    for code, count in enumerate(class_counts):
        if 0 < count < k:
            notes.append(f"class {ds.class_names[code]} has only {count} "
                         f"samples for k={k}; folds may miss it")
    folds = kfold_split(ds.n_samples, k, seed)
    all_idx = np.arange(ds.n_samples)
    pred = np.full(ds.n_samples, -1, dtype=np.int64)
    fold_acc = []
    for fold in folds:
        held_out = np.zeros(ds.n_samples, dtype=bool)
        held_out[fold] = True
        model = spec.train(ds.subset(all_idx[~held_out]))
        fold_pred = predict_batch(model, ds.features[fold])
        pred[fold] = fold_pred
        fold_acc.append(float(np.mean(fold_pred == ds.labels[fold])))
    assert (pred >= 0).all(), "some sample was never validated"
    pooled = confusion(ds.labels, pred, ds.class_names)
    per_scenario = None
    if ds.scenario_tags is not None:
        per_scenario = _scenario_accuracies(ds, pred)
    return CvReport(k, fold_acc, pooled, pooled.accuracy,
                    per_scenario=per_scenario, warnings=notes)


def _scenario_accuracies(ds: Dataset, pred: np.ndarray) -> dict[str, float]:
    tags = np.asarray(ds.scenario_tags)
    out = {}
    for tag in sorted(set(ds.scenario_tags)):
        mask = tags == tag
        if mask.any():
            out[tag] = float(np.mean(pred[mask] == ds.labels[mask]))
    return out


def per_scenario_accuracy(ds: Dataset, spec: ModelSpec, k: int = 10,
                          seed: int = 0) -> dict[str, float]:
    """Validation accuracy restricted to each scenario tag; scenarios with
    no validation samples are absent from the result."""
    if ds.scenario_tags is None:
        raise ValueError("dataset has no scenario tags")
    return cross_validate(ds, spec, k, seed).per_scenario


def benchmark(spec: ModelSpec, ds: Dataset, repetitions: int = 100,
              predict_batch_size: int = 1000, seed: int = 0) -> RuntimeStats:
    """Wall-clock training time on the full dataset and prediction time per
    1000 samples, serially repeated to keep timings honest."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, ds.n_samples, predict_batch_size)
    batch = ds.features[rows]
    scale = 1000.0 / predict_batch_size
    train_times, pred_times = [], []
    model = None
    for _ in range(repetitions):
        t0 = time.perf_counter()
        model = spec.train(ds)
        train_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        predict_batch(model, batch)
        pred_times.append((time.perf_counter() - t0) * 1000.0 * scale)
    return RuntimeStats(float(np.mean(train_times)), float(np.std(train_times)),
                        float(np.mean(pred_times)), float(np.std(pred_times)),
                        repetitions)
