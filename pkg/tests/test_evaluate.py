"""k-fold splitting, confusion matrices, cross-validation and benchmarks."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hasprofiler.errors import BadK, EmptyDataset
from hasprofiler.evaluate import (ConfusionMatrix, ModelSpec, benchmark,
                                  confusion, cross_validate, kfold_split,
                                  per_scenario_accuracy, predict_batch)
from hasprofiler.features import Dataset


def blob_ds(rng, n=120, m=4, n_classes=2, tags=False):
    centers = rng.normal(0, 3, (n_classes, m))
    y = rng.integers(0, n_classes, n)
    X = centers[y] + rng.normal(0, 0.3, (n, m))
    scen = [f"s{1 + i % 3}" for i in range(n)] if tags else None
    return Dataset(X, y, [f"f{i}" for i in range(m)],
                   [f"c{i}" for i in range(n_classes)], scen)


class TestKfold:
    def test_sizes_10_3(self):
        folds = kfold_split(10, 3, seed=0)
        assert sorted(len(f) for f in folds) == [3, 3, 4]

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(2, 500), k=st.integers(2, 20),
           seed=st.integers(0, 10))
    def test_partition_property(self, n, k, seed):
        if k > n:
            with pytest.raises(BadK):
                kfold_split(n, k, seed)
            return
        folds = kfold_split(n, k, seed)
        assert len(folds) == k
        joined = np.concatenate(folds)
        assert len(joined) == n and len(set(joined)) == n
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_bad_k(self):
        with pytest.raises(BadK):
            kfold_split(10, 1)
        with pytest.raises(BadK):
            kfold_split(10, 11)

    def test_deterministic(self):
        a = kfold_split(100, 7, seed=3)
        b = kfold_split(100, 7, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestConfusion:
    def test_counts_rows_are_true(self):
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], ["a", "b"])
        assert cm.counts.tolist() == [[1, 1], [0, 2]]
        assert cm.accuracy == pytest.approx(0.75)
        assert cm.recall(0) == pytest.approx(0.5)
        assert cm.recall(1) == pytest.approx(1.0)

    def test_row_percentages(self):
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], ["a", "b"])
        pct = cm.row_percentages()
        assert pct[0].tolist() == [50.0, 50.0]
        assert pct[1].tolist() == [0.0, 100.0]

    def test_absent_class_row_zero(self):
        cm = ConfusionMatrix(np.array([[2, 0], [0, 0]]), ["a", "b"])
        assert cm.recall(1) == 0.0
        assert not np.isnan(cm.row_percentages()).any()

    def test_to_text_mentions_all_classes(self):
        cm = confusion([0, 1], [0, 1], ["alpha", "beta"])
        text = cm.to_text()
        assert "alpha" in text and "beta" in text and "100.0" in text


class TestCrossValidate:
    def test_every_sample_validated_once(self, rng):
        ds = blob_ds(rng)
        report = cross_validate(ds, ModelSpec("tree", seed=0), k=5, seed=0)
        assert report.pooled.total == ds.n_samples
        assert len(report.fold_accuracies) == 5
        assert report.overall_accuracy > 0.9

    def test_scenario_accuracies(self, rng):
        ds = blob_ds(rng, tags=True)
        accs = per_scenario_accuracy(ds, ModelSpec("tree", seed=0), k=4)
        assert set(accs) == {"s1", "s2", "s3"}
        assert all(0.0 <= v <= 1.0 for v in accs.values())

    def test_scenarioless_dataset_rejected(self, rng):
        with pytest.raises(ValueError):
            per_scenario_accuracy(blob_ds(rng), ModelSpec("tree"), k=2)

    def test_starved_class_warning(self, rng):
        ds = blob_ds(rng, n=40)
        ds.labels[:] = 0
        ds.labels[0] = 1
        report = cross_validate(ds, ModelSpec("tree"), k=5, seed=0)
        assert any("c1" in note for note in report.warnings)

    def test_empty_dataset(self):
        ds = Dataset(np.empty((0, 2)), np.empty(0, dtype=np.int64),
                     ["a", "b"], ["x"])
        with pytest.raises(EmptyDataset):
            cross_validate(ds, ModelSpec("tree"), k=2)

    def test_report_json(self, rng):
        report = cross_validate(blob_ds(rng), ModelSpec("knn", knn_k=3), k=3)
        doc = report.to_json()
        assert '"overall_accuracy"' in doc


class TestModelSpec:
    @pytest.mark.parametrize("kind", ["tree", "forest", "knn"])
    def test_train_and_predict(self, rng, kind):
        ds = blob_ds(rng)
        model = ModelSpec(kind, n_trees=3, knn_k=2, seed=0).train(ds)
        pred = predict_batch(model, ds.features)
        assert pred.shape == (ds.n_samples,)

    def test_unknown_kind(self, rng):
        with pytest.raises(ValueError):
            ModelSpec("svm").train(blob_ds(rng))


class TestBenchmark:
    def test_schema_and_sanity(self, rng):
        ds = blob_ds(rng, n=60)
        stats = benchmark(ModelSpec("tree", seed=0), ds, repetitions=3,
                          predict_batch_size=30)
        assert stats.repetitions == 3
        assert stats.train_mean_s >= 0.0
        assert stats.predict_per_1000_mean_ms >= 0.0
        assert stats.train_std_s >= 0.0
