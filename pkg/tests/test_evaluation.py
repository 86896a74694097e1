import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from respsound.dataset import FeatureDataset
from respsound.errors import DataError
from respsound.evaluation import ConfusionMatrix, cross_validate, metrics_from_matrix, stratified_kfold
from respsound.features import FEATURE_NAMES
from respsound.models import ClassifierConfig


def _labels_dataset(counts):
    labels = [c for c, n in counts.items() for _ in range(n)]
    m = np.random.default_rng(0).standard_normal((len(labels), 12))
    return FeatureDataset(m, labels, FEATURE_NAMES, tuple(counts))


class TestMetrics:
    def test_worked_example(self):
        rep = metrics_from_matrix(ConfusionMatrix([[1, 1], [0, 2]], ("A", "B")))
        a, b = rep.per_class["A"], rep.per_class["B"]
        assert (a.precision, a.recall) == (1.0, 0.5)
        assert a.f1 == pytest.approx(2 / 3)
        assert (b.precision, b.recall) == (pytest.approx(2 / 3), 1.0)
        assert b.f1 == pytest.approx(0.8)
        assert rep.accuracy == 0.75
        assert rep.weighted_recall == rep.accuracy

    def test_zero_division(self):
        rep = metrics_from_matrix(ConfusionMatrix([[2, 0], [2, 0]], ("A", "B")))
        assert rep.per_class["B"].precision == 0.0
        assert rep.per_class["B"].f1 == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            metrics_from_matrix(ConfusionMatrix.zeros(("A", "B")))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 6).flatmap(
        lambda n: st.lists(st.lists(st.integers(0, 50), min_size=n, max_size=n), min_size=n, max_size=n)))
    def test_against_oracle(self, counts):
        if sum(map(sum, counts)) == 0:
            counts[0][0] = 1
        names = tuple(f"c{i}" for i in range(len(counts)))
        rep = metrics_from_matrix(ConfusionMatrix(counts, names))
        per, (wp, wr, wf), acc = oracles.metrics(counts)
        for name, (p, r, f, s) in zip(names, per):
            m = rep.per_class[name]
            assert abs(m.precision - p) <= 1e-12 and abs(m.recall - r) <= 1e-12 and abs(m.f1 - f) <= 1e-12
            assert m.support == s
        assert abs(rep.weighted_precision - wp) <= 1e-12
        assert abs(rep.weighted_recall - wr) <= 1e-12
        assert abs(rep.weighted_f1 - wf) <= 1e-12
        assert abs(rep.accuracy - acc) <= 1e-12
        assert abs(rep.weighted_recall - rep.accuracy) <= 1e-12


class TestConfusion:
    def test_add_and_sum(self):
        a = ConfusionMatrix.zeros(("x", "y"))
        a.add("x", "y")
        b = ConfusionMatrix.zeros(("x", "y"))
        b.add("y", "y")
        assert (a + b).counts.tolist() == [[0, 1], [0, 1]]

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            ConfusionMatrix([[1]], ("a", "b"))

    def test_table_and_csv(self):
        rep = metrics_from_matrix(ConfusionMatrix([[1, 1], [0, 2]], ("A", "B")))
        text = rep.table()
        assert "Weighted Avg." in text and "0.750" in text
        lines = rep.to_csv().splitlines()
        assert lines[0] == "class,precision,recall,f_measure,support"
        assert lines[1] == "A,1.000,0.500,0.667,2"


class TestKfold:
    def test_sizes_balanced(self):
        data = _labels_dataset({"a": 23, "b": 17, "c": 5})
        folds = stratified_kfold(data, 10, seed=1)
        sizes = np.bincount(folds, minlength=10)
        assert sizes.max() - sizes.min() <= 1
        for c in ("a", "b", "c"):
            per = np.bincount(folds[data.labels == c], minlength=10)
            assert per.max() - per.min() <= 1

    def test_partition(self):
        data = _labels_dataset({"a": 20, "b": 20})
        folds = stratified_kfold(data, 4)
        assert sorted(np.unique(folds)) == [0, 1, 2, 3]
        assert len(folds) == len(data)

    def test_seeded(self):
        data = _labels_dataset({"a": 20, "b": 20})
        assert np.array_equal(stratified_kfold(data, 5, 3), stratified_kfold(data, 5, 3))
        assert not np.array_equal(stratified_kfold(data, 5, 3), stratified_kfold(data, 5, 4))

    def test_too_many_folds(self):
        with pytest.raises(DataError):
            stratified_kfold(_labels_dataset({"a": 3, "b": 3}), 10)


class TestCrossValidate:
    def test_pooled_total(self, small_dataset):
        rep = cross_validate(small_dataset, ClassifierConfig("KNN", k=1), folds=5)
        assert rep.confusion.total == len(small_dataset)
        assert rep.classifier == "KNN(k=1)"

    def test_loo(self, small_dataset):
        assignment = np.arange(len(small_dataset))
        rep = cross_validate(small_dataset, ClassifierConfig("KNN", k=1), assignment=assignment)
        assert rep.confusion.total == len(small_dataset)

    def test_missing_class_in_training_split(self):
        data = _labels_dataset({"a": 10, "b": 1})
        assignment = np.zeros(len(data), dtype=np.int64)
        assignment[-1] = 1
        with pytest.raises(DataError, match="fold 0: training split has no instances of class 'a'"):
            cross_validate(data, ClassifierConfig("KNN"), assignment=assignment)

    def test_deterministic(self, small_dataset):
        cfg = ClassifierConfig("RF", n_trees=10, seed=2)
        a = cross_validate(small_dataset, cfg, folds=3, seed=5)
        b = cross_validate(small_dataset, cfg, folds=3, seed=5)
        assert np.array_equal(a.confusion.counts, b.confusion.counts)
