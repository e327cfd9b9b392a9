import math

import numpy as np
import pytest

from ifenet import metrics


class TestConfusion:
    def test_perfect_predictions_are_diagonal(self):
        cm = metrics.confusion([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert np.array_equal(cm, np.diag([1, 2, 1]))

    def test_direct_count(self):
        cm = metrics.confusion([0, 1, 1, 1], [0, 0, 1, 1], 2)
        assert cm[0, 0] == 1 and cm[0, 1] == 1 and cm[1, 1] == 2

    def test_empty_rejected(self):
        with pytest.raises(metrics.MetricsError):
            metrics.confusion([], [])

    def test_length_mismatch(self):
        with pytest.raises(metrics.MetricsError):
            metrics.confusion([0, 1], [0])

    def test_out_of_range(self):
        with pytest.raises(metrics.MetricsError):
            metrics.confusion([0, 3], [0, 1], 2)


class TestClassificationMetrics:
    def test_hand_computed_binary(self):
        # positive class: TP=50 TN=40 FP=5 FN=5
        cm = np.array([[40, 5], [5, 50]])
        rep = metrics.classification_metrics(cm)
        assert rep.accuracy == 0.9
        pos = rep.per_class[1]
        assert np.isclose(pos["precision"], 50 / 55)
        assert np.isclose(pos["recall"], 50 / 55)
        assert np.isclose(pos["f1"], 50 / 55)

    def test_perfect_classifier(self):
        rep = metrics.classification_metrics(np.diag([3, 4, 5]))
        assert rep.accuracy == 1.0 and rep.f1_macro == 1.0

    def test_absent_class_zero_by_convention(self):
        cm = np.array([[2, 0, 0], [0, 3, 0], [0, 0, 0]])
        rep = metrics.classification_metrics(cm)
        assert rep.per_class[2] == {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        assert np.isclose(rep.f1_macro, 2 / 3)

    def test_accuracy_equals_direct_mean(self, rng):
        labels = rng.integers(0, 3, 200)
        preds = rng.integers(0, 3, 200)
        rep = metrics.classification_metrics(metrics.confusion(preds, labels, 3))
        assert rep.accuracy == np.mean(preds == labels)

    def test_empty_matrix(self):
        with pytest.raises(metrics.MetricsError):
            metrics.classification_metrics(np.zeros((2, 2)))


class TestNdcg:
    def test_ideal_order_is_one_for_all_k(self):
        grades = np.array([3.0, 2.0, 1.0, 0.0])
        for k in range(1, 5):
            assert metrics.ndcg_at_k([0, 1, 2, 3], grades, k) == 1.0

    def test_reversed_order_hand_value(self):
        grades = np.array([2.0, 1.0, 0.0])
        got = metrics.ndcg_at_k([2, 1, 0], grades, 3)
        dcg = 0.0 + 1.0 / math.log2(3) + 2.0 / 2.0
        idcg = 2.0 + 1.0 / math.log2(3) + 0.0
        assert abs(got - dcg / idcg) < 1e-12
        assert abs(got - 0.6199) < 5e-4

    def test_top_one_only_needs_the_top(self):
        grades = np.array([5.0, 1.0, 4.0])
        assert metrics.ndcg_at_k([0, 1, 2], grades, 1) == 1.0

    def test_upward_swap_never_decreases(self, rng):
        d = 6
        grades = rng.integers(0, 4, d).astype(float)
        grades[rng.integers(d)] = 4  # ensure a positive grade
        order = list(rng.permutation(d))
        for i in range(d - 1):
            if grades[order[i + 1]] > grades[order[i]]:
                swapped = order.copy()
                swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
                for k in range(1, d + 1):
                    assert (metrics.ndcg_at_k(swapped, grades, k)
                            >= metrics.ndcg_at_k(order, grades, k) - 1e-12)

    def test_one_iff_top_k_sorted(self):
        grades = np.array([3.0, 2.0, 1.0, 0.0])
        assert metrics.ndcg_at_k([0, 1, 3, 2], grades, 2) == 1.0
        assert metrics.ndcg_at_k([1, 0, 2, 3], grades, 2) < 1.0

    def test_errors(self):
        with pytest.raises(metrics.MetricsError):
            metrics.ndcg_at_k([0, 1], np.array([0.0, 0.0]), 1)
        with pytest.raises(metrics.MetricsError):
            metrics.ndcg_at_k([0, 1], np.array([1.0, 0.0]), 3)
        with pytest.raises(metrics.MetricsError):
            metrics.ndcg_at_k([0, 0], np.array([1.0, 0.0]), 1)


class TestGrades:
    def test_untied_truth(self):
        assert np.array_equal(
            metrics.grades_from_ranking([[0], [1], [2]], 3), [2, 1, 0])

    def test_planted_truth_noise_gets_zero(self):
        grades = metrics.grades_from_ranking([[0], [1], [2], [3, 4, 5]], 6)
        assert np.array_equal(grades, [3, 2, 1, 0, 0, 0])

    def test_single_group_degenerates(self):
        grades = metrics.grades_from_ranking([[0, 1, 2]], 3)
        assert np.array_equal(grades, [0, 0, 0])
        with pytest.raises(metrics.MetricsError):
            metrics.ndcg_at_k([0, 1, 2], grades, 2)

    def test_incomplete_truth(self):
        with pytest.raises(metrics.MetricsError):
            metrics.grades_from_ranking([[0], [2]], 3)


class TestPermutationImportance:
    def test_constant_column_importance_exactly_zero(self, rng):
        X = rng.standard_normal((60, 3))
        X[:, 1] = 0.0
        y = (X[:, 0] > 0).astype(int)
        order, imp = metrics.permutation_importance(
            lambda Z: (Z[:, 0] > 0).astype(int), X, y, repeats=3, seed=1)
        assert imp[1] == 0.0

    def test_ignored_feature_near_zero(self, rng):
        X = rng.standard_normal((1000, 3))
        y = (X[:, 0] > 0).astype(int)
        _, imp = metrics.permutation_importance(
            lambda Z: (Z[:, 0] > 0).astype(int), X, y, repeats=10, seed=2)
        assert abs(imp[2]) <= 0.02
        assert imp[0] > 0.2

    def test_more_repeats_reduce_spread(self, rng):
        X = rng.standard_normal((300, 2))
        y = (X[:, 0] + 0.3 * X[:, 1] > 0).astype(int)
        predict = lambda Z: (Z[:, 0] + 0.3 * Z[:, 1] > 0).astype(int)

        def spread(repeats):
            vals = [metrics.permutation_importance(predict, X, y,
                                                   repeats=repeats, seed=s)[1][1]
                    for s in range(8)]
            return np.std(vals)

        assert spread(20) < spread(2)

    def test_repeats_validated(self):
        with pytest.raises(metrics.MetricsError):
            metrics.permutation_importance(lambda Z: Z[:, 0], np.ones((5, 2)),
                                           np.ones(5), repeats=0)


class TestRankCorrelation:
    def test_identical(self):
        assert metrics.rank_correlation([0, 1, 2], [0, 1, 2]) == 1.0

    def test_reversed(self):
        assert metrics.rank_correlation([0, 1, 2, 3], [3, 2, 1, 0]) == -1.0

    def test_hand_value(self):
        assert metrics.rank_correlation([0, 1, 2], [0, 2, 1]) == 0.5

    def test_set_mismatch(self):
        with pytest.raises(metrics.MetricsError):
            metrics.rank_correlation([0, 1], [0, 2])
