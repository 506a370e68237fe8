import numpy as np
import pytest

from sketchlm.evaluation import (
    confusion_matrix,
    evaluate_classifier,
    topk_accuracy,
)


def test_topk_full_k_is_one():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(30, 6))
    labels = rng.integers(0, 6, size=30)
    assert topk_accuracy(logits, labels, 6) == 1.0


def test_topk_perfect_one_hot():
    labels = np.array([0, 1, 2])
    logits = np.eye(3)
    assert topk_accuracy(logits, labels, 1) == 1.0


def test_topk_invalid_k():
    with pytest.raises(ValueError):
        topk_accuracy(np.zeros((2, 3)), np.zeros(2, dtype=int), 0)
    with pytest.raises(ValueError):
        topk_accuracy(np.zeros((2, 3)), np.zeros(2, dtype=int), 4)


def test_topk_random_matches_binomial():
    rng = np.random.default_rng(1)
    n, c = 4000, 8
    logits = rng.normal(size=(n, c))
    labels = rng.integers(0, c, size=n)
    for k in (1, 3, 5):
        acc = topk_accuracy(logits, labels, k)
        p = k / c
        sigma = (p * (1 - p) / n) ** 0.5
        assert abs(acc - p) <= 3 * sigma


def test_topk_monotone_in_k():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(200, 7))
    labels = rng.integers(0, 7, size=200)
    accs = [topk_accuracy(logits, labels, k) for k in range(1, 8)]
    assert all(b >= a for a, b in zip(accs, accs[1:]))


def test_topk_tie_prefers_lower_class():
    logits = np.array([[1.0, 1.0, 0.0]])
    assert topk_accuracy(logits, np.array([0]), 1) == 1.0
    assert topk_accuracy(logits, np.array([1]), 1) == 0.0


def test_confusion_trace_equals_top1():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(100, 4))
    labels = rng.integers(0, 4, size=100)
    report = evaluate_classifier(logits, labels, ["a", "b", "c", "d"])
    assert np.trace(report.confusion) / report.confusion.sum() == pytest.approx(report.top1)
    assert report.confusion.sum(axis=1).tolist() == np.bincount(labels, minlength=4).tolist()
    assert report.top1 <= report.top5


def test_confusion_row_permutation_equivariance():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(60, 3))
    labels = rng.integers(0, 3, size=60)
    base = confusion_matrix(logits, labels, 3)
    perm = np.array([2, 0, 1])  # relabel classes and permute logit columns consistently
    permuted = confusion_matrix(logits[:, np.argsort(perm)], perm[labels], 3)
    np.testing.assert_array_equal(permuted, base[np.argsort(perm)][:, np.argsort(perm)])


def test_report_serialization():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(40, 3))
    labels = rng.integers(0, 3, size=40)
    report = evaluate_classifier(logits, labels, ["x", "y", "z"])
    d = report.to_dict()
    assert set(d) >= {"top1", "top5", "confusion", "class_names", "per_class"}
    assert "top1" in report.table()
