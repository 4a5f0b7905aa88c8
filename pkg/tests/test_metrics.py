"""Report implementations against brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as scipy_stats

from icogest.metrics import (
    MetricsError,
    classification_report,
    regression_report,
    spearman_ranks,
)


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def brute_classification(preds, labels, mode):
    n = len(labels)
    acc = 100.0 * sum(p == t for p, t in zip(preds, labels)) / n
    per = {}
    for c in (0, 1):
        tp = sum(1 for p, t in zip(preds, labels) if p == c and t == c)
        fp = sum(1 for p, t in zip(preds, labels) if p == c and t != c)
        fn = sum(1 for p, t in zip(preds, labels) if p != c and t == c)
        support = tp + fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per[c] = (100 * prec, 100 * rec, 100 * f1, support)
    if mode == "macro":
        classes = [c for c in (0, 1) if per[c][3] > 0]
        prec = sum(per[c][0] for c in classes) / len(classes)
        rec = sum(per[c][1] for c in classes) / len(classes)
        f1 = sum(per[c][2] for c in classes) / len(classes)
    else:
        prec = sum(per[c][0] * per[c][3] for c in (0, 1)) / n
        rec = sum(per[c][1] * per[c][3] for c in (0, 1)) / n
        f1 = sum(per[c][2] * per[c][3] for c in (0, 1)) / n
    return acc, prec, rec, f1


def brute_ranks(values):
    ranks = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        # average of positions less+1 .. less+equal
        ranks.append(less + (equal + 1) / 2.0)
    return ranks


def brute_regression(preds, targets):
    n = len(preds)
    mae = sum(abs(p - t) for p, t in zip(preds, targets)) / n
    mse = sum((p - t) ** 2 for p, t in zip(preds, targets)) / n
    rmse = math.sqrt(mse)
    t_mean = sum(targets) / n
    ss_tot = sum((t - t_mean) ** 2 for t in targets)
    r2 = 1.0 - sum((p - t) ** 2 for p, t in zip(preds, targets)) / ss_tot if ss_tot else None

    def pearson(x, y):
        mx, my = sum(x) / n, sum(y) / n
        num = sum((a - mx) * (b - my) for a, b in zip(x, y))
        den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
        return num / den if den else None

    return mae, mse, rmse, r2, pearson(preds, targets), pearson(brute_ranks(preds), brute_ranks(targets))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def test_perfect_predictions_score_100():
    r = classification_report([0, 1, 1, 0], [0, 1, 1, 0])
    assert r.accuracy == r.precision == r.recall == r.f1 == 100.0


def test_spec_worked_example():
    r = classification_report([1, 0, 1, 0], [1, 1, 1, 0], mode="macro")
    assert r.accuracy == 75.0
    assert r.precision == pytest.approx(75.0)
    assert r.recall == pytest.approx(100.0 * (1.0 + 2.0 / 3.0) / 2.0)


def test_weighted_recall_equals_accuracy():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, n).tolist()
        preds = rng.integers(0, 2, n).tolist()
        r = classification_report(preds, labels, mode="weighted")
        assert r.recall == pytest.approx(r.accuracy, abs=1e-9)


def test_matches_brute_force_on_1000_random_sets():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        labels = rng.integers(0, 2, n).tolist()
        preds = rng.integers(0, 2, n).tolist()
        for mode in ("macro", "weighted"):
            r = classification_report(preds, labels, mode=mode)
            acc, prec, rec, f1 = brute_classification(preds, labels, mode)
            assert r.accuracy == pytest.approx(acc, abs=1e-9)
            assert r.precision == pytest.approx(prec, abs=1e-9)
            assert r.recall == pytest.approx(rec, abs=1e-9)
            assert r.f1 == pytest.approx(f1, abs=1e-9)


def test_zero_support_class_excluded_with_flag():
    r = classification_report([1, 1, 0], [1, 1, 1], mode="macro")
    assert r.excluded_classes == [0]
    assert r.per_class[0].zero_division


def test_validation_errors():
    with pytest.raises(MetricsError):
        classification_report([1], [1, 0])
    with pytest.raises(MetricsError):
        classification_report([], [])
    with pytest.raises(MetricsError):
        classification_report([2], [1])


def test_classification_json_keys():
    import json
    r = classification_report([1, 0], [1, 0])
    obj = json.loads(r.to_json())
    assert set(obj) >= {"Accuracy", "Precision", "Recall", "F1"}


# ---------------------------------------------------------------------------
# ranks / spearman
# ---------------------------------------------------------------------------

def test_ranks_strictly_increasing():
    assert spearman_ranks([3.0, 5.0, 9.0, 11.0]) == [1.0, 2.0, 3.0, 4.0]


def test_ranks_with_ties_average():
    assert spearman_ranks([1.0, 2.0, 2.0, 3.0]) == [1.0, 2.5, 2.5, 4.0]


def test_rank_sum_invariant():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 25))
        vals = rng.integers(0, 5, n).astype(float).tolist()
        ranks = spearman_ranks(vals)
        assert sum(ranks) == pytest.approx(n * (n + 1) / 2)
        assert ranks == brute_ranks(vals)


def test_reversed_list_spearman_minus_one():
    vals = [1.0, 4.0, 2.0, 8.0, 5.0]
    rev = [-v for v in vals]
    r = regression_report(rev, vals)
    assert r.spearman == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------

def test_perfect_regression():
    r = regression_report([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])
    assert r.mae == 0.0 and r.mse == 0.0 and r.rmse == 0.0
    assert r.r2 == 1.0
    assert r.pearson == pytest.approx(1.0)
    assert r.spearman == pytest.approx(1.0)


def test_negative_r2_is_legal():
    r = regression_report([1.0, 1.0], [0.0, 1.0])
    assert r.mse == pytest.approx(0.5)
    assert r.r2 == pytest.approx(-1.0)


def rounded_pair_consistent(mse_2dp, rmse_2dp):
    """Is there a true MSE rounding to mse_2dp whose sqrt rounds to rmse_2dp?"""
    lo = math.sqrt(mse_2dp - 0.005)
    hi = math.sqrt(mse_2dp + 0.005)
    return lo < rmse_2dp + 0.005 and hi > rmse_2dp - 0.005


def test_reported_mse_rmse_pairs_internally_consistent():
    # the published 2-decimal (MSE, RMSE) pairs must be mutually consistent
    assert round(math.sqrt(0.05), 2) == 0.22
    assert rounded_pair_consistent(0.05, 0.22)
    assert rounded_pair_consistent(0.02, 0.15)
    # sanity: the test would catch an inconsistent pair
    assert not rounded_pair_consistent(0.02, 0.22)


def test_constant_targets_marked_undefined():
    r = regression_report([0.1, 0.9], [0.5, 0.5])
    assert r.r2 is None and r.pearson is None and r.spearman is None
    assert set(r.undefined) == {"R2", "PR", "Spearman"}
    assert math.isfinite(r.mae) and math.isfinite(r.rmse)


def test_matches_brute_force_oracles():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        preds = rng.uniform(-2, 2, n).tolist()
        targets = rng.uniform(-2, 2, n).tolist()
        r = regression_report(preds, targets)
        mae, mse, rmse, r2, pr, sp = brute_regression(preds, targets)
        assert r.mae == pytest.approx(mae, abs=1e-9)
        assert r.mse == pytest.approx(mse, abs=1e-9)
        assert r.rmse == pytest.approx(rmse, abs=1e-9)
        assert r.r2 == pytest.approx(r2, abs=1e-9)
        assert r.pearson == pytest.approx(pr, abs=1e-9)
        assert r.spearman == pytest.approx(sp, abs=1e-9)


def test_matches_scipy_on_ties():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        preds = rng.integers(0, 4, n).astype(float).tolist()
        targets = rng.integers(0, 4, n).astype(float).tolist()
        if len(set(preds)) < 2 or len(set(targets)) < 2:
            continue
        r = regression_report(preds, targets)
        assert r.spearman == pytest.approx(
            scipy_stats.spearmanr(preds, targets).statistic, abs=1e-9
        )
        assert r.pearson == pytest.approx(
            scipy_stats.pearsonr(preds, targets).statistic, abs=1e-9
        )


def test_rmse_le_relationship():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        preds = rng.uniform(-1, 1, n).tolist()
        targets = rng.uniform(-1, 1, n).tolist()
        r = regression_report(preds, targets)
        assert r.rmse == pytest.approx(math.sqrt(r.mse), abs=1e-12)
        assert r.mae <= r.rmse + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_pearson_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 12).tolist()
    y = rng.uniform(-1, 1, 12).tolist()
    base = regression_report(x, y).pearson
    scaled = regression_report([scale * v + shift for v in x], y).pearson
    assert scaled == pytest.approx(base, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_spearman_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 10).tolist()
    y = rng.uniform(-1, 1, 10).tolist()
    base = regression_report(x, y).spearman
    transformed = regression_report([math.exp(2.0 * v) for v in x], y).spearman
    assert transformed == pytest.approx(base, abs=1e-9)


def test_too_short_input_rejected():
    with pytest.raises(MetricsError):
        regression_report([1.0], [1.0])
