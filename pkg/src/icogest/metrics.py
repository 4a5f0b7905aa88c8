"""Binary classification and regression evaluation reports.

Classification metrics are reported in percent with macro or support-weighted
averaging over the two classes. Regression covers MAE/MSE/RMSE/R2 and
Pearson/Spearman correlations; correlations that are undefined (zero variance)
are reported as None rather than NaN.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class ClassMetrics:
    precision: float  # percent
    recall: float
    f1: float
    support: int
    predicted: int
    zero_division: bool = False  # some component hit an empty denominator


@dataclass
class ClassificationReport:
    accuracy: float  # percent
    precision: float
    recall: float
    f1: float
    mode: str
    per_class: dict[int, ClassMetrics]
    confusion: dict[str, int]  # tp / fp / fn / tn with class 1 as positive
    excluded_classes: list[int] = field(default_factory=list)  # zero support, macro only

    def to_json(self) -> str:
        return json.dumps(
            {
                "Accuracy": self.accuracy,
                "Precision": self.precision,
                "Recall": self.recall,
                "F1": self.f1,
                "mode": self.mode,
                "confusion": self.confusion,
                "per_class": {
                    str(c): {
                        "Precision": m.precision,
                        "Recall": m.recall,
                        "F1": m.f1,
                        "support": m.support,
                    }
                    for c, m in self.per_class.items()
                },
                "excluded_classes": self.excluded_classes,
            },
            indent=2,
        )


@dataclass
class RegressionReport:
    mae: float
    mse: float
    rmse: float
    r2: float | None
    pearson: float | None
    spearman: float | None
    undefined: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "MAE": self.mae,
                "MSE": self.mse,
                "RMSE": self.rmse,
                "R2": self.r2,
                "PR": self.pearson,
                "Spearman": self.spearman,
                "undefined": self.undefined,
            },
            indent=2,
        )


def classification_report(
    preds: list[int], labels: list[int], mode: str = "macro"
) -> ClassificationReport:
    """Accuracy plus per-class precision/recall/F1 averaged per ``mode``.

    Macro averaging is unweighted over classes; classes absent from ``labels``
    are excluded from the macro average. Weighted averaging weights by class
    support (so weighted recall equals accuracy). Zero denominators score 0
    and set the class's zero_division flag.
    """
    if mode not in ("macro", "weighted"):
        raise MetricsError(f"unknown averaging mode {mode!r}")
    if len(preds) != len(labels):
        raise MetricsError(f"length mismatch: {len(preds)} preds vs {len(labels)} labels")
    if not preds:
        raise MetricsError("cannot report on empty inputs")
    for v in preds:
        if v not in (0, 1):
            raise MetricsError(f"predictions must be binary, got {v!r}")
    for v in labels:
        if v not in (0, 1):
            raise MetricsError(f"labels must be binary, got {v!r}")

    n = len(labels)
    correct = sum(1 for p, t in zip(preds, labels) if p == t)
    per_class: dict[int, ClassMetrics] = {}
    for c in (0, 1):
        tp = sum(1 for p, t in zip(preds, labels) if p == c and t == c)
        pred_c = sum(1 for p in preds if p == c)
        true_c = sum(1 for t in labels if t == c)
        zero_div = pred_c == 0 or true_c == 0
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / true_c if true_c else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0.0
            else 0.0
        )
        per_class[c] = ClassMetrics(
            precision=100.0 * precision,
            recall=100.0 * recall,
            f1=100.0 * f1,
            support=true_c,
            predicted=pred_c,
            zero_division=zero_div,
        )

    excluded = [c for c in (0, 1) if per_class[c].support == 0]
    if mode == "macro":
        included = [c for c in (0, 1) if c not in excluded]
        avg = lambda get: sum(get(per_class[c]) for c in included) / len(included)
    else:
        excluded = []
        avg = lambda get: sum(get(per_class[c]) * per_class[c].support for c in (0, 1)) / n

    tp1 = sum(1 for p, t in zip(preds, labels) if p == 1 and t == 1)
    fp1 = sum(1 for p, t in zip(preds, labels) if p == 1 and t == 0)
    fn1 = sum(1 for p, t in zip(preds, labels) if p == 0 and t == 1)
    return ClassificationReport(
        accuracy=100.0 * correct / n,
        precision=avg(lambda m: m.precision),
        recall=avg(lambda m: m.recall),
        f1=avg(lambda m: m.f1),
        mode=mode,
        per_class=per_class,
        confusion={"tp": tp1, "fp": fp1, "fn": fn1, "tn": n - tp1 - fp1 - fn1},
        excluded_classes=excluded,
    )


def spearman_ranks(values: list[float]) -> list[float]:
    """Fractional ranks (1-based); tied values receive the average of their ranks."""
    if not values:
        raise MetricsError("cannot rank an empty list")
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return None
    return float(xc @ yc) / denom


def regression_report(preds: list[float], targets: list[float]) -> RegressionReport:
    """Standard regression metrics; R2 = 1 - SS_res/SS_tot about the target mean."""
    if len(preds) != len(targets):
        raise MetricsError(f"length mismatch: {len(preds)} preds vs {len(targets)} targets")
    if len(preds) < 2:
        raise MetricsError("need at least 2 points for a regression report")
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    err = p - t
    mae = float(np.abs(err).mean())
    mse = float((err**2).mean())
    rmse = math.sqrt(mse)

    undefined = []
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = None
        undefined.append("R2")
    else:
        r2 = 1.0 - float((err**2).sum()) / ss_tot

    pearson = _pearson(p, t)
    if pearson is None:
        undefined.append("PR")
    rank_p = np.asarray(spearman_ranks(list(preds)))
    rank_t = np.asarray(spearman_ranks(list(targets)))
    spearman = _pearson(rank_p, rank_t)
    if spearman is None:
        undefined.append("Spearman")
    return RegressionReport(
        mae=mae, mse=mse, rmse=rmse, r2=r2, pearson=pearson, spearman=spearman,
        undefined=undefined,
    )
