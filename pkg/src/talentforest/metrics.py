"""Per-class rates, one-vs-rest ROC and the k-fold evaluation harness."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import seeding
from .dataset import Dataset, stratified_folds
from .errors import DegenerateDataError, ParameterError, UndefinedMetricError
from .forest import ForestParams, train_forest, vote_counts


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = rows of true class ``i`` predicted as ``j``."""

    counts: np.ndarray

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        """(TP, FP, TN, FN) for class ``c``."""
        m = self.counts
        tp = int(m[c, c])
        fn = int(m[c].sum()) - tp
        fp = int(m[:, c].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, fp, tn, fn

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total


def confusion_matrix(truth, predicted, n_classes: int | None = None) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ParameterError(f"length mismatch: {len(truth)} truths, {len(predicted)} predictions")
    if truth.size == 0:
        raise ParameterError("confusion matrix needs at least one row")
    if (truth < 0).any() or (predicted < 0).any():
        raise ParameterError("class indices must be non-negative")
    k = n_classes or int(max(truth.max(), predicted.max())) + 1
    if truth.max() >= k or predicted.max() >= k:
        raise ParameterError(f"class index outside [0, {k})")
    counts = np.bincount(truth * k + predicted, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


class Rates(NamedTuple):
    """``None`` marks a rate whose denominator is zero."""

    tpr: float | None
    fpr: float | None


def class_rates(cm: ConfusionMatrix, c: int) -> Rates:
    """TPR = TP/(TP+FN) and FPR = FP/(TN+FP) for class ``c`` against the rest."""
    if not 0 <= c < len(cm.counts):
        raise ParameterError(f"class index {c} out of range")
    tp, fp, tn, fn = cm.one_vs_rest(c)
    tpr = tp / (tp + fn) if tp + fn else None
    fpr = fp / (tn + fp) if tn + fp else None
    return Rates(tpr, fpr)


def roc_curve(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) points from (0, 0) to (1, 1), one per distinct threshold."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise ParameterError("scores and truth differ in length")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative row")
    order = np.argsort(-scores, kind="stable")
    s, t = scores[order], truth[order]
    # a threshold boundary sits after the last row of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(t)[ends]
    fp = (ends + 1) - tp
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return fpr, tpr


def roc_auc(scores, truth) -> float:
    """Trapezoidal area under the ROC curve swept over all score thresholds."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    fpr, tpr = roc_curve(scores, truth)
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    # trapezoids on integer counts, divided once, so 1.0 and 0.5 come out exact
    fp = np.rint(fpr * n_neg).astype(np.int64)
    tp = np.rint(tpr * n_pos).astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2 * n_pos * n_neg)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    tpr: float | None
    fpr: float | None
    auc: float | None


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    classes: tuple[ClassMetrics, ...]
    confusion: ConfusionMatrix
    mean_auc: float | None
    fold_of_row: tuple[int, ...]
    vote_fractions: np.ndarray  # (n, k) held-out vote fractions

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy()


def per_class_metrics(truth, fractions, labels) -> tuple[tuple[ClassMetrics, ...], ConfusionMatrix, float | None]:
    """Table-1 style metrics from pooled held-out vote fractions."""
    truth = np.asarray(truth)
    fractions = np.asarray(fractions, dtype=float)
    predicted = np.argmax(fractions, axis=1)
    cm = confusion_matrix(truth, predicted, len(labels))
    rows = []
    for c, label in enumerate(labels):
        rates = class_rates(cm, c)
        try:
            auc = roc_auc(fractions[:, c], truth == c)
        except UndefinedMetricError:
            auc = None
        rows.append(ClassMetrics(label, rates.tpr, rates.fpr, auc))
    aucs = [r.auc for r in rows if r.auc is not None]
    mean_auc = float(np.mean(aucs)) if aucs else None
    return tuple(rows), cm, mean_auc


def cross_validate(data: Dataset, params: ForestParams | None = None, k: int = 10,
                   seed: int = 0, n_jobs: int = 1) -> EvaluationReport:
    """Stratified k-fold evaluation with pooled held-out predictions.

    Fold ``i`` trains a forest seeded from ``(params.seed, i)``. Every row is
    predicted exactly once, by the forest that did not see it.
    """
    params = params or ForestParams()
    folds = stratified_folds(data, k, seed)
    targets = data.require_targets()
    for fold in range(k):
        train_idx = folds.train_indices(fold)
        if len(np.unique(targets[train_idx])) < 2:
            raise DegenerateDataError(f"fold {fold}: training part holds fewer than 2 classes")

    def run(fold):
        train = data.subset(folds.train_indices(fold))
        test_idx = folds.test_indices(fold)
        fold_params = replace(params, seed=seeding.child_seed(params.seed, fold))
        model = train_forest(train, fold_params)
        return test_idx, vote_counts(model, data.rows[test_idx]) / fold_params.n_trees

    if n_jobs == 1:
        results = [run(f) for f in range(k)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            results = list(pool.map(run, range(k)))

    fractions = np.full((len(data), data.schema.n_classes), np.nan)
    for test_idx, frac in results:
        fractions[test_idx] = frac
    classes, cm, mean_auc = per_class_metrics(targets, fractions, data.schema.target_levels)
    return EvaluationReport(classes, cm, mean_auc, folds.assignment, fractions)


REPORT_COLUMNS = ("CLASS", "TP RATE", "FP RATE", "AUC")


def _cell(v) -> str:
    return "undefined" if v is None else f"{v:.3f}"


def report_rows(report: EvaluationReport) -> list[list[str]]:
    rows = [[c.label, _cell(c.tpr), _cell(c.fpr), _cell(c.auc)] for c in report.classes]
    rows.append(["MEAN AUC", "", "", _cell(report.mean_auc)])
    return rows


def format_report_table(report: EvaluationReport) -> str:
    rows = [list(REPORT_COLUMNS)] + report_rows(report)
    widths = [max(len(r[i]) for r in rows) for i in range(len(REPORT_COLUMNS))]
    lines = []
    for n, r in enumerate(rows):
        if n == len(rows) - 1:
            lines.append("-" * (sum(widths) + 2 * (len(widths) - 1)))
        lines.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                               for i, (cell, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(lines) + "\n"


def _exact(v) -> str:
    return "undefined" if v is None else repr(float(v))


def format_report_tsv(report: EvaluationReport) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    for c in report.classes:
        lines.append("\t".join([c.label, _exact(c.tpr), _exact(c.fpr), _exact(c.auc)]))
    lines.append("\t".join(["MEAN AUC", "", "", _exact(report.mean_auc)]))
    return "\n".join(lines) + "\n"


def parse_report_tsv(text: str) -> dict[str, tuple[float | None, ...]]:
    """Read :func:`format_report_tsv` output back as ``{class: (tpr, fpr, auc)}``."""
    lines = text.splitlines()
    if not lines or tuple(lines[0].split("\t")) != REPORT_COLUMNS:
        raise ParameterError("not an evaluation report")

    def num(cell):
        return None if cell in ("", "undefined") else float(cell)

    return {cells[0]: tuple(num(c) for c in cells[1:])
            for cells in (ln.split("\t") for ln in lines[1:] if ln)}
