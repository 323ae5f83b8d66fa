"""Evaluation: splits, tolerance accuracy, per-grade reports, cross-validation."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch

TOLERANCES = (0, 1, 2, 3)


# -- splits ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    mode: str = "holdout"
    train_fraction: float = 0.70
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("holdout", "kfold"):
            raise ValueError(f"split mode must be 'holdout' or 'kfold', got {self.mode!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.k < 2:
            raise ValueError("k must be >= 2")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(labels, plan: SplitPlan = SplitPlan()) -> tuple[np.ndarray, np.ndarray]:
    """Per-grade proportional holdout split, returned as sorted ``(train, test)`` indices.

    Each grade sends ``round(n_c * test_fraction)`` samples to test (halves
    round up), keeping at least one in train; singleton grades stay in train.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(plan.seed)
    test_frac = 1.0 - plan.train_fraction
    test = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n = len(idx)
        n_test = 0 if n == 1 else min(_round_half_up(n * test_frac), n - 1)
        test.append(rng.permutation(idx)[:n_test])
    test = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test.astype(np.int64)


def stratified_kfold(labels, plan: SplitPlan) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(train, test)`` index pairs; every sample lands in exactly one test fold.

    Samples of each grade are dealt round-robin across folds, continuing
    from where the previous grade stopped so fold sizes stay within one.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(plan.seed)
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < plan.k:
        warnings.warn(f"smallest grade has {counts.min()} samples < k={plan.k}; "
                      "those grades cannot appear in every fold", RuntimeWarning, stacklevel=2)
    fold_of = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold_of[idx] = (offset + np.arange(len(idx))) % plan.k
        offset = (offset + len(idx)) % plan.k
    all_idx = np.arange(len(labels))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(plan.k)]


# -- scores ------------------------------------------------------------------

def _pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape[0] if pred.ndim else 0} predictions vs "
                             f"{truth.shape[0] if truth.ndim else 0} labels")
    return pred, truth


def tolerance_accuracy(pred, truth, t: int = 0) -> float:
    """Fraction of predictions within ``t`` grades of the truth."""
    pred, truth = _pair(pred, truth)
    if pred.size == 0:
        return 0.0
    return float(np.mean(np.abs(pred.astype(np.int64) - truth.astype(np.int64)) <= t))


@dataclass
class GradeRow:
    grade: int
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"grade": self.grade, "precision": self.precision, "recall": self.recall,
                "f1": self.f1, "support": self.support}


@dataclass
class EvalReport:
    exact_accuracy: float
    tol_accuracy: dict
    per_grade: list[GradeRow]
    weighted: tuple[float, float, float]
    confusion: np.ndarray
    grades: list[int]
    n: int
    notes: list[str] = field(default_factory=list)

    def row(self, grade) -> GradeRow:
        for r in self.per_grade:
            if r.grade == grade:
                return r
        raise KeyError(grade)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "exact_accuracy": self.exact_accuracy,
            "tolerance_accuracy": {str(t): v for t, v in self.tol_accuracy.items()},
            "per_grade": [r.to_dict() for r in self.per_grade],
            "weighted": dict(zip(("precision", "recall", "f1"), self.weighted)),
            "grades": self.grades,
            "confusion": self.confusion.tolist(),
            "notes": self.notes,
        }


def confusion_matrix(pred, truth, grades) -> np.ndarray:
    pred, truth = _pair(pred, truth)
    pos = {g: i for i, g in enumerate(grades)}
    cm = np.zeros((len(grades), len(grades)), dtype=np.int64)
    for p, t in zip(pred.tolist(), truth.tolist()):
        cm[pos[int(t)], pos[int(p)]] += 1
    return cm


def classification_report(pred, truth) -> EvalReport:
    """Per-grade precision/recall/F1 over the union of predicted and true grades.

    Rows are truth, columns prediction.  Zero denominators score 0 and are
    listed in ``notes``.
    """
    pred, truth = _pair(pred, truth)
    grades = sorted(int(g) for g in set(pred.tolist()) | set(truth.tolist()))
    cm = confusion_matrix(pred, truth, grades)
    n = int(cm.sum())
    notes = []
    rows = []
    tp = np.diag(cm)
    col = cm.sum(axis=0)
    sup = cm.sum(axis=1)
    for i, g in enumerate(grades):
        if col[i] == 0:
            notes.append(f"grade {g}: never predicted, precision set to 0")
        p = tp[i] / col[i] if col[i] else 0.0
        r = tp[i] / sup[i] if sup[i] else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        rows.append(GradeRow(g, float(p), float(r), float(f), int(sup[i])))
    if n:
        w = sup / n
        weighted = tuple(float(np.dot(w, [getattr(r, k) for r in rows]))
                         for k in ("precision", "recall", "f1"))
    else:
        weighted = (0.0, 0.0, 0.0)
    tol = {t: tolerance_accuracy(pred, truth, t) for t in TOLERANCES}
    return EvalReport(exact_accuracy=tol[0], tol_accuracy=tol, per_grade=rows, weighted=weighted,
                      confusion=cm, grades=grades, n=n, notes=notes)


@dataclass
class BiasSummary:
    histogram: dict
    mean_signed_error: float
    n: int

    def to_dict(self) -> dict:
        return {"histogram": {str(k): v for k, v in self.histogram.items()},
                "mean_signed_error": self.mean_signed_error, "n": self.n}


def bias_summary(pred, truth) -> BiasSummary:
    """Distribution of ``pred - truth``; a negative mean means conservative grading."""
    pred, truth = _pair(pred, truth)
    err = pred.astype(np.int64) - truth.astype(np.int64)
    vals, counts = np.unique(err, return_counts=True)
    return BiasSummary(histogram={int(v): int(c) for v, c in zip(vals, counts)},
                       mean_signed_error=float(err.mean()) if err.size else 0.0, n=int(err.size))


# -- cross-validation --------------------------------------------------------

@dataclass
class CvResult:
    aggregate: EvalReport
    folds: list[EvalReport]
    fold_sizes: list[int]
    predictions: np.ndarray

    @property
    def mean_fold_accuracy(self) -> float:
        return float(np.mean([f.exact_accuracy for f in self.folds]))


def cross_validate(X, grades, fit_predict, plan: SplitPlan) -> CvResult:
    """Run ``fit_predict(X_train, y_train, X_test, fold)`` on each stratified fold.

    Any resampling belongs inside ``fit_predict`` so it only sees the fold's
    training part.  The aggregate report pools every out-of-fold prediction.
    """
    X = np.asarray(X)
    grades = np.asarray(grades)
    pooled = np.empty_like(grades)
    folds, sizes = [], []
    for f, (tr, te) in enumerate(stratified_kfold(grades, plan)):
        pred = np.asarray(fit_predict(X[tr], grades[tr], X[te], f))
        pooled[te] = pred
        folds.append(classification_report(pred, grades[te]))
        sizes.append(len(te))
    return CvResult(aggregate=classification_report(pooled, grades), folds=folds,
                    fold_sizes=sizes, predictions=pooled)


# -- rendering ---------------------------------------------------------------

def format_grade_report(report: EvalReport) -> str:
    """Aligned text table with Grade / Precision / Recall / F1 / Support columns."""
    lines = [f"{'Grade':>8} {'Precision':>10} {'Recall':>8} {'F1':>8} {'Support':>8}"]
    for r in report.per_grade:
        lines.append(f"{r.grade:>8.1f} {r.precision:>10.2f} {r.recall:>8.2f} {r.f1:>8.2f} {r.support:>8d}")
    lines.append("-" * len(lines[0]))
    lines.append(f"{'Accuracy':>8} {'':>10} {'':>8} {report.exact_accuracy:>8.2f} {report.n:>8d}")
    p, r, f = report.weighted
    lines.append(f"{'Weighted':>8} {p:>10.2f} {r:>8.2f} {f:>8.2f} {report.n:>8d}")
    return "\n".join(lines) + "\n"


def format_tolerance_table(columns: dict) -> str:
    """Exact / +-1 / +-2 / +-3 accuracy plus weighted P/R/F1, one column per model."""
    names = list(columns)
    width = max(10, *(len(n) for n in names))
    head = f"{'Metric':<20}" + "".join(f"{n:>{width + 2}}" for n in names)
    lines = [head]
    labels = {0: "Exact Accuracy", 1: "Accuracy (+-1)", 2: "Accuracy (+-2)", 3: "Accuracy (+-3)"}
    for t in TOLERANCES:
        lines.append(f"{labels[t]:<20}" + "".join(
            f"{columns[n].tol_accuracy[t] * 100:>{width + 1}.1f}%" for n in names))
    for i, label in enumerate(("Weighted Precision", "Weighted Recall", "Weighted F1-Score")):
        lines.append(f"{label:<20}" + "".join(f"{columns[n].weighted[i]:>{width + 2}.2f}" for n in names))
    return "\n".join(lines) + "\n"


def format_confusion(report: EvalReport) -> str:
    g = report.grades
    lines = ["truth\\pred," + ",".join(str(x) for x in g)]
    for grade, row in zip(g, report.confusion):
        lines.append(str(grade) + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def grade_rows_json(report: EvalReport) -> str:
    return json.dumps([r.to_dict() for r in report.per_grade], indent=1) + "\n"
