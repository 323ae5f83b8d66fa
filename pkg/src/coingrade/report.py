"""Writes an evaluation bundle: text tables, JSON, CSV and PNG figures."""

from __future__ import annotations

import json
from pathlib import Path

from . import metrics, plotting


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def write_report(out_dir, report: metrics.EvalReport, label: str = "model",
                 config: dict | None = None, figures: bool = True) -> dict:
    """One model's report; returns the paths written, keyed by artifact."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bias = metrics.bias_summary(*_pred_truth(report))
    paths = {
        "tolerance": out / "tolerance.txt",
        "grade_report": out / "grade_report.txt",
        "grade_json": out / "grade_report.json",
        "confusion": out / "confusion.csv",
        "summary": out / "report.json",
    }
    paths["tolerance"].write_text(metrics.format_tolerance_table({label: report}), encoding="utf-8")
    paths["grade_report"].write_text(metrics.format_grade_report(report), encoding="utf-8")
    paths["grade_json"].write_text(metrics.grade_rows_json(report), encoding="utf-8")
    paths["confusion"].write_text(metrics.format_confusion(report), encoding="utf-8")
    _dump(paths["summary"], {"label": label, "report": report.to_dict(), "bias": bias.to_dict(),
                             "config": config or {}})
    if figures:
        paths["fig_confusion"] = out / "confusion.png"
        paths["fig_tolerance"] = out / "tolerance.png"
        paths["fig_bias"] = out / "bias.png"
        plotting.plot_confusion(report, paths["fig_confusion"], title=label)
        plotting.plot_tolerance({label: report}, paths["fig_tolerance"])
        plotting.plot_bias(bias, paths["fig_bias"])
    return paths


def _pred_truth(report: metrics.EvalReport):
    # rebuild (pred, truth) pairs from the confusion counts
    pred, truth = [], []
    for i, t in enumerate(report.grades):
        for j, p in enumerate(report.grades):
            n = int(report.confusion[i, j])
            pred += [p] * n
            truth += [t] * n
    return pred, truth


def write_cv_report(out_dir, cv: metrics.CvResult, label: str = "model",
                    config: dict | None = None, figures: bool = True) -> dict:
    out = Path(out_dir)
    paths = {"aggregate": write_report(out / "aggregate", cv.aggregate, f"{label} ({len(cv.folds)}-fold CV)",
                                       config, figures)}
    for f, rep in enumerate(cv.folds):
        paths[f"fold_{f}"] = write_report(out / f"fold_{f}", rep, f"{label} fold {f}", config, figures=False)
    _dump(out / "cv_summary.json", {
        "k": len(cv.folds), "fold_sizes": cv.fold_sizes,
        "fold_exact_accuracy": [r.exact_accuracy for r in cv.folds],
        "mean_fold_accuracy": cv.mean_fold_accuracy,
        "pooled": cv.aggregate.to_dict()})
    return paths
