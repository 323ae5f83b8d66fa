"""End-to-end stages shared by the CLI and the acceptance suite."""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ann, features, imaging, metrics, resample, svm
from .config import PipelineConfig
from .dataset import (FeatureRecord, ManifestEntry, feature_cache_write, load_manifest,
                      write_feature_models)
from .errors import CoinDataError, DataError, PipelineError

EXTRACT_STAGES = ("preprocess", "sobel", "wedge_stats", "hsv_brightness")


@dataclass
class StageTimer:
    samples: dict = field(default_factory=dict)

    def add(self, stage: str, seconds: float) -> None:
        self.samples.setdefault(stage, []).append(seconds)

    def summary(self) -> dict:
        out = {}
        for stage, vals in self.samples.items():
            v = np.asarray(vals)
            out[stage] = {"mean": float(v.mean()), "p95": float(np.percentile(v, 95)), "n": int(v.size)}
        return out

    def format(self) -> str:
        lines = [f"{'stage':<16}{'mean ms':>10}{'p95 ms':>10}"]
        for stage, s in self.summary().items():
            lines.append(f"{stage:<16}{s['mean'] * 1e3:>10.1f}{s['p95'] * 1e3:>10.1f}")
        return "\n".join(lines)


def _extract_entry(args):
    entry, pre_cfg = args
    try:
        obv = features.extract_side(imaging.load_rgb(entry.obverse_path), pre_cfg)
        rev = features.extract_side(imaging.load_rgb(entry.reverse_path), pre_cfg)
    except DataError as exc:
        raise CoinDataError(entry.coin_id, exc) from exc
    except ValueError as exc:
        raise CoinDataError(entry.coin_id, exc) from exc
    return obv, rev


def extract_sides(entries, pre_cfg: imaging.PreprocessConfig, jobs: int = 1):
    """Per-coin side features in manifest order, whatever ``jobs`` is."""
    work = [(e, pre_cfg) for e in entries]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_extract_entry, work, chunksize=4))
    return [_extract_entry(w) for w in work]


@dataclass
class ExtractResult:
    records: list[FeatureRecord]
    models: features.FeatureModels
    timer: StageTimer


def assign_splits(entries: list[ManifestEntry], plan: metrics.SplitPlan) -> list[str]:
    tags = [e.split for e in entries]
    if entries and all(tags):
        return tags
    if any(tags):
        raise DataError("manifest gives split tags for some rows but not all")
    train, test = metrics.stratified_split([e.grade for e in entries], plan)
    out = [""] * len(entries)
    for i in train:
        out[i] = "train"
    for i in test:
        out[i] = "test"
    return out


def extract_records(entries: list[ManifestEntry], cfg: PipelineConfig) -> ExtractResult:
    sides = extract_sides(entries, cfg.preprocess, cfg.jobs)
    timer = StageTimer()
    for obv, rev in sides:
        total = 0.0
        for stage in EXTRACT_STAGES:
            t = obv.timings[stage] + rev.timings[stage]
            timer.add(stage, t)
            total += t
        timer.add("total", total)
    tags = assign_splits(entries, cfg.split)
    train_sides = [s for s, t in zip(sides, tags) if t == "train"]
    models = features.fit_feature_models(train_sides, seed=cfg.seed, params=cfg.brightness,
                                         k=cfg.clusters.k, n_init=cfg.clusters.n_init,
                                         max_iter=cfg.clusters.max_iter)
    records = []
    for e, (obv, rev), tag in zip(entries, sides, tags):
        v = features.assemble(obv, rev, e.service, models)
        records.append(FeatureRecord(e.coin_id, v, e.grade, e.obverse_path.as_posix(),
                                     e.reverse_path.as_posix(), tag))
    return ExtractResult(records, models, timer)


def run_extract(manifest_path, cache_path, cfg: PipelineConfig) -> ExtractResult:
    entries = load_manifest(manifest_path)
    if not entries:
        raise DataError(f"manifest {manifest_path} lists no coins")
    result = extract_records(entries, cfg)
    feature_cache_write(cache_path, result.records)
    write_feature_models(cache_path, result.models, {"config": cfg.to_dict()})
    return result


def matrix(records, split: str | None = None):
    rows = [r for r in records if split is None or r.split == split]
    if not rows:
        raise DataError(f"no records in split {split!r}")
    X = np.vstack([r.values for r in rows])
    y = np.array([r.grade for r in rows], dtype=np.int64)
    return X, y


# -- model fitting -----------------------------------------------------------

def fit_ann(X, y, cfg: PipelineConfig, feature_models=None, seed_offset: int = 0):
    """standardize -> SMOTE -> noise copies -> MLP, all on the training rows given."""
    stats = features.fit_standardization(X)
    Z = stats.apply(X)
    smote_cfg = cfg.smote if not seed_offset else _reseed(cfg.smote, seed_offset)
    aug_cfg = cfg.augment if not seed_offset else _reseed(cfg.augment, seed_offset)
    train_cfg = cfg.train if not seed_offset else _reseed(cfg.train, seed_offset)
    bal = resample.smote(Z, y, smote_cfg)
    aug = resample.gaussian_augment(bal.X, bal.y, aug_cfg)
    return ann.train(aug.X, aug.y, train_cfg, stats=stats, feature_models=feature_models)


def fit_svm(X, y, cfg: PipelineConfig):
    """standardize -> SVM; no rebalancing, on purpose."""
    stats = features.fit_standardization(X)
    return svm.svm_train(stats.apply(X), y, cfg.svm, stats=stats)


def _reseed(section, offset: int):
    return dataclasses.replace(section, seed=section.seed + offset)


def predict_matrix(model, X) -> np.ndarray:
    if isinstance(model, ann.MlpModel):
        return ann.predict_grades(model, X)
    if isinstance(model, svm.SvmModel):
        return svm.svm_predict(model, X)
    raise PipelineError(f"unsupported model type {type(model).__name__}")


def cross_validate(X, y, cfg: PipelineConfig, kind: str = "ann", k: int | None = None,
                   feature_models=None) -> metrics.CvResult:
    plan = dataclasses.replace(cfg.split, mode="kfold", k=k or cfg.split.k)

    def fit_predict(Xtr, ytr, Xte, fold):
        if kind == "ann":
            model, _ = fit_ann(Xtr, ytr, cfg, feature_models, seed_offset=fold + 1)
        else:
            model = fit_svm(Xtr, ytr, cfg)
        return predict_matrix(model, Xte)

    return metrics.cross_validate(X, y, fit_predict, plan)


# -- single-coin prediction --------------------------------------------------

@dataclass
class Prediction:
    grade: int
    probabilities: dict
    timings: dict

    def top(self, n: int = 3):
        return sorted(self.probabilities.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


def predict_coin(model: ann.MlpModel, obverse_path, reverse_path, service,
                 cfg: PipelineConfig) -> Prediction:
    if model.feature_models is None:
        raise PipelineError("model file carries no feature models; retrain from an extracted cache")
    t0 = time.perf_counter()
    obv_rgb = imaging.load_rgb(obverse_path)
    rev_rgb = imaging.load_rgb(reverse_path)
    t_load = time.perf_counter() - t0
    obv = features.extract_side(obv_rgb, cfg.preprocess)
    rev = features.extract_side(rev_rgb, cfg.preprocess)
    timings = {s: obv.timings[s] + rev.timings[s] for s in EXTRACT_STAGES}
    timings["preprocess"] += t_load
    t1 = time.perf_counter()
    v = features.assemble(obv, rev, service, model.feature_models)
    grade, probs = ann.predict(model, v)
    timings["forward"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    return Prediction(grade=int(grade),
                      probabilities={int(g): float(p) for g, p in zip(model.label_map, probs)},
                      timings=timings)
