"""Command-line entry point: ``coingrade {synth,extract,train,evaluate,predict}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, ann, metrics, modelio, pipeline, report, svm
from .config import PipelineConfig, load_config
from .dataset import SynthSpec, feature_cache_read, read_feature_models, synth_corpus
from .errors import ConfigError, DataError, PipelineError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5

log = logging.getLogger("coingrade")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    return cfg


def _grade_histogram(grades) -> str:
    counts = {}
    for g in grades:
        counts[g] = counts.get(g, 0) + 1
    if not counts:
        return "(no coins)"
    top = max(counts.values())
    lines = []
    for g in sorted(counts):
        bar = "#" * max(1, round(40 * counts[g] / top))
        lines.append(f"MS-{g:<3d}{counts[g]:>6d}  {bar}")
    return "\n".join(lines)


def _parse_grades(text: str | None) -> dict | None:
    if not text:
        return None
    out = {}
    try:
        for item in text.split(","):
            g, c = item.split(":")
            out[int(g)] = int(c)
    except ValueError:
        raise ConfigError(f"--grades expects 'grade:count,...', got {text!r}") from None
    return out


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    try:
        spec = SynthSpec(n_coins=args.n_coins, grade_distribution=_parse_grades(args.grades),
                         image_size=args.size, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if spec.n_coins == 0:
        warnings.warn("n_coins is 0: writing an empty manifest", stacklevel=1)
    entries = synth_corpus(spec, args.out)
    print(f"wrote {len(entries)} coins to {args.out}")
    print(_grade_histogram([e.grade for e in entries]))
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    result = pipeline.run_extract(args.manifest, args.out, cfg)
    n_train = sum(r.split == "train" for r in result.records)
    print(f"extracted {len(result.records)} coins ({n_train} train, "
          f"{len(result.records) - n_train} test) -> {args.out}")
    print("per-coin timings (obverse + reverse):")
    print(result.timer.format())
    return EXIT_OK


def _load_cache(path):
    records = feature_cache_read(path)
    if not records:
        raise DataError(f"feature cache {path} holds no records")
    return records


def cmd_train(args) -> int:
    cfg = _config(args)
    records = _load_cache(args.cache)
    X, y = pipeline.matrix(records, "train")
    echo = cfg.to_dict()
    if args.model == "svm":
        model = pipeline.fit_svm(X, y, cfg)
        svm.save(model, args.out, config=echo)
        n_sv = len(model.support_vectors)
        print(f"trained SVM on {len(y)} coins: {len(model.pairs)} pairs, {n_sv} support vectors -> {args.out}")
        return EXIT_OK
    fm = read_feature_models(args.cache)
    model, hist = pipeline.fit_ann(X, y, cfg, feature_models=fm)
    ann.save(model, args.out, hist, config=echo)
    print(f"trained MLP on {len(y)} coins ({len(model.label_map)} grades, {model.n_params} parameters) "
          f"-> {args.out}")
    print(f"final loss {hist.loss[-1]:.4f}, train accuracy {hist.accuracy[-1]:.3f}"
          + (f", validation accuracy {hist.val_accuracy[-1]:.3f}" if hist.val_accuracy else ""))
    if not args.no_figures:
        from . import plotting
        fig = Path(args.out).with_suffix(".history.png")
        plotting.plot_history(hist.to_dict(), fig)
        print(f"training curve -> {fig}")
    return EXIT_OK


def _load_any(path):
    kind = modelio.model_kind(path)
    if kind == ann.KIND:
        return ann.load(path)
    if kind == svm.KIND:
        return svm.load(path)
    raise DataError(f"{path}: unknown model format {kind!r}")


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    records = _load_cache(args.cache)
    echo = cfg.to_dict()
    out = Path(args.out)
    if args.cv:
        X, y = pipeline.matrix(records)
        fm = read_feature_models(args.cache) if args.model == "ann" else None
        cv = pipeline.cross_validate(X, y, cfg, kind=args.model, k=args.cv, feature_models=fm)
        label = "ANN" if args.model == "ann" else "SVM"
        report.write_cv_report(out, cv, label, echo, figures=not args.no_figures)
        rep = cv.aggregate
        print(f"{args.cv}-fold cross-validation, pooled over {rep.n} coins; "
              f"mean fold accuracy {cv.mean_fold_accuracy:.4f}")
    else:
        if args.model_file is None:
            raise ConfigError("evaluate needs a model file or --cv K")
        model = _load_any(args.model_file)
        X, y = pipeline.matrix(records, "test")
        pred = pipeline.predict_matrix(model, X)
        rep = metrics.classification_report(pred, y)
        label = "ANN" if isinstance(model, ann.MlpModel) else "SVM"
        report.write_report(out, rep, label, echo, figures=not args.no_figures)
        print(f"held-out test split: {rep.n} coins")
    print(metrics.format_tolerance_table({label: rep}))
    print(metrics.format_grade_report(rep))
    print(f"reports -> {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    model = _load_any(args.model_file)
    if not isinstance(model, ann.MlpModel):
        raise PipelineError("predict needs an MLP model file (train with --model ann)")
    res = pipeline.predict_coin(model, args.obverse, args.reverse, args.service, cfg)
    print(f"predicted grade: MS-{res.grade}")
    print("top probabilities:")
    for g, p in res.top(3):
        print(f"  MS-{g:<3d} {p:.4f}")
    print("timings:")
    for stage in (*pipeline.EXTRACT_STAGES, "forward", "total"):
        print(f"  {stage:<16}{res.timings[stage] * 1e3:>9.1f} ms")
    if args.json:
        print(json.dumps({"grade": res.grade, "top3": res.top(3), "timings": res.timings}, sort_keys=True))
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML pipeline config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="global seed, overrides the config")
    common.add_argument("--jobs", type=int, help="worker processes for extraction")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="coingrade", description="Feature-based coin grading pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic coin corpus")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.add_argument("--n-coins", type=int, default=500)
    s.add_argument("--size", type=int, default=256, help="image side in pixels")
    s.add_argument("--grades", help="explicit histogram, e.g. '63:40,64:60'")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", parents=[common], help="build the feature cache from a manifest")
    s.add_argument("manifest", type=Path)
    s.add_argument("--out", type=Path, required=True, help="feature cache CSV")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="fit a model on the cache's train split")
    s.add_argument("cache", type=Path)
    s.add_argument("--model", choices=("ann", "svm"), default="ann")
    s.add_argument("--out", type=Path, required=True, help="model file")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score a model or run k-fold CV")
    s.add_argument("cache", type=Path)
    s.add_argument("model_file", type=Path, nargs="?")
    s.add_argument("--model", choices=("ann", "svm"), default="ann", help="model family for --cv")
    s.add_argument("--cv", type=int, metavar="K")
    s.add_argument("--out", type=Path, required=True, help="report directory")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", parents=[common], help="grade one coin from its two photos")
    s.add_argument("model_file", type=Path)
    s.add_argument("obverse", type=Path)
    s.add_argument("reverse", type=Path)
    s.add_argument("--service", default="PCGS", help="grading service (PCGS or NGC)")
    s.add_argument("--json", action="store_true", help="also print a JSON line")
    s.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "cv", None) is not None and args.cv < 2:
        parser.error("--cv needs K >= 2")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
