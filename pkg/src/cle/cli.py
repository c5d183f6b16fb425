"""``cle`` command line: explain one instance, run an experiment, or estimate cost.

Every option may also come from a JSON ``--config`` file whose keys are the
long option names with dashes replaced by underscores; command-line flags
take precedence.  Exit codes: 2 configuration error, 3 model failure,
4 degenerate explanation.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import report
from .datasets import TEST, TRAIN, VALIDATION, bundled_polarity, bundled_tiny, load_text_tsv
from .domains import ImageDomain, TextDomain
from .errors import CLEError, ConfigError, ModelFailure
from .eval import (LINEAR, eval_gold_recall, eval_model_choice, eval_trust,
                   explain_all, results_csv, results_json)
from .explainer import METHODS, ExplainConfig, calibrate, estimate_cost, explain
from .models import (HttpModel, SubprocessModel, ToySentimentModel, train_forest, train_knn,
                     train_logreg, train_tree)
from .netpbm import read_pgm, read_ppm
from .representation import CombinationSpec
from .sampler import KernelConfig

log = logging.getLogger("cle")

EXIT_CONFIG, EXIT_MODEL, EXIT_DEGENERATE = 2, 3, 4
BUILTIN_MODELS = ("toy", "logreg", "tree", "forest", "knn")
EXPERIMENTS = ("faithfulness", "trust", "model-choice")

# defaults applied after merging config file and flags
DEFAULTS = {
    "method": "cle", "samples": 15000, "k": 10, "spans": "2", "focus": None, "sigma": None,
    "seed": 0, "model": None, "model_cmd": None, "model_url": None, "classes": None,
    "modality": "text", "model_params": {}, "dataset": "polarity", "out": "cle-out",
    "report": False, "text": None, "instance": None, "index": None, "grid": "4,4",
    "methods": "cle,lime,greedy,random", "instances": None, "trials": None,
    "unrelated_fraction": 0.25, "P": "10", "unit_times": None, "validation_fraction": 0.25,
    "max_attempts": 200, "n_trees": 30,
}


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON file with option values")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--samples", type=int, metavar="N", help="perturbation samples")
    p.add_argument("--k", type=int, metavar="K", help="explanation length")
    p.add_argument("--spans", metavar="B", help='combination sizes, e.g. "2,3"')
    p.add_argument("--focus", metavar="I,J,...", help="feature indices to combine")
    p.add_argument("--sigma", type=float, metavar="F", help="kernel width")
    p.add_argument("--seed", type=int, metavar="S")
    m = p.add_mutually_exclusive_group()
    m.add_argument("--model", metavar="NAME", help=f"built-in model: {', '.join(BUILTIN_MODELS)}")
    m.add_argument("--model-cmd", metavar="CMD", help="external model as a subprocess")
    m.add_argument("--model-url", metavar="URL", help="external model over HTTP")
    p.add_argument("--classes", metavar="A,B,...", help="class labels of an external model")
    p.add_argument("--modality", choices=["text", "image"])
    p.add_argument("--dataset", metavar="PATH", help="'polarity', 'tiny' or a label<TAB>text file")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="cle", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("explain", help="explain one instance")
    _common(ex)
    src = ex.add_mutually_exclusive_group()
    src.add_argument("--text", help="text instance given inline")
    src.add_argument("--instance", metavar="PATH", help="text file or PPM/PGM image")
    src.add_argument("--index", type=int, help="index into the dataset's test split")
    ex.add_argument("--grid", metavar="R,C", help="image segment grid")
    ex.add_argument("--report", action="store_true", default=None, help="write report.html")

    ev = sub.add_parser("eval", help="run an experiment")
    ev.add_argument("experiment", choices=EXPERIMENTS)
    _common(ev)
    ev.add_argument("--methods", metavar="M,...")
    ev.add_argument("--instances", type=int, metavar="N", help="use the first N test instances")
    ev.add_argument("--trials", type=int)
    ev.add_argument("--unrelated-fraction", type=float)
    ev.add_argument("--P", metavar="P,...", help="explained instances per classifier")
    ev.add_argument("--n-trees", type=int)
    ev.add_argument("--max-attempts", type=int)

    es = sub.add_parser("estimate", help="predict explanation run time")
    _common(es)
    src = es.add_mutually_exclusive_group()
    src.add_argument("--text")
    src.add_argument("--instance", metavar="PATH")
    src.add_argument("--index", type=int)
    es.add_argument("--grid", metavar="R,C")
    es.add_argument("--unit-times", metavar="PATH",
                    help="JSON with perturb/predict/extend/fit seconds; skips calibration")
    return ap


def merge_config(args):
    """Flags over config file over defaults."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    specs = [k for k in ("model", "model_cmd", "model_url") if cfg[k]]
    if len(specs) > 1:
        raise ConfigError("give exactly one of model, model_cmd, model_url")
    return cfg


def _ints(text, what):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    if isinstance(text, int):
        return (text,)
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated integers: {text!r}") from None


def _list(text):
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def explain_config(cfg):
    spans = _ints(cfg["spans"], "spans")
    focus = _ints(cfg["focus"], "focus")
    kernel = None
    if cfg["sigma"] is not None:
        kernel = KernelConfig(float(cfg["sigma"]), "cosine")
    try:
        return ExplainConfig(n_samples=int(cfg["samples"]), K=int(cfg["k"]), kernel=kernel,
                             combination=CombinationSpec(spans=spans, focus=focus),
                             seed=int(cfg["seed"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_dataset(name):
    if name == "polarity":
        return bundled_polarity()
    if name == "tiny":
        return bundled_tiny()
    if not os.path.exists(name):
        raise ConfigError(f"dataset not found: {name}")
    return load_text_tsv(name)


def build_model(cfg, dataset=None):
    params = dict(cfg["model_params"] or {})
    classes = _list(cfg["classes"]) if cfg["classes"] else None
    if cfg["model_cmd"]:
        return SubprocessModel(cfg["model_cmd"], classes=classes, modality=cfg["modality"])
    if cfg["model_url"]:
        return HttpModel(cfg["model_url"], classes=classes, modality=cfg["modality"])
    name = cfg["model"] or "toy"
    if name == "toy":
        return ToySentimentModel()
    if name not in BUILTIN_MODELS:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")
    train = (dataset or load_dataset(cfg["dataset"])).split(TRAIN)
    try:
        if name == "logreg":
            params.setdefault("max_features", 10)
            return train_logreg(train, **params)
        if name == "tree":
            params.setdefault("max_distinct_features", 10)
            return train_tree(train, **params)
        if name == "forest":
            params.setdefault("seed", int(cfg["seed"]))
            return train_forest(train, **params)
        return train_knn(train, **params)
    except TypeError as exc:
        raise ConfigError(f"bad model_params for {name}: {exc}") from exc


def load_instance(cfg):
    """Returns ``(instance, domain, ref)``."""
    grid = _ints(cfg["grid"], "grid")
    if cfg["text"] is not None:
        return cfg["text"], TextDomain(), "text"
    if cfg["instance"] is not None:
        path = cfg["instance"]
        if not os.path.exists(path):
            raise ConfigError(f"instance file not found: {path}")
        if path.lower().endswith((".ppm", ".pnm")):
            return read_ppm(path), ImageDomain(grid), os.path.basename(path)
        if path.lower().endswith(".pgm"):
            return read_pgm(path), ImageDomain(grid), os.path.basename(path)
        with open(path, encoding="utf-8") as fh:
            return fh.read().strip(), TextDomain(), os.path.basename(path)
    if cfg["index"] is not None:
        test = load_dataset(cfg["dataset"]).split(TEST)
        if not 0 <= cfg["index"] < len(test):
            raise ConfigError(f"index {cfg['index']} outside the test split")
        return test.instances[cfg["index"]], TextDomain(), f"test:{cfg['index']}"
    raise ConfigError("give --text, --instance or --index")


def _write(out, name, text):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _needs_dataset(cfg):
    return not (cfg["model_cmd"] or cfg["model_url"] or (cfg["model"] or "toy") == "toy")


# -- commands -------------------------------------------------------------------

def cmd_explain(cfg):
    instance, domain, ref = load_instance(cfg)
    model = build_model(cfg, load_dataset(cfg["dataset"]) if _needs_dataset(cfg) else None)
    ecfg = explain_config(cfg)
    try:
        exp = explain(instance, model, cfg["method"], ecfg, domain, ref)
    finally:
        getattr(model, "close", lambda: None)()
    _write(cfg["out"], "explanation.json", exp.to_json(include_timings=False))
    _write(cfg["out"], "timings.json", json.dumps(exp.timings, indent=2, sort_keys=True) + "\n")
    if cfg["report"]:
        if isinstance(domain, ImageDomain):
            html = report.image_report(exp, instance, domain.segment_map(instance))
        else:
            html = report.text_report(exp, instance)
        _write(cfg["out"], "report.html", html)
    print(f"{exp.method} explanation of class {exp.class_label!r}:")
    for t in exp.terms:
        coef = "" if t.coefficient is None else f"{t.coefficient:+.4f}"
        print(f"  {t.rank:>3}  {t.label:<30} {coef}")
    if exp.local_prediction is not None:
        print(f"local prediction {exp.local_prediction:.4f}, "
              f"black box {exp.black_box_prediction:.4f}")
    if exp.degenerate:
        print("degenerate explanation: intercept only", file=sys.stderr)
        return EXIT_DEGENERATE
    return 0


def with_validation(dataset, fraction, seed):
    """Move a random ``fraction`` of the training split to validation if none exists."""
    if VALIDATION in dataset.splits:
        return dataset
    rng = np.random.default_rng(seed)
    train = [i for i, s in enumerate(dataset.splits) if s == TRAIN]
    moved = set(rng.choice(train, size=int(round(fraction * len(train))), replace=False).tolist())
    splits = [VALIDATION if i in moved else s for i, s in enumerate(dataset.splits)]
    return replace(dataset, splits=splits)


def _table(rows, columns):
    widths = [max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    for r in rows:
        lines.append("  ".join(_fmt(r.get(c)).ljust(w) for c, w in zip(columns, widths)))
    return "\n".join(lines)


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _mean_se(values):
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def cmd_eval(cfg):
    methods = _list(cfg["methods"])
    bad = set(methods) - set(METHODS)
    if bad:
        raise ConfigError(f"unknown methods: {', '.join(sorted(bad))}")
    ecfg = explain_config(cfg)
    dataset = load_dataset(cfg["dataset"])
    exp_name = cfg.get("experiment")
    meta = {"experiment": exp_name, "config": ecfg.echo(), "methods": methods,
            "dataset": cfg["dataset"]}
    if exp_name == "model-choice":
        budgets = list(_ints(cfg["P"], "P"))
        trials = cfg["trials"] or 100
        dataset = with_validation(dataset, cfg["validation_fraction"], cfg["seed"])
        res = eval_model_choice(methods, dataset, P=budgets, trials=trials, cfg=ecfg,
                                seed=int(cfg["seed"]), n_trees=int(cfg["n_trees"]),
                                max_attempts=int(cfg["max_attempts"]))
        rows = []
        for b in budgets:
            for m in methods:
                acc, se = _mean_se([float(r["choices"][b][m]["correct"]) for r in res.per_trial])
                rows.append({"P": b, "method": m, "accuracy": acc, "se": se})
        columns = ["P", "method", "accuracy", "se"]
        per_trial = res.per_trial
    else:
        model = build_model(cfg, dataset)
        test = dataset.split(TEST).instances
        if cfg["instances"]:
            test = test[:int(cfg["instances"])]
        try:
            exps = explain_all(model, test, methods, ecfg)
            if exp_name == "faithfulness":
                rows, per_trial = [], []
                for m in methods:
                    rec = eval_gold_recall(m, model, test, ecfg, explanations=exps[m])
                    mean, se = _mean_se(rec.per_instance)
                    row = {"method": m, "recall": mean, "recall_se": se}
                    if m in LINEAR:
                        errs = [e.fidelity_error for e in exps[m]]
                        row["abs_error"], row["abs_error_se"] = _mean_se(errs)
                    rows.append(row)
                    per_trial.append({"method": m, "recall": rec.per_instance})
                columns = ["method", "recall", "recall_se", "abs_error", "abs_error_se"]
            else:
                res = eval_trust(methods, model, test, float(cfg["unrelated_fraction"]), ecfg,
                                 trials=cfg["trials"] or 5, seed=int(cfg["seed"]),
                                 explanations=exps)
                rows = []
                for m in methods:
                    mean, se = _mean_se([r[m] for r in res.per_trial])
                    rows.append({"method": m, "f1": mean, "f1_se": se})
                columns = ["method", "f1", "f1_se"]
                per_trial = res.per_trial
        finally:
            getattr(model, "close", lambda: None)()
    _write(cfg["out"], "results.json", results_json(rows, per_trial, meta))
    _write(cfg["out"], "results.csv", results_csv(rows, columns))
    print(_table(rows, columns))
    return 0


def format_cost(rep):
    n = rep.n_samples
    lines = [f"N = {n}, d = {rep.d}, combined features = {rep.focus_size}, "
             f"extension length = {rep.extension_length}",
             f"  perturb  N * t_pert = {rep.totals['perturb']:.6f} s",
             f"  predict  N * t_pred = {rep.totals['predict']:.6f} s",
             f"  extend   N * t_ext  = {rep.totals['extend']:.6f} s",
             f"  fit      t_fit      = {rep.totals['fit']:.6f} s",
             f"  T = N * (t_pert + t_pred + t_ext) + t_fit = {rep.total:.6f} s",
             f"dominant stage: {rep.dominant}"]
    return "\n".join(lines)


def cmd_estimate(cfg):
    instance, domain, _ = load_instance(cfg)
    ecfg = explain_config(cfg)
    spans = ecfg.combination.spans
    if cfg["unit_times"]:
        try:
            with open(cfg["unit_times"], encoding="utf-8") as fh:
                units = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read unit times: {exc}") from exc
        missing = {"perturb", "predict", "extend", "fit"} - set(units)
        if missing:
            raise ConfigError(f"unit times lack {', '.join(sorted(missing))}")
        d = domain.represent(instance).d
        focus = len(ecfg.combination.focus) if ecfg.combination.focus else min(ecfg.K, d)
    else:
        model = build_model(cfg, load_dataset(cfg["dataset"]) if _needs_dataset(cfg) else None)
        try:
            units, d, focus = calibrate(instance, model, ecfg, domain)
        finally:
            getattr(model, "close", lambda: None)()
    rep = estimate_cost(d, ecfg.n_samples, focus, spans, units)
    doc = rep.to_dict()
    doc["unit_times"] = {k: units[k] for k in ("perturb", "predict", "extend", "fit")}
    _write(cfg["out"], "estimate.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(format_cost(rep))
    return 0


COMMANDS = {"explain": cmd_explain, "eval": cmd_eval, "estimate": cmd_estimate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = merge_config(args)
        if args.command == "eval":
            cfg["experiment"] = args.experiment
        return COMMANDS[args.command](cfg)
    except ModelFailure as exc:
        print(f"model failure: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CLEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
