"""Simulated-user experiments: gold-feature recall, local fidelity, trust
F1 and choosing between two classifiers with injected noisy features."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import TEST, TRAIN, VALIDATION, SparseDataset
from .errors import PairGenerationFailed, Unsupported
from .explainer import (ExplainConfig, default_domain, draw_samples, explain_from_samples,
                        explain_greedy, explain_random, predict_masks)
from .models.tree import train_forest

log = logging.getLogger(__name__)

LINEAR = ("lime", "cle")


def explain_all(model, instances, methods, cfg, domain=None, refs=None, progress=None):
    """Explanations for every instance; LIME and CLE share one perturbation batch.

    Returns ``{method: [Explanation, ...]}`` aligned with ``instances``.
    """
    domain = domain or default_domain(model)
    refs = refs or [str(i) for i in range(len(instances))]
    out = {m: [] for m in methods}
    linear = [m for m in methods if m in LINEAR]
    for i, (x, ref) in enumerate(zip(instances, refs)):
        if linear:
            samples = draw_samples(x, model, cfg, domain, ref)
            for m, e in explain_from_samples(samples, model, linear).items():
                out[m].append(e)
        if "greedy" in methods:
            out["greedy"].append(explain_greedy(x, model, cfg, domain, ref))
        if "random" in methods:
            rcfg = replace(cfg, seed=cfg.seed + i)
            out["random"].append(explain_random(x, rcfg, domain, ref, model=model))
        if progress:
            progress(i + 1, len(instances))
    return out


def _unit_keys(domain, x):
    return [domain.unit_key(u) for u in domain.represent(x).units]


# -- faithfulness ---------------------------------------------------------------

@dataclass
class RecallResult:
    method: str
    mean: float
    per_instance: list
    skipped: int


def instance_recall(exp, keys, gold):
    """Share of the gold features present in the instance that the explanation covers."""
    present = set(keys) & set(gold)
    if not present:
        return None
    covered = {keys[i] for i in exp.member_indices()} & present
    return len(covered) / len(present)


def eval_gold_recall(method, model, instances, cfg=ExplainConfig(), domain=None,
                     explanations=None):
    gold = model.gold_features()
    domain = domain or default_domain(model)
    if explanations is None:
        explanations = explain_all(model, instances, [method], cfg, domain)[method]
    values = []
    for x, exp in zip(instances, explanations):
        values.append(instance_recall(exp, _unit_keys(domain, x), gold))
    kept = [v for v in values if v is not None]
    mean = float(np.mean(kept)) if kept else float("nan")
    return RecallResult(method, mean, values, len(values) - len(kept))


def eval_fidelity(method, model, instances, cfg=ExplainConfig(), domain=None, explanations=None):
    """Mean |local prediction - black-box probability| for the explained class."""
    if method not in LINEAR:
        raise Unsupported(f"{method} has no local prediction")
    if explanations is None:
        explanations = explain_all(model, instances, [method], cfg, domain)[method]
    return float(np.mean([e.fidelity_error for e in explanations]))


# -- trust ---------------------------------------------------------------------

def f1_score(truth, judged):
    """F1 of the positive (trustworthy) class."""
    truth = np.asarray(truth, dtype=bool)
    judged = np.asarray(judged, dtype=bool)
    tp = float(np.sum(truth & judged))
    if tp == 0:
        return 1.0 if not truth.any() and not judged.any() else 0.0
    precision = tp / judged.sum()
    recall = tp / truth.sum()
    return 2 * precision * recall / (precision + recall)


def _threshold(probs):
    """Decision threshold for the explained (top) class of a probability vector."""
    if probs.size == 2:
        return 0.5
    return float(np.sort(probs)[-2])


def linear_judgment(exp, unrelated_idx, threshold):
    """Trustworthy iff dropping the unrelated terms leaves the linear model's class unchanged."""
    before = exp.local_prediction
    drop = sum(t.coefficient for t in exp.terms if set(t.indices) & unrelated_idx)
    return (before >= threshold) == (before - drop >= threshold)


def list_judgment(exp, unrelated_idx):
    return not any(set(t.indices) & unrelated_idx for t in exp.terms)


@dataclass
class TrustResult:
    f1: dict
    per_trial: list


def eval_trust(methods, model, instances, unrelated_fraction=0.25, cfg=ExplainConfig(),
               trials=5, seed=0, domain=None, explanations=None):
    """Average trustworthy-class F1 per method over ``trials`` random unrelated sets.

    Ground truth: the black box is untrustworthy on an instance if removing
    the unrelated features present in it changes its predicted class.
    """
    if not 0 <= unrelated_fraction < 1:
        raise ValueError("unrelated_fraction must lie in [0, 1)")
    domain = domain or default_domain(model)
    if explanations is None:
        explanations = explain_all(model, instances, methods, cfg, domain)
    reprs = [domain.represent(x, str(i)) for i, x in enumerate(instances)]
    keys = [[domain.unit_key(u) for u in r.units] for r in reprs]
    universe = sorted({k for ks in keys for k in ks}, key=str)
    base = np.vstack([predict_masks(model, domain, x, r, np.ones((1, r.d), np.uint8), cfg)
                      for x, r in zip(instances, reprs)])
    records = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        n_unrel = int(round(unrelated_fraction * len(universe)))
        chosen = rng.choice(len(universe), size=n_unrel, replace=False)
        unrelated = {universe[i] for i in chosen}
        truth = []
        idx_sets = []
        for i, (x, r) in enumerate(zip(instances, reprs)):
            idx = {j for j, k in enumerate(keys[i]) if k in unrelated}
            idx_sets.append(idx)
            if not idx:
                truth.append(True)
                continue
            bits = np.ones((1, r.d), dtype=np.uint8)
            bits[0, sorted(idx)] = 0
            after = predict_masks(model, domain, x, r, bits, cfg, seed=cfg.seed + i)[0]
            truth.append(int(np.argmax(after)) == int(np.argmax(base[i])))
        record = {"trial": t, "n_unrelated": n_unrel,
                  "untrustworthy": int(len(truth) - sum(truth))}
        for m in methods:
            judged = []
            for i, exp in enumerate(explanations[m]):
                if m in LINEAR:
                    judged.append(linear_judgment(exp, idx_sets[i], _threshold(base[i])))
                else:
                    judged.append(list_judgment(exp, idx_sets[i]))
            record[m] = f1_score(truth, judged)
        records.append(record)
    f1 = {m: float(np.mean([r[m] for r in records])) for m in methods}
    return TrustResult(f1, records)


# -- model choice ----------------------------------------------------------------

NOISE_PREFIX = "zzartificial"


@dataclass
class NoisyDatasetPair:
    dataset: SparseDataset
    noise_tokens: list
    high_class: list
    models: tuple = ()
    val_acc: tuple = ()
    test_acc: tuple = ()
    attempts: int = 0


def inject_noise(dataset, n_features=10, rates=(0.10, 0.20), seed=0):
    """Append artificial tokens with class-dependent rates on train/validation.

    Each token appears in ``rates[1]`` of one (randomly chosen) class and
    ``rates[0]`` of the other on train and validation, and in ``rates[0]``
    of both classes on test.
    """
    if dataset.modality != "text":
        raise Unsupported("noise injection is implemented for text datasets")
    if len(dataset.classes) != 2:
        raise ValueError("noise injection needs a binary classification dataset")
    rng = np.random.default_rng(seed)
    tokens = [f"{NOISE_PREFIX}{k}" for k in range(n_features)]
    high = [int(rng.integers(2)) for _ in tokens]
    y = dataset.label_ids()
    lo, hi = rates
    docs = []
    for doc, label, split in zip(dataset.instances, y, dataset.splits):
        extra = []
        for tok, h in zip(tokens, high):
            rate = hi if (split != TEST and label == h) else lo
            if rng.random() < rate:
                extra.append(tok)
        docs.append(doc + (" " + " ".join(extra) if extra else ""))
    noisy = replace(dataset, instances=docs, splits=list(dataset.splits))
    return NoisyDatasetPair(noisy, tokens, high)


def _accuracy(model, ds):
    if len(ds) == 0:
        return float("nan")
    return float(np.mean(model.predict(ds.instances) == ds.label_ids()))


def make_forest_pair(pair, n_trees=30, seed=0, max_attempts=200, val_tol=0.001, test_gap=0.05):
    """Train forests until two have validation accuracy within ``val_tol`` and test
    accuracy at least ``test_gap`` apart.

    Every attempt trains one more forest and compares it against all forests
    trained so far in this call.
    """
    ds = pair.dataset
    val, test = ds.split(VALIDATION), ds.split(TEST)
    pool = []
    prepared = None
    for attempt in range(1, max_attempts + 1):
        forest = train_forest(ds, n_trees=n_trees, seed=[seed, attempt], prepared=prepared)
        prepared = forest.prepared
        va, ta = _accuracy(forest, val), _accuracy(forest, test)
        for other, ova, ota in pool:
            if abs(va - ova) <= val_tol + 1e-12 and abs(ta - ota) >= test_gap - 1e-12:
                pair.models = (other, forest)
                pair.val_acc = (ova, va)
                pair.test_acc = (ota, ta)
                pair.attempts = attempt
                return pair
        pool.append((forest, va, ta))
    raise PairGenerationFailed(f"no qualifying forest pair after {max_attempts} attempts")


def _untrustworthy_count(model, domain, instances, marked, cfg):
    """Validation predictions that change class when the marked features are removed."""
    originals, removed = [], []
    for i, x in enumerate(instances):
        r = domain.represent(x)
        idx = [j for j, u in enumerate(r.units) if domain.unit_key(u) in marked]
        if idx:
            bits = np.ones(r.d, dtype=np.uint8)
            bits[idx] = 0
            rng = np.random.default_rng([cfg.seed, i])
            originals.append(x)
            removed.append(domain.reconstructor(x, r)(bits, rng))
    if not originals:
        return 0
    probs = model.predict_proba(originals + removed)
    n = len(originals)
    return int(np.sum(np.argmax(probs[:n], axis=1) != np.argmax(probs[n:], axis=1)))


@dataclass
class ModelChoiceResult:
    accuracy: dict
    curve: dict = field(default_factory=dict)
    per_trial: list = field(default_factory=list)


def _choose(models, exps, chosen, val, noise, method, dom, cfg, rng, better):
    counts, marked_sizes = [], []
    for model, ex in zip(models, exps):
        marked = set()
        for x, e in zip(chosen, ex[method]):
            keys = _unit_keys(dom, x)
            marked |= {keys[i] for i in e.member_indices()} & noise
        marked_sizes.append(len(marked))
        counts.append(_untrustworthy_count(model, dom, val.instances, marked, cfg)
                      if marked else 0)
    pick = int(rng.integers(2)) if counts[0] == counts[1] else int(np.argmin(counts))
    return {"untrustworthy": counts, "marked": marked_sizes, "pick": pick,
            "correct": pick == better}


def eval_model_choice(methods, dataset, P=10, trials=100, cfg=ExplainConfig(), seed=0,
                      n_trees=30, max_attempts=200, noise_features=10, domain=None,
                      progress=None):
    """Fraction of trials in which the explanation-guided pick has the higher test accuracy.

    ``P`` is one budget or a sequence of budgets; smaller budgets reuse a
    prefix of the instances drawn for the largest.  All methods are scored on
    the same generated forest pairs and the same validation instances.
    """
    if isinstance(methods, str):
        methods = [methods]
    budgets = [P] if np.isscalar(P) else list(P)
    if not budgets or min(budgets) < 0:
        raise ValueError("P must be non-negative")
    records = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t, 1])
        pair = inject_noise(dataset, n_features=noise_features, seed=int(rng.integers(2**31)))
        pair = make_forest_pair(pair, n_trees=n_trees, seed=int(rng.integers(2**31)),
                                max_attempts=max_attempts)
        val = pair.dataset.split(VALIDATION)
        dom = domain or default_domain(pair.models[0])
        order = rng.choice(len(val), size=min(max(budgets), len(val)), replace=False)
        chosen = [val.instances[i] for i in order]
        better = int(np.argmax(pair.test_acc))
        noise = set(pair.noise_tokens)
        exps = [explain_all(m, chosen, methods, replace(cfg, seed=cfg.seed + t), dom)
                for m in pair.models]
        rec = {"trial": t, "val_acc": list(pair.val_acc), "test_acc": list(pair.test_acc),
               "attempts": pair.attempts, "choices": {}}
        for b in budgets:
            sub = [{m: ex[m][:b] for m in methods} for ex in exps]
            rec["choices"][b] = {m: _choose(pair.models, sub, chosen[:b], val, noise, m, dom,
                                            cfg, rng, better) for m in methods}
        records.append(rec)
        if progress:
            progress(t + 1, trials)
    curve = {b: {m: float(np.mean([r["choices"][b][m]["correct"] for r in records]))
                 for m in methods} for b in budgets}
    return ModelChoiceResult(curve[budgets[0]], curve, records)


# -- output ----------------------------------------------------------------------

def results_json(aggregate, per_trial, meta=None):
    doc = {"aggregate": aggregate, "per_trial": per_trial}
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def results_csv(rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: _cell(r.get(c)) for c in columns})
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


__all__ = ["explain_all", "eval_gold_recall", "eval_fidelity", "eval_trust", "inject_noise",
           "make_forest_pair", "eval_model_choice", "f1_score", "NoisyDatasetPair",
           "TRAIN", "VALIDATION", "TEST"]
