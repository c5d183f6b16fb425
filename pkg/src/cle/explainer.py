"""Local explanations of single predictions.

Four methods share one entry point:

* ``lime``   sparse weighted linear model over the presence bits
* ``cle``    the same, with combination columns appended to the design
* ``greedy`` repeatedly removes the feature whose removal lowers the
  explained-class probability the most
* ``random`` a seeded uniform K-subset of the features
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .domains import ImageDomain, TextDomain
from .errors import MissingContext, ModelFailure
from .representation import CombinationSpec, combo_label, enumerate_combinations, extension_matrix
from .sampler import KernelConfig, distance, kernel_weight, perturb
from .solver import k_lasso

log = logging.getLogger(__name__)

METHODS = ("cle", "lime", "greedy", "random")


@dataclass(frozen=True)
class ExplainConfig:
    n_samples: int = 15000
    K: int = 10
    kernel: Optional[KernelConfig] = None
    combination: Optional[CombinationSpec] = field(default_factory=CombinationSpec)
    seed: int = 0
    explained_class: Optional[int] = None
    batch_size: int = 512
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.K < 1:
            raise ValueError("K must be at least 1")

    def echo(self):
        d = {"n_samples": self.n_samples, "K": self.K, "seed": self.seed}
        if self.kernel is not None:
            d["sigma"] = self.kernel.sigma
            d["metric"] = self.kernel.metric
        if self.combination is not None:
            d["spans"] = list(self.combination.spans)
            d["focus"] = None if self.combination.focus is None else list(self.combination.focus)
        return d


@dataclass
class Term:
    indices: tuple
    label: str
    coefficient: Optional[float] = None
    rank: Optional[int] = None

    @property
    def kind(self):
        return "single" if len(self.indices) == 1 else "combo"

    def to_dict(self):
        d = {"kind": self.kind, "indices": list(self.indices), "label": self.label}
        if self.coefficient is not None:
            d["coefficient"] = self.coefficient
        if self.rank is not None:
            d["rank"] = self.rank
        return d


@dataclass
class Explanation:
    method: str
    instance_ref: str
    explained_class: Optional[int]
    class_label: Optional[str]
    terms: list
    d: int
    seed: int
    intercept: Optional[float] = None
    local_prediction: Optional[float] = None
    black_box_prediction: Optional[float] = None
    fidelity_error: Optional[float] = None
    r2: Optional[float] = None
    degenerate: bool = False
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def member_indices(self):
        out = []
        for t in self.terms:
            for i in t.indices:
                if i not in out:
                    out.append(i)
        return out

    def to_dict(self, include_timings=True):
        d = {"method": self.method, "instance_ref": self.instance_ref,
             "explained_class": self.explained_class, "class_label": self.class_label,
             "d": self.d, "terms": [t.to_dict() for t in self.terms]}
        for key in ("intercept", "local_prediction", "black_box_prediction",
                    "fidelity_error", "r2"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        d["degenerate"] = self.degenerate
        d["seed"] = self.seed
        d["config"] = self.config
        if include_timings:
            d["timings"] = self.timings
        return d

    def to_json(self, include_timings=True):
        return json.dumps(self.to_dict(include_timings), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        terms = [Term(tuple(t["indices"]), t["label"], t.get("coefficient"), t.get("rank"))
                 for t in d["terms"]]
        keys = ("intercept", "local_prediction", "black_box_prediction", "fidelity_error", "r2")
        return cls(method=d["method"], instance_ref=d["instance_ref"],
                   explained_class=d["explained_class"], class_label=d.get("class_label"),
                   terms=terms, d=d["d"], seed=d["seed"], degenerate=d.get("degenerate", False),
                   config=d.get("config", {}), timings=d.get("timings", {}),
                   **{k: d.get(k) for k in keys})


def default_domain(model):
    domain = getattr(model, "domain", None)
    if domain is not None:
        return domain
    if model.modality == "text":
        return TextDomain()
    if model.modality == "image":
        return ImageDomain()
    raise MissingContext("tabular models need an explicit TabularDomain")


def _kernel(cfg, domain):
    return cfg.kernel or KernelConfig.for_metric(domain.default_metric)


class _Clock:
    def __init__(self):
        self.t = {"perturb": 0.0, "predict": 0.0, "extend": 0.0, "fit": 0.0}

    def add(self, stage, start):
        self.t[stage] += time.perf_counter() - start


def predict_masks(model, domain, instance, x_repr, masks, cfg, clock=None, seed=None):
    """Reconstruct every mask row and score it; returns the ``(n, c)`` probabilities."""
    rebuild = domain.reconstructor(instance, x_repr)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    spans = [(s, min(s + cfg.batch_size, len(masks))) for s in range(0, len(masks), cfg.batch_size)]

    def build(span):
        t0 = time.perf_counter()
        raw = [rebuild(row, rng) for row in masks[span[0]:span[1]]]
        if clock:
            clock.add("perturb", t0)
        return raw

    def score(raw):
        t0 = time.perf_counter()
        try:
            out = model.predict_proba(raw)
        except ModelFailure:
            raise
        except Exception as exc:  # noqa: BLE001 - third-party model code
            raise ModelFailure(f"black box failed: {exc}") from exc
        if clock:
            clock.add("predict", t0)
        return out

    if cfg.workers > 1 and getattr(model, "reentrant", False) and len(spans) > 1:
        parts = []
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for w in range(0, len(spans), cfg.workers):
                window = [build(s) for s in spans[w:w + cfg.workers]]
                parts.extend(pool.map(score, window))
    else:
        parts = [score(build(s)) for s in spans]
    return np.vstack(parts)


@dataclass
class SampleSet:
    """Perturbations of one instance together with the black-box responses."""

    instance: object
    instance_ref: str
    x_repr: object
    masks: np.ndarray
    probs: np.ndarray
    weights: np.ndarray
    cfg: ExplainConfig
    timings: dict

    @property
    def black_box(self):
        return self.probs[0]


def draw_samples(instance, model, cfg, domain=None, instance_ref=""):
    domain = domain or default_domain(model)
    clock = _Clock()
    t0 = time.perf_counter()
    x_repr = domain.represent(instance, instance_ref)
    masks = perturb(x_repr, cfg.n_samples, cfg.seed)
    clock.add("perturb", t0)
    probs = predict_masks(model, domain, instance, x_repr, masks, cfg, clock)
    kernel = _kernel(cfg, domain)
    weights = kernel_weight(distance(x_repr.bits, masks, kernel.metric), kernel)
    return SampleSet(instance, instance_ref, x_repr, masks, probs, weights, cfg, clock.t)


def _class_of(samples, model, cfg):
    if cfg.explained_class is not None:
        return int(cfg.explained_class)
    return int(np.argmax(samples.black_box))


def _linear(samples, model, method, focus_spec=None):
    cfg = samples.cfg
    cls = _class_of(samples, model, cfg)
    y = samples.probs[:, cls]
    timings = dict(samples.timings)
    units = samples.x_repr.units
    d = samples.x_repr.d
    columns = [(i,) for i in range(d)]
    X = samples.masks
    fit_time = 0.0
    if method == "cle":
        spec = cfg.combination or CombinationSpec(focus=())
        if spec.focus is None:
            t0 = time.perf_counter()
            if d > cfg.K:
                focus = tuple(k_lasso(samples.masks, y, samples.weights, cfg.K).selected)
            else:
                focus = tuple(range(d))
            fit_time = time.perf_counter() - t0
            spec = _auto_spec(spec.spans, focus)
        spec.validate(d)
        t0 = time.perf_counter()
        combos = enumerate_combinations(spec)
        if combos:
            X = np.hstack([samples.masks, extension_matrix(samples.masks, combos)])
            columns = columns + [tuple(c) for c in combos]
        timings["extend"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    fit = k_lasso(X, y, samples.weights, cfg.K)
    timings["fit"] = fit_time + time.perf_counter() - t0
    order = sorted(fit.selected, key=lambda j: (-abs(fit.coef[j]), j))
    terms = []
    for rank, j in enumerate(order, 1):
        idx = columns[j]
        label = units[idx[0]].label if len(idx) == 1 else combo_label(units, idx)
        terms.append(Term(idx, label, float(fit.coef[j]), rank))
    bb = float(samples.black_box[cls])
    echo = cfg.echo()
    if method == "cle":
        echo["focus_resolved"] = list(spec.focus)
    return Explanation(
        method=method, instance_ref=samples.instance_ref, explained_class=cls,
        class_label=_label(model, cls), terms=terms, d=d, seed=cfg.seed,
        intercept=float(fit.intercept), local_prediction=float(fit.local_prediction),
        black_box_prediction=bb, fidelity_error=abs(float(fit.local_prediction) - bb),
        r2=float(fit.r2), degenerate=fit.degenerate, config=echo, timings=timings)


def _auto_spec(spans, focus):
    """Spans larger than an automatically chosen focus set are dropped."""
    spans = tuple(b for b in spans if b <= len(focus))
    return CombinationSpec(spans, focus if spans else ())


def _label(model, cls):
    classes = getattr(model, "classes", None)
    if classes is not None and cls is not None and 0 <= cls < len(classes):
        return str(classes[cls])
    return None


def explain_from_samples(samples, model, methods=("lime", "cle")):
    """Fit several linear methods on one shared perturbation batch."""
    return {m: _linear(samples, model, m) for m in methods}


def explain_lime(instance, model, cfg=ExplainConfig(), domain=None, instance_ref=""):
    samples = draw_samples(instance, model, cfg, domain, instance_ref)
    return _linear(samples, model, "lime")


def explain_cle(instance, model, cfg=ExplainConfig(), domain=None, instance_ref=""):
    samples = draw_samples(instance, model, cfg, domain, instance_ref)
    return _linear(samples, model, "cle")


def explain_greedy(instance, model, cfg=ExplainConfig(), domain=None, instance_ref=""):
    """K rounds of removing the feature with the largest probability drop.

    Each round scores every remaining feature's single removal on top of the
    removals made so far; ties go to the lowest feature index.
    """
    domain = domain or default_domain(model)
    clock = _Clock()
    x_repr = domain.represent(instance, instance_ref)
    d = x_repr.d
    bits = np.ones(d, dtype=np.uint8)
    base = predict_masks(model, domain, instance, x_repr, bits[None, :], cfg, clock)[0]
    cls = cfg.explained_class if cfg.explained_class is not None else int(np.argmax(base))
    current = float(base[cls])
    remaining = list(range(d))
    terms = []
    for rank in range(1, min(cfg.K, d) + 1):
        cand = np.repeat(bits[None, :], len(remaining), axis=0)
        cand[np.arange(len(remaining)), remaining] = 0
        probs = predict_masks(model, domain, instance, x_repr, cand, cfg, clock,
                              seed=cfg.seed + rank)[:, cls]
        drops = current - probs
        k = int(np.argmax(drops))
        j = remaining.pop(k)
        terms.append(Term((j,), x_repr.units[j].label, float(drops[k]), rank))
        bits[j] = 0
        current = float(probs[k])
    return Explanation(
        method="greedy", instance_ref=instance_ref, explained_class=cls,
        class_label=_label(model, cls), terms=terms, d=d, seed=cfg.seed,
        black_box_prediction=float(base[cls]), config=cfg.echo(), timings=clock.t)


def explain_random(instance, cfg=ExplainConfig(), domain=None, instance_ref="", model=None):
    domain = domain or (default_domain(model) if model is not None else TextDomain())
    x_repr = domain.represent(instance, instance_ref)
    d = x_repr.d
    rng = np.random.default_rng(cfg.seed)
    picks = rng.choice(d, size=min(cfg.K, d), replace=False)
    terms = [Term((int(j),), x_repr.units[int(j)].label, None, r + 1) for r, j in enumerate(picks)]
    return Explanation(method="random", instance_ref=instance_ref,
                       explained_class=cfg.explained_class,
                       class_label=_label(model, cfg.explained_class), terms=terms, d=d,
                       seed=cfg.seed, config=cfg.echo(),
                       timings={"perturb": 0.0, "predict": 0.0, "extend": 0.0, "fit": 0.0})


def explain(instance, model, method, cfg=ExplainConfig(), domain=None, instance_ref=""):
    if method == "lime":
        return explain_lime(instance, model, cfg, domain, instance_ref)
    if method == "cle":
        return explain_cle(instance, model, cfg, domain, instance_ref)
    if method == "greedy":
        return explain_greedy(instance, model, cfg, domain, instance_ref)
    if method == "random":
        return explain_random(instance, cfg, domain, instance_ref, model=model)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# -- cost model ---------------------------------------------------------------

@dataclass
class CostReport:
    """Predicted run time ``T = N * (t_pert + t_pred + t_ext) + t_fit``."""

    n_samples: int
    d: int
    focus_size: int
    extension_length: int
    t_pert: float
    t_pred: float
    t_ext: float
    t_fit: float
    totals: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.n_samples
        self.totals = {
            "perturb": n * self.t_pert,
            "predict": n * self.t_pred,
            "extend": n * self.t_ext,
            "fit": self.t_fit,
        }

    @property
    def per_sample_total(self):
        return self.n_samples * (self.t_pert + self.t_pred + self.t_ext)

    @property
    def total(self):
        return self.per_sample_total + self.t_fit

    @property
    def dominant(self):
        return max(self.totals, key=lambda k: (self.totals[k], k))

    def shares(self):
        T = self.total
        return {k: (v / T if T > 0 else 0.0) for k, v in self.totals.items()}

    def to_dict(self):
        d = asdict(self)
        d["total"] = self.total
        d["per_sample_total"] = self.per_sample_total
        d["dominant"] = self.dominant
        d["shares"] = self.shares()
        return d


def estimate_cost(d, n_samples, focus_size, spans, unit_times):
    """``unit_times`` holds per-sample ``perturb``/``predict``/``extend`` seconds and
    the one-off ``fit`` seconds."""
    l = sum(math.comb(focus_size, b) for b in spans) if focus_size else 0
    return CostReport(n_samples, d, focus_size, l, unit_times["perturb"],
                      unit_times["predict"], unit_times["extend"], unit_times["fit"])


def calibrate(instance, model, cfg=ExplainConfig(), domain=None, n=100):
    """Measure unit times with an ``n``-sample dry run of the CLE pipeline."""
    dry = ExplainConfig(n_samples=n, K=cfg.K, kernel=cfg.kernel, combination=cfg.combination,
                        seed=cfg.seed, explained_class=cfg.explained_class,
                        batch_size=cfg.batch_size, workers=cfg.workers)
    samples = draw_samples(instance, model, dry, domain)
    exp = _linear(samples, model, "cle")
    t = exp.timings
    focus = exp.config.get("focus_resolved", [])
    units = {"perturb": t["perturb"] / n, "predict": t["predict"] / n,
             "extend": t.get("extend", 0.0) / n, "fit": t["fit"]}
    return units, samples.x_repr.d, len(focus)
