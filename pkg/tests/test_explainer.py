import time

import numpy as np
import pytest

from cle.domains import TextDomain
from cle.explainer import (CostReport, ExplainConfig, Explanation, calibrate, draw_samples,
                           estimate_cost, explain, explain_cle, explain_from_samples,
                           explain_greedy, explain_lime, explain_random)
from cle.models import CallableModel, PlantedTextModel, ToySentimentModel
from cle.representation import CombinationSpec

CFG = ExplainConfig(n_samples=2000, seed=1)


def _words(d):
    return " ".join(f"w{i}" for i in range(d))


def test_planted_linear_recovers_weights():
    weights = {("w0",): 0.30, ("w1",): -0.20, ("w2",): 0.15, ("w3",): 0.05}
    model = PlantedTextModel(weights, bias=0.4)
    exp = explain_lime(_words(12), model, ExplainConfig(n_samples=3000, K=4, seed=0))
    got = {t.label: t.coefficient for t in exp.terms}
    assert set(got) == {"w0", "w1", "w2", "w3"}
    for (w,), v in weights.items():
        assert abs(got[w] - v) < 1e-3
    assert exp.fidelity_error < 1e-3


def test_small_d_keeps_every_feature():
    exp = explain_lime("a b c", PlantedTextModel({("a",): 0.5}, bias=0.2), CFG)
    assert sorted(exp.member_indices()) == [0, 1, 2] or len(exp.terms) <= 3


def test_same_seed_byte_identical():
    model = ToySentimentModel()
    a = explain_cle("the film was not bad at all", model, CFG).to_json(include_timings=False)
    b = explain_cle("the film was not bad at all", model, CFG).to_json(include_timings=False)
    assert a == b


def test_json_round_trip():
    exp = explain_cle("not bad", ToySentimentModel(), CFG)
    back = Explanation.from_dict(exp.to_dict())
    assert back.to_json() == exp.to_json()


def test_xor_pair_term_and_fidelity():
    xor = PlantedTextModel({("a",): 1.0, ("b",): 1.0, ("a", "b"): -2.0})
    lime = explain_lime("a b", xor, CFG)
    cle = explain_cle("a b", xor, CFG)
    assert any(t.kind == "combo" and t.indices == (0, 1) for t in cle.terms)
    assert cle.fidelity_error < lime.fidelity_error


def test_empty_focus_matches_lime():
    model = ToySentimentModel()
    text = "a good film but not bad either"
    cfg = ExplainConfig(n_samples=1500, seed=4, combination=CombinationSpec((2,), ()))
    lime, cle = explain_lime(text, model, cfg), explain_cle(text, model, cfg)
    assert [(t.indices, t.coefficient) for t in lime.terms] == \
           [(t.indices, t.coefficient) for t in cle.terms]
    assert lime.local_prediction == cle.local_prediction


def test_interaction_sign_pattern():
    model = PlantedTextModel({("x0",): 0.2, ("x1",): -0.3, ("x0", "x1"): 0.6}, bias=0.3)
    exp = explain_cle("x0 x1 filler", model, CFG)
    coef = {t.indices: t.coefficient for t in exp.terms}
    assert coef[(0,)] > 0 and coef[(1,)] < 0 and coef[(0, 1)] > 0


def test_toy_not_bad():
    exp = explain_cle("not bad", ToySentimentModel(), CFG)
    labels = {t.label: t.coefficient for t in exp.terms}
    assert np.isclose(labels["not AND bad"], 0.45, atol=1e-6)
    assert np.isclose(exp.local_prediction, 0.55, atol=1e-6)


def test_shared_samples_equal_separate_runs():
    model = ToySentimentModel()
    text = "good but not bad"
    samples = draw_samples(text, model, CFG)
    shared = explain_from_samples(samples, model, ["lime", "cle"])
    assert shared["lime"].to_json(False) == explain_lime(text, model, CFG).to_json(False)
    assert shared["cle"].to_json(False) == explain_cle(text, model, CFG).to_json(False)


def test_explained_class_override():
    cfg = ExplainConfig(n_samples=500, explained_class=0)
    exp = explain_lime("good film", ToySentimentModel(), cfg)
    assert exp.explained_class == 0 and exp.class_label == "negative"


# -- greedy / random ---------------------------------------------------------------------

def test_greedy_additive_order():
    model = PlantedTextModel({("w3",): 0.4, ("w1",): 0.25, ("w0",): 0.1, ("w2",): 0.05})
    exp = explain_greedy(_words(5), model, ExplainConfig(K=4))
    assert [t.label for t in exp.terms] == ["w3", "w1", "w0", "w2"]
    assert np.allclose([t.coefficient for t in exp.terms], [0.4, 0.25, 0.1, 0.05])
    assert [t.rank for t in exp.terms] == [1, 2, 3, 4]


def test_greedy_ties_lowest_index():
    exp = explain_greedy(_words(4), PlantedTextModel({}, bias=0.7), ExplainConfig(K=2))
    assert [t.indices for t in exp.terms] == [(0,), (1,)]


def test_greedy_stops_at_d():
    exp = explain_greedy("a b", ToySentimentModel(), ExplainConfig(K=10))
    assert len(exp.terms) == 2


def test_random_all_when_k_exceeds_d():
    exp = explain_random("a b c", ExplainConfig(K=10))
    assert sorted(exp.member_indices()) == [0, 1, 2]


def test_random_seeded():
    a = explain_random(_words(30), ExplainConfig(K=5, seed=3))
    b = explain_random(_words(30), ExplainConfig(K=5, seed=3))
    assert a.member_indices() == b.member_indices()


def test_random_inclusion_frequency():
    d, K = 20, 5
    counts = np.zeros(d)
    text = _words(d)
    for s in range(10_000):
        counts[explain_random(text, ExplainConfig(K=K, seed=s)).member_indices()] += 1
    assert np.all(np.abs(counts / 10_000 - K / d) < 0.02)


def test_dispatch_rejects_unknown():
    with pytest.raises(ValueError):
        explain("a", ToySentimentModel(), "shap")


# -- cost model -------------------------------------------------------------------------------

UNITS = {"perturb": 2e-5, "predict": 1e-3, "extend": 1e-6, "fit": 0.5}


def test_predict_dominates_with_slow_model():
    rep = estimate_cost(100, 15000, 10, (2,), UNITS)
    assert rep.dominant == "predict"
    assert rep.shares()["predict"] > 0.9


def test_zero_samples_is_fit_time():
    assert estimate_cost(10, 0, 10, (2,), UNITS).total == UNITS["fit"]


def test_doubling_n_doubles_bracket():
    a = estimate_cost(10, 1000, 10, (2,), UNITS)
    b = estimate_cost(10, 2000, 10, (2,), UNITS)
    assert b.per_sample_total == 2 * a.per_sample_total
    assert a.extension_length == 45


def test_cost_report_names_all_terms():
    d = estimate_cost(10, 100, 4, (2, 3), UNITS).to_dict()
    assert set(d["totals"]) == {"perturb", "predict", "extend", "fit"}
    assert d["extension_length"] == 10


def test_calibrate_measures_slow_predictions():
    def slow(texts):
        time.sleep(0.002 * len(texts))
        return np.tile([0.4, 0.6], (len(texts), 1))

    model = CallableModel(slow, classes=["a", "b"], modality="text")
    units, d, focus = calibrate(_words(15), model, ExplainConfig(n_samples=15000), TextDomain(), n=100)
    assert d == 15 and units["predict"] >= 0.0015
    assert estimate_cost(d, 15000, focus, (2,), units).dominant == "predict"
