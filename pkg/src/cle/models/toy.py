"""Small transparent black boxes used by the CLI demo and the tests."""
import numpy as np

from .base import BlackBoxModel
from .featurize import tokens

# planted presence-based scorer for P(positive); "not bad" reads as positive
TOY_WEIGHTS = {"good": 0.30, "bad": -0.25, "not": -0.10}
TOY_PAIRS = {("not", "bad"): 0.45, ("not", "good"): -0.40}
TOY_BIAS = 0.45


class ToySentimentModel(BlackBoxModel):
    modality = "text"
    classes = ["negative", "positive"]

    def score(self, text):
        present = set(tokens(text))
        s = TOY_BIAS + sum(w for t, w in TOY_WEIGHTS.items() if t in present)
        s += sum(w for pair, w in TOY_PAIRS.items() if present.issuperset(pair))
        return min(max(s, 0.0), 1.0)

    def _predict_proba(self, instances):
        p = np.array([self.score(t) for t in instances])
        return np.column_stack([1 - p, p])


class PlantedTextModel(BlackBoxModel):
    """P(class 1) = clip(bias + sum of weights of present token tuples).

    ``terms`` maps a token tuple to its weight; a tuple contributes only when
    all of its tokens are present.
    """

    modality = "text"

    def __init__(self, terms, bias=0.0, classes=("0", "1"), clip=True):
        self.terms = {tuple(k): float(v) for k, v in terms.items()}
        self.bias = float(bias)
        self.classes = list(classes)
        self.clip = clip

    def _predict_proba(self, instances):
        p = np.empty(len(instances))
        for i, text in enumerate(instances):
            present = set(tokens(text))
            s = self.bias + sum(w for k, w in self.terms.items() if present.issuperset(k))
            p[i] = min(max(s, 0.0), 1.0) if self.clip else s
        return np.column_stack([1 - p, p])
