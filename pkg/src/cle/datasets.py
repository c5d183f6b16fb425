"""Labelled datasets, file loaders and the synthetic polarity corpus."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

import numpy as np

from .representation import NUMERIC, TabularSchema

TRAIN, VALIDATION, TEST = "train", "validation", "test"


@dataclass
class SparseDataset:
    instances: list
    labels: list
    splits: list
    modality: str = "text"
    schema: Optional[TabularSchema] = None
    classes: list = field(default=None)

    def __post_init__(self):
        if not len(self.instances) == len(self.labels) == len(self.splits):
            raise ValueError("instances, labels and splits differ in length")
        bad = set(self.splits) - {TRAIN, VALIDATION, TEST}
        if bad:
            raise ValueError(f"unknown split tags {sorted(bad)}")
        if self.classes is None:
            self.classes = sorted(set(self.labels))
        elif set(self.labels) - set(self.classes):
            raise ValueError("labels outside the class list")

    def __len__(self):
        return len(self.instances)

    def split(self, tag):
        keep = [i for i, s in enumerate(self.splits) if s == tag]
        return replace(self, instances=[self.instances[i] for i in keep],
                       labels=[self.labels[i] for i in keep],
                       splits=[tag] * len(keep), classes=list(self.classes))

    def label_ids(self):
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.array([lookup[l] for l in self.labels], dtype=np.int64)


def load_text_tsv(path, test_fraction=0.2):
    """``label<TAB>document`` lines; an optional third column gives the split."""
    instances, labels, splits = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            labels.append(parts[0])
            instances.append(parts[1])
            splits.append(parts[2] if len(parts) > 2 else None)
    if any(s is None for s in splits):
        n_test = int(round(len(instances) * test_fraction))
        cut = len(instances) - n_test
        splits = [TRAIN if i < cut else TEST for i in range(len(instances))]
    return SparseDataset(instances, labels, splits, "text")


def dump_text_tsv(dataset):
    buf = io.StringIO()
    for doc, label, split in zip(dataset.instances, dataset.labels, dataset.splits):
        buf.write(f"{label}\t{doc}\t{split}\n")
    return buf.getvalue()


def load_tabular_csv(path, schema, label_column="label", split_column="split"):
    """CSV with a header row; values are parsed according to ``schema``."""
    instances, labels, splits = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            labels.append(rec.pop(label_column))
            split = rec.pop(split_column, None) or TRAIN
            splits.append(split)
            row = []
            for col in schema.columns:
                v = rec[col.name]
                row.append(float(v) if col.kind == NUMERIC else v)
            instances.append(row)
    return SparseDataset(instances, labels, splits, "tabular", schema=schema)


# -- synthetic polarity corpus ----------------------------------------------

POSITIVE = ("good great excellent wonderful enjoyable brilliant superb delightful "
            "engaging fascinating charming amazing beautiful moving perfect fun "
            "solid clever gripping lovely").split()
NEGATIVE = ("bad boring awful poor dull terrible waste disappointing weak tedious "
            "mediocre horrible predictable annoying pointless bland worst lame "
            "forgettable sloppy").split()
FUNCTION = ("the a of and to is in it this that was for with as on but his her "
            "book story author reader chapter page character plot").split()

_ONSETS = "b c d f g h j k l m n p r s t v w z br cr dr fl gr pl pr st tr".split()
_VOWELS = "a e i o u ai ea ou".split()
_CODAS = ["", "", "n", "r", "s", "t", "l", "m"]


def _neutral_vocabulary(size, rng):
    reserved = set(POSITIVE) | set(NEGATIVE) | set(FUNCTION) | {"not"}
    words, seen = [], set()
    while len(words) < size:
        n_syl = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(n_syl)) + _CODAS[rng.integers(len(_CODAS))]
        if w not in seen and w not in reserved:
            seen.add(w)
            words.append(w)
    return words


def _zipf(n, s=1.0):
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def synthetic_polarity(n_docs=2000, n_test=400, n_validation=0, seed=0,
                       n_neutral=1500, doc_length=(130, 200), n_sentiment=(3, 8),
                       agreement=0.8, negation=0.15, n_polar=None):
    """Review-like documents labelled ``negative``/``positive``.

    Each document mixes Zipf-distributed neutral words with a handful of
    sentiment words that agree with the label with probability ``agreement``.
    A sentiment word may be negated ("not good" used as a negative phrase),
    which gives bag-of-words models a feature interaction to miss.
    ``n_polar`` limits each sentiment vocabulary to its first words.
    """
    rng = np.random.default_rng(seed)
    neutral = FUNCTION + _neutral_vocabulary(n_neutral, rng)
    p_neutral = _zipf(len(neutral), 1.0)
    polar = {"positive": POSITIVE[:n_polar], "negative": NEGATIVE[:n_polar]}
    p_pol = _zipf(len(polar["positive"]), 0.8)
    opposite = {"positive": "negative", "negative": "positive"}
    instances, labels = [], []
    for _ in range(n_docs):
        label = "positive" if rng.random() < 0.5 else "negative"
        phrases = [[w] for w in rng.choice(neutral, size=int(rng.integers(*doc_length)), p=p_neutral)]
        for _ in range(int(rng.integers(n_sentiment[0], n_sentiment[1] + 1))):
            pol = label if rng.random() < agreement else opposite[label]
            if rng.random() < negation:
                phrases.append(["not", polar[opposite[pol]][rng.choice(len(p_pol), p=p_pol)]])
            else:
                phrases.append([polar[pol][rng.choice(len(p_pol), p=p_pol)]])
        order = rng.permutation(len(phrases))
        tokens = []
        for k, i in enumerate(order):
            tokens.extend(phrases[i])
            if k % 12 == 11:
                tokens.append(".")
        instances.append(" ".join(str(t) for t in tokens))
        labels.append(label)
    n_train = n_docs - n_test - n_validation
    splits = [TRAIN] * n_train + [VALIDATION] * n_validation + [TEST] * n_test
    return SparseDataset(instances, labels, splits, "text", classes=["negative", "positive"])


def bundled_polarity():
    """The 2,000-document corpus shipped with the package (1,600 train / 400 test)."""
    path = resources.files("cle") / "data" / "polarity.tsv"
    with resources.as_file(path) as p:
        return load_text_tsv(p)


def bundled_tiny():
    path = resources.files("cle") / "data" / "tiny.tsv"
    with resources.as_file(path) as p:
        return load_text_tsv(p)
