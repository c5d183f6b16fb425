"""Raw instance -> numeric matrix for the built-in models."""
import re
from collections import Counter

import numpy as np
import scipy.sparse as sp

from ..representation import CATEGORICAL

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokens(text):
    return _TOKEN_RE.findall(text.casefold())


class TextVectorizer:
    """Bag-of-words counts over a fixed vocabulary."""

    modality = "text"

    def __init__(self, vocabulary):
        self.vocabulary = list(vocabulary)
        self.index = {w: i for i, w in enumerate(self.vocabulary)}

    @classmethod
    def fit(cls, texts, min_df=2):
        df = Counter()
        for t in texts:
            df.update(set(tokens(t)))
        return cls(sorted(w for w, c in df.items() if c >= min_df))

    @property
    def feature_names(self):
        return self.vocabulary

    def transform(self, texts):
        """Sparse CSR count matrix of shape ``(len(texts), len(vocabulary))``."""
        rows, cols = [], []
        index = self.index
        for r, text in enumerate(texts):
            ids = [index[t] for t in tokens(text) if t in index]
            rows.extend([r] * len(ids))
            cols.extend(ids)
        data = np.ones(len(rows))
        m = sp.csr_matrix((data, (rows, cols)), shape=(len(texts), len(self.vocabulary)))
        m.sum_duplicates()
        return m

    def to_dict(self):
        return {"kind": "text", "vocabulary": self.vocabulary}


class OneBinHot:
    """One indicator column per (column, bin) of a tabular schema."""

    modality = "tabular"

    def __init__(self, schema):
        self.schema = schema
        self.offsets = np.cumsum([0] + [c.n_bins for c in schema.columns])
        self.feature_names = [c.bin_label(b) for c in schema.columns for b in range(c.n_bins)]
        self.owner = [c.name for c in schema.columns for _ in range(c.n_bins)]

    def transform(self, rows):
        import warnings
        from ..errors import OutOfRange
        out = np.zeros((len(rows), self.offsets[-1]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfRange)
            for r, row in enumerate(rows):
                values = self.schema.row_values(row)
                for j, (col, v) in enumerate(zip(self.schema.columns, values)):
                    out[r, self.offsets[j] + col.bin_of(v)] = 1.0
        return sp.csr_matrix(out)


def featurizer_for(dataset, min_df=2):
    if dataset.modality == "text":
        return TextVectorizer.fit([x for x, s in zip(dataset.instances, dataset.splits)
                                   if s == "train"], min_df=min_df)
    if dataset.modality == "tabular":
        return OneBinHot(dataset.schema)
    raise ValueError(f"no built-in featurizer for {dataset.modality!r}")


def gold_key(featurizer, j):
    """Name of the explanation unit that a model feature belongs to."""
    if isinstance(featurizer, OneBinHot):
        return featurizer.owner[j]
    return featurizer.feature_names[j]


__all__ = ["TextVectorizer", "OneBinHot", "featurizer_for", "gold_key", "tokens", "CATEGORICAL"]
