"""k-nearest-neighbour classifier over cosine similarity of count vectors."""
import numpy as np
import scipy.sparse as sp

from ..errors import SingleClass
from .base import BlackBoxModel
from .featurize import featurizer_for


def _normalize(X):
    X = sp.csr_matrix(X, dtype=np.float64)
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.diags(inv) @ X


class KNNModel(BlackBoxModel):
    def __init__(self, featurizer, X_train, y_train, classes, k=5):
        self.featurizer = featurizer
        self.modality = featurizer.modality
        self.classes = list(classes)
        self.k = min(k, X_train.shape[0])
        # dense so that sparse @ dense avoids building a sparse product
        self.T = _normalize(X_train).T.toarray()
        self.y = np.asarray(y_train)

    def neighbors(self, instances):
        """Indices of the k most similar training rows (ties -> lower index)."""
        Q = _normalize(self.featurizer.transform(instances))
        sim = np.asarray(Q @ self.T)
        order = np.argsort(-sim, axis=1, kind="stable")
        return order[:, : self.k]

    def _predict_proba(self, instances):
        nb = self.neighbors(instances)
        votes = np.zeros((nb.shape[0], len(self.classes)))
        labels = self.y[nb]
        for c in range(len(self.classes)):
            votes[:, c] = (labels == c).sum(axis=1)
        return votes / self.k


def train_knn(dataset, k=5, featurizer=None):
    train = dataset.split("train")
    y = train.label_ids()
    if np.unique(y).size < 2:
        raise SingleClass("training split contains a single class")
    featurizer = featurizer or featurizer_for(dataset)
    return KNNModel(featurizer, featurizer.transform(train.instances), y, dataset.classes, k=k)
