"""L2-regularized logistic regression trained by full-batch gradient descent."""
import logging

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_softmax, softmax

from ..errors import SingleClass
from .base import BlackBoxModel
from .featurize import featurizer_for, gold_key

log = logging.getLogger(__name__)


def _n_out(n_classes):
    return 1 if n_classes == 2 else n_classes


def unpack(params, n_features, n_classes):
    k = _n_out(n_classes)
    W = params[: n_features * k].reshape(n_features, k)
    b = params[n_features * k:]
    return W, b


def loss_and_grad(params, X, Y, l2):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` (bias unpenalized).

    ``Y`` is an ``(n, c)`` one-hot matrix.  Binary problems use a single
    logit for the second class.
    """
    n, m = X.shape
    c = Y.shape[1]
    W, b = unpack(params, m, c)
    Z = X @ W + b
    if c == 2:
        z = Z[:, 0]
        t = Y[:, 1]
        # log(1 + e^z) - t z, stable
        loss = np.mean(np.logaddexp(0.0, z) - t * z)
        dZ = (expit(z) - t)[:, None] / n
    else:
        logp = log_softmax(Z, axis=1)
        loss = -np.mean(np.sum(Y * logp, axis=1))
        dZ = (np.exp(logp) - Y) / n
    loss += 0.5 * l2 * float(np.sum(W * W))
    gW = np.asarray(X.T @ dZ) + l2 * W
    gb = dZ.sum(axis=0)
    return float(loss), np.concatenate([gW.ravel(), gb])


def fit_params(X, Y, l2, tol=1e-6, max_iter=50_000, history=None):
    """Gradient descent with backtracking line search and restarted momentum.

    A step is taken from the extrapolated point only if it lowers the loss;
    otherwise momentum is reset and a plain backtracked gradient step is used,
    so the loss never increases.  Stops when the gradient norm drops below
    ``tol``.
    """
    n, m = X.shape
    params = np.zeros(m * _n_out(Y.shape[1]) + _n_out(Y.shape[1]))
    f, g = loss_and_grad(params, X, Y, l2)
    step = 1.0
    prev = params.copy()
    t = 1.0
    for it in range(max_iter):
        if history is not None:
            history.append(f)
        if np.linalg.norm(g) < tol:
            break
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        point = params + ((t - 1) / t_next) * (params - prev)
        fp, gp = loss_and_grad(point, X, Y, l2) if t > 1 else (f, g)
        step *= 2.0
        while True:
            cand = point - step * gp
            fc, gc = loss_and_grad(cand, X, Y, l2)
            if fc <= fp - 0.5 * step * (gp @ gp) or step < 1e-20:
                break
            step *= 0.5
        if fc > f:
            t, prev = 1.0, params.copy()
            continue
        prev, params, f, g = params, cand, fc, gc
        t = t_next
    else:
        log.warning("logistic regression stopped at max_iter with |grad|=%g", np.linalg.norm(g))
    return params


class LogisticRegressionModel(BlackBoxModel):
    reentrant = True

    def __init__(self, featurizer, columns, W, b, classes):
        self.featurizer = featurizer
        self.modality = featurizer.modality
        self.columns = np.asarray(columns, dtype=np.int64)
        self.W = W
        self.b = b
        self.classes = list(classes)

    def decision(self, X):
        return np.asarray(X @ self.W) + self.b

    def _predict_proba(self, instances):
        X = self.featurizer.transform(instances)[:, self.columns]
        Z = self.decision(X)
        if len(self.classes) == 2:
            p = expit(Z[:, 0])
            return np.column_stack([1 - p, p])
        return softmax(Z, axis=1)

    def gold_features(self):
        nz = np.flatnonzero(np.any(self.W != 0, axis=1))
        keys = []
        for j in nz:
            key = gold_key(self.featurizer, self.columns[j])
            if key not in keys:
                keys.append(key)
        return keys


def _one_hot(y, c):
    Y = np.zeros((y.size, c))
    Y[np.arange(y.size), y] = 1.0
    return Y


def train_logreg(dataset, l2=1e-2, max_features=None, featurizer=None, tol=1e-6):
    """Fit on the training split; optionally refit on the ``max_features``
    columns with the largest weight magnitude."""
    train = dataset.split("train")
    y = train.label_ids()
    if np.unique(y).size < 2:
        raise SingleClass("training split contains a single class")
    featurizer = featurizer or featurizer_for(dataset)
    X = featurizer.transform(train.instances)
    Y = _one_hot(y, len(dataset.classes))
    params = fit_params(X, Y, l2, tol=tol)
    W, b = unpack(params, X.shape[1], Y.shape[1])
    columns = np.arange(X.shape[1])
    if max_features is not None and max_features < X.shape[1]:
        strength = np.abs(W).max(axis=1)
        columns = np.sort(np.argsort(-strength, kind="stable")[:max_features])
        Xs = X[:, columns]
        params = fit_params(Xs, Y, l2, tol=tol)
        W, b = unpack(params, len(columns), Y.shape[1])
    return LogisticRegressionModel(featurizer, columns, W, b, dataset.classes)


def dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)
