"""Weighted sparse linear fitting: standardization, Lasso by coordinate
descent, K-sparse selection along a regularization path and a weighted
least-squares refit.

The Lasso objective on a standardized design is::

    (1 / (2 * sum(w))) * sum_i w_i (y_i - x_i . beta)^2 + lam * ||beta||_1
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotConverged

log = logging.getLogger(__name__)

PATH_LENGTH = 100
PATH_RATIO = 1e-4


@dataclass
class Standardized:
    """A weighted design with centered/scaled columns and a centered target."""

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    eligible: np.ndarray
    gram: np.ndarray = field(repr=False, default=None)
    corr: np.ndarray = field(repr=False, default=None)

    def destandardize(self, beta):
        """Map standardized coefficients to (original-scale coef, intercept)."""
        coef = np.zeros_like(self.x_scale)
        nz = self.x_scale > 0
        coef[nz] = beta[nz] / self.x_scale[nz]
        return coef, float(self.y_mean - self.x_mean @ coef)


@dataclass
class LinearExplanationModel:
    intercept: float
    coef: np.ndarray
    selected: list
    r2: float
    local_prediction: float
    degenerate: bool = False
    path_lambda: float = 0.0


def _wmean(A, w):
    return (w @ A) / w.sum()


def standardize(X, y, w):
    """Center columns by weighted mean and scale by weighted std.

    Zero-variance columns get scale 0 and are ineligible for selection.  Among
    columns that coincide after standardization (exact duplicates, or exact
    mirror images such as complements) only the lowest index stays eligible.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size or y.size != w.size:
        raise ValueError("inconsistent design shapes")
    if np.any(w <= 0):
        raise ValueError("sample weights must be positive")
    W = w.sum()
    x_mean = _wmean(X, w)
    Xc = X - x_mean
    var = (w @ (Xc * Xc)) / W
    scale = np.sqrt(np.maximum(var, 0.0))
    scale[scale < 1e-12 * np.maximum(1.0, np.abs(x_mean))] = 0.0
    eligible = scale > 0
    Xs = np.zeros_like(Xc)
    Xs[:, eligible] = Xc[:, eligible] / scale[eligible]
    seen = set()
    for j in np.flatnonzero(eligible):
        col = Xs[:, j]
        pivot = col[np.flatnonzero(np.abs(col) > 1e-9)[0]]
        key = np.round(col * np.sign(pivot), 9).tobytes()
        if key in seen:
            eligible[j] = False
        else:
            seen.add(key)
    y_mean = float(w @ y / W)
    return Standardized(Xs, y - y_mean, w, x_mean, scale, y_mean, eligible)


def _prepare(std):
    if std.gram is None:
        W = std.w.sum()
        Xw = std.X * std.w[:, None]
        std.gram = (Xw.T @ std.X) / W
        std.corr = (Xw.T @ std.y) / W
    return std.gram, std.corr


def lambda_max(std):
    _, c = _prepare(std)
    c = np.where(std.eligible, np.abs(c), 0.0)
    return float(c.max()) if c.size else 0.0


def objective(std, beta, lam):
    r = std.y - std.X @ beta
    return float(std.w @ (r * r) / (2 * std.w.sum()) + lam * np.abs(beta).sum())


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_cd(std, lam, beta0=None, tol=1e-7, max_iter=10_000, history=None):
    """Cyclic coordinate descent with soft-thresholding.

    Works on the weighted Gram matrix of the standardized design.  Sweeps run
    over the current support until it settles, then a full KKT scan admits
    any violating coordinates (visited in index order).  Converged when the
    largest coordinate change in a sweep is below ``tol`` and no inactive
    coordinate violates its optimality condition.  ``history``, when a list,
    receives the objective after every sweep.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    G, c = _prepare(std)
    m = c.size
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=np.float64)
    beta[~std.eligible] = 0.0
    diag = np.diag(G)
    elig = np.flatnonzero(std.eligible)
    Gb = G @ beta
    n_iter = 0
    coords = elig
    full = True
    while True:
        if n_iter >= max_iter:
            raise NotConverged(beta, n_iter)
        n_iter += 1
        max_delta = 0.0
        for j in coords:
            bj = beta[j]
            z = c[j] - Gb[j] + diag[j] * bj
            if z > lam:
                new = (z - lam) / diag[j]
            elif z < -lam:
                new = (z + lam) / diag[j]
            else:
                new = 0.0
            delta = new - bj
            if delta != 0.0:
                beta[j] = new
                Gb += delta * G[:, j]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if history is not None:
            history.append(objective(std, beta, lam))
        if max_delta < tol:
            if full:
                break
            # support settled: stop unless an inactive coordinate violates KKT
            viol = (beta == 0.0) & std.eligible & (np.abs(c - Gb) > lam)
            if not viol.any():
                break
            coords, full = elig, True
        else:
            coords, full = np.flatnonzero(beta), False
    return beta


def lasso_path(std, lambdas, tol=1e-7, max_iter=10_000):
    """Warm-started Lasso solutions along ``lambdas`` (in the given order)."""
    beta = np.zeros(std.X.shape[1])
    for lam in lambdas:
        try:
            beta = lasso_cd(std, lam, beta, tol=tol, max_iter=max_iter)
        except NotConverged as exc:
            log.warning("lasso did not converge at lambda=%g after %d sweeps", lam, exc.n_iter)
            beta = exc.beta
        yield lam, beta.copy()


def geometric_path(lmax, length=PATH_LENGTH, ratio=PATH_RATIO):
    return lmax * ratio ** (np.arange(length) / (length - 1))


def weighted_lstsq(X, y, w):
    """Weighted least squares with intercept; minimum-norm on rank deficiency.

    Returns ``(coef, intercept)``.  The intercept is not part of the norm that
    is minimized: columns and target are centered by their weighted means first.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    W = w.sum()
    x_mean = (w @ X) / W
    y_mean = float(w @ y / W)
    if X.shape[1] == 0:
        return np.zeros(0), y_mean
    sw = np.sqrt(w)
    A = (X - x_mean) * sw[:, None]
    b = (y - y_mean) * sw
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef, float(y_mean - x_mean @ coef)


def weighted_r2(y, pred, w):
    ybar = w @ y / w.sum()
    ss_tot = float(w @ (y - ybar) ** 2)
    ss_res = float(w @ (y - pred) ** 2)
    if ss_tot <= 1e-300:
        return 1.0 if ss_res <= 1e-300 else 0.0
    return 1.0 - ss_res / ss_tot


def select_k(std, K, tol=1e-7, max_iter=10_000):
    """Support chosen by the K-sparse rule on a geometric Lasso path.

    Among path points with at most K nonzero coefficients, the first one with
    the largest support wins.  The path is abandoned as soon as the support
    reaches K or overshoots it.  Returns ``(sorted column indices, lambda)``.
    """
    elig = np.flatnonzero(std.eligible)
    if elig.size <= K:
        return list(elig), 0.0
    lmax = lambda_max(std)
    if lmax <= 0:
        return [], 0.0
    best, best_lam = [], lmax
    for lam, beta in lasso_path(std, geometric_path(lmax), tol=tol, max_iter=max_iter):
        support = np.flatnonzero(beta)
        if len(best) < support.size <= K:
            best, best_lam = list(support), lam
        # support grows as lambda shrinks; past K no later point can qualify
        if support.size >= K:
            break
    return best, float(best_lam)


def k_lasso(X, y, w, K, tol=1e-7, max_iter=10_000):
    """Select at most K columns along a Lasso path, then refit by weighted LS."""
    if K < 1:
        raise ValueError("K must be at least 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    std = standardize(X, y, w)
    m = X.shape[1]
    coef = np.zeros(m)
    degenerate = not std.eligible.any()
    if degenerate:
        log.warning("every column has zero variance; returning an intercept-only model")
        selected, lam = [], 0.0
    else:
        selected, lam = select_k(std, K, tol=tol, max_iter=max_iter)
    sub, intercept = weighted_lstsq(X[:, selected], y, w)
    coef[selected] = sub
    pred = intercept + X @ coef
    return LinearExplanationModel(
        intercept=intercept,
        coef=coef,
        selected=[int(j) for j in selected],
        r2=weighted_r2(y, pred, w),
        local_prediction=float(intercept + coef.sum()),
        degenerate=degenerate,
        path_lambda=lam,
    )
