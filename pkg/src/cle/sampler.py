"""Local perturbation of binary representations and proximity kernels."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LengthMismatch

COSINE = "cosine"
EUCLIDEAN = "euclidean-normalized"

DEFAULT_SIGMA = {COSINE: 0.25, EUCLIDEAN: 0.75}


@dataclass(frozen=True)
class KernelConfig:
    sigma: float = 0.25
    metric: str = COSINE

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("kernel width must be positive")
        if self.metric not in (COSINE, EUCLIDEAN):
            raise ValueError(f"unknown metric {self.metric!r}")

    @classmethod
    def for_metric(cls, metric):
        return cls(DEFAULT_SIGMA[metric], metric)


@dataclass
class PerturbationBatch:
    masks: np.ndarray
    weights: np.ndarray
    outputs: np.ndarray
    seed: int
    extended: Optional[np.ndarray] = None
    combos: tuple = ()


def _draw(d, n, rng):
    ks = rng.integers(0, d + 1, size=n)
    ranks = rng.random((n, d)).argsort(axis=1).argsort(axis=1)
    return (ranks >= ks[:, None]).astype(np.uint8)


def perturb(x_bits, n, seed, partitions=1):
    """Draw ``n`` perturbed copies of ``x_bits`` as an ``(n, d)`` uint8 array.

    Each row picks a count k uniformly from 0..d and zeroes a uniformly random
    k-subset of the ones.  Row 0 is always the unperturbed vector.  With
    ``partitions > 1`` the rows are produced in contiguous chunks, chunk p
    drawing from the substream ``seed ^ p``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(getattr(x_bits, "bits", x_bits), dtype=np.uint8)
    ones = np.flatnonzero(x)
    sizes = [len(c) for c in np.array_split(np.arange(n), partitions)]
    chunks = []
    for p, size in enumerate(sizes):
        rng = np.random.default_rng(seed ^ p)
        sub = _draw(ones.size, size, rng)
        rows = np.zeros((size, x.size), dtype=np.uint8)
        rows[:, ones] = sub
        chunks.append(rows)
    masks = np.concatenate(chunks)
    masks[0] = x
    return masks


def distance(x, p, metric=COSINE):
    """Distance between two binary vectors, or between ``x`` and each row of ``p``."""
    x = np.asarray(getattr(x, "bits", x), dtype=np.float64)
    p = np.asarray(getattr(p, "bits", p), dtype=np.float64)
    single = p.ndim == 1
    P = np.atleast_2d(p)
    if P.shape[1] != x.size:
        raise LengthMismatch(f"lengths {x.size} and {P.shape[1]} differ")
    if metric == COSINE:
        dots = P @ x
        norms = np.sqrt((P * P).sum(axis=1)) * np.sqrt(x @ x)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(norms > 0, 1.0 - dots / np.where(norms > 0, norms, 1.0), 1.0)
        out = np.maximum(out, 0.0)
    elif metric == EUCLIDEAN:
        out = np.sqrt(((P - x) ** 2).sum(axis=1)) / np.sqrt(x.size)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return float(out[0]) if single else out


def kernel_weight(dist, cfg):
    dist = np.asarray(dist, dtype=np.float64)
    w = np.exp(-(dist ** 2) / cfg.sigma ** 2)
    return float(w) if w.ndim == 0 else w
