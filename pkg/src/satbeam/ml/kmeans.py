"""Lloyd's k-means with k-means++ seeding and an inertia elbow sweep."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import FeatureScaler

MAX_ITER = 300


@dataclass
class KMeansModel:
    n_clusters: int
    centroids: np.ndarray
    inertia: float
    codebook: np.ndarray | None = None  # (n_clusters, 324) representative quadrant bits
    scaler: FeatureScaler | None = None
    history: list = field(default_factory=list)  # inertia per Lloyd iteration
    n_iter: int = 0

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("n_clusters must be >= 2")
        self.centroids = np.asarray(self.centroids, float)
        if not np.isfinite(self.centroids).all():
            raise ValueError("non-finite centroid")

    def assign(self, x) -> np.ndarray:
        return _nearest(np.atleast_2d(np.asarray(x, float)), self.centroids)[0]


def _sq_dist(x, c):
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _nearest(x, c):
    d = _sq_dist(x, c)
    lab = np.argmin(d, axis=1)
    return lab, d[np.arange(len(x)), lab]


def _plus_plus(x, k, rng):
    n = len(x)
    centers = [int(rng.integers(n))]
    d = _sq_dist(x, x[centers])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total <= 0:
            # every remaining point coincides with a center
            rest = np.setdiff1d(np.arange(n), centers)
            centers.append(int(rng.choice(rest)))
        else:
            centers.append(int(rng.choice(n, p=d / total)))
        d = np.minimum(d, _sq_dist(x, x[centers[-1:]])[:, 0])
    return x[centers].copy()


def kmeans_fit(x, n_clusters: int, seed: int = 0, max_iter: int = MAX_ITER) -> KMeansModel:
    """Cluster rows of ``x``; stops when assignments are stable or after ``max_iter`` sweeps."""
    x = np.asarray(x, float)
    if n_clusters > len(x):
        raise ValueError(f"n_clusters={n_clusters} exceeds the {len(x)} available points")
    if n_clusters > len(np.unique(x, axis=0)):
        raise ValueError(f"n_clusters={n_clusters} exceeds the number of distinct points")
    rng = np.random.default_rng(seed)
    c = _plus_plus(x, n_clusters, rng)
    labels, d = _nearest(x, c)
    history = [float(d.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        new_c = c.copy()
        counts = np.bincount(labels, minlength=n_clusters)
        for j in range(n_clusters):
            if counts[j]:
                new_c[j] = x[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            # re-seed empty clusters from the points farthest from their centroid
            far = np.argsort(-d, kind="stable")
            for j, i in zip(empty, far):
                new_c[j] = x[i]
        c = new_c
        new_labels, d = _nearest(x, c)
        history.append(float(d.sum()))
        if np.array_equal(new_labels, labels) and not len(empty):
            labels = new_labels
            break
        labels = new_labels
    return KMeansModel(n_clusters, c, float(d.sum()), history=history, n_iter=it)


def elbow_sweep(x, ks, seed: int = 0):
    """Inertia for each k in ``ks``; returns (ks, inertias)."""
    ks = [int(k) for k in ks if k <= len(x)]
    return ks, [kmeans_fit(x, k, seed).inertia for k in ks]


def pick_knee(ks, inertias) -> int:
    """k at the largest second difference of the log-inertia curve.

    On the raw curve the first big drop always wins, so the log scale is
    used to make the knee scale-free.
    """
    if len(ks) < 3:
        return int(ks[0])
    y = np.log(np.maximum(np.asarray(inertias, float), 1e-300))
    d2 = y[:-2] - 2 * y[1:-1] + y[2:]
    return int(ks[1 + int(np.argmax(d2))])
