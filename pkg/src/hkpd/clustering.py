"""Topological k-means on heat-kernel embeddings.

The heat-kernel distance is a diagonal rescaling of coefficient space, so
clustering runs as plain Lloyd iterations on rows scaled by
``exp(-lambda sigma / 2)``. Centroids are reported in raw coefficients,
i.e. as the functional mean of the members' heat-kernel estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .inference import GroupedSample, resolve_seed
from .spectral import DEFAULT_SIGMA, HKEmbedding, coefficient_matrix, weights

__all__ = ["Clustering", "topo_kmeans", "fit_score", "silhouette", "adjusted_rand_index"]

MAX_ITER = 300


@dataclass
class Clustering:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    silhouette: float
    seed: int
    sigma: float
    n_iter: int = 0
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        sil = None if np.isnan(self.silhouette) else float(self.silhouette)
        return {
            "k": int(self.k),
            "assignments": [int(a) for a in self.assignments],
            "centroids": self.centroids.tolist(),
            "inertia": float(self.inertia),
            "silhouette": sil,
            "seed": int(self.seed),
            "sigma": float(self.sigma),
        }


def _scaled(sample, sigma):
    if isinstance(sample, GroupedSample):
        embeddings = sample.embeddings
    else:
        embeddings = list(sample)
    if not embeddings:
        raise InvalidInputError("no embeddings to cluster")
    C = coefficient_matrix(embeddings)
    s = np.sqrt(weights(embeddings[0].basis, sigma))
    return C, C * s, s


def _sq_dists(X, centers):
    # ||x||^2 - 2 x.c + ||c||^2 loses digits when points coincide; go direct
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _plusplus(X, k, rng):
    N = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(N)]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(N)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, N - 1)
        centers[j] = X[idx]
        d2 = np.minimum(d2, _sq_dists(X, centers[j:j + 1])[:, 0])
    return centers


def _repair(X, assign, centers, k):
    """Give each empty cluster the point farthest from its current centroid."""
    for j in range(k):
        if np.any(assign == j):
            continue
        own = np.einsum("ij,ij->i", X - centers[assign], X - centers[assign])
        counts = np.bincount(assign, minlength=k)
        own[counts[assign] <= 1] = -1.0  # never empty another cluster
        far = int(np.argmax(own))
        assign[far] = j
        centers[j] = X[far]
    return assign


def _lloyd(X, k, rng, max_iter):
    centers = _plusplus(X, k, rng)
    assign = np.argmin(_sq_dists(X, centers), axis=1)
    assign = _repair(X, assign, centers, k)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centers = np.vstack([X[assign == j].mean(axis=0) for j in range(k)])
        d = _sq_dists(X, centers)
        history.append(float(d[np.arange(len(X)), assign].sum()))
        new = np.argmin(d, axis=1)
        new = _repair(X, new, centers, k)
        if np.array_equal(new, assign):
            break
        assign = new
    centers = np.vstack([X[assign == j].mean(axis=0) for j in range(k)])
    inertia = float(_sq_dists(X, centers)[np.arange(len(X)), assign].sum())
    history.append(inertia)
    return assign, inertia, n_iter, history


def _canonical(assign):
    """Relabel clusters in order of first appearance."""
    _, first = np.unique(assign, return_index=True)
    remap = np.empty(assign.max() + 1, dtype=np.int64)
    remap[assign[np.sort(first)]] = np.arange(len(first))
    return remap[assign]


def silhouette(X: np.ndarray, assign: np.ndarray) -> float:
    """Mean silhouette of rows ``X`` under Euclidean distance (NaN for one cluster)."""
    assign = np.asarray(assign)
    labels = np.unique(assign)
    if len(labels) < 2:
        return float("nan")
    D = np.sqrt(np.maximum(_sq_dists(X, X), 0.0))
    s = np.zeros(len(X))
    for i in range(len(X)):
        own = assign == assign[i]
        if own.sum() == 1:
            continue  # singleton: silhouette 0 by convention
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, assign == g].mean() for g in labels if g != assign[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean())


def topo_kmeans(sample: GroupedSample | Sequence[HKEmbedding], k: int, sigma: float = DEFAULT_SIGMA,
                n_init: int = 20, seed: int | None = None, max_iter: int = MAX_ITER) -> Clustering:
    """Best of ``n_init`` k-means++ restarts under the heat-kernel distance."""
    C, X, s = _scaled(sample, sigma)
    N = X.shape[0]
    if not 1 <= k <= N:
        raise InvalidInputError(f"k must lie in [1, {N}], got {k}")
    if n_init < 1:
        raise InvalidInputError("n_init must be at least 1")
    seed = resolve_seed(seed)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(X, k, rng, max_iter)
        if best is None or run[1] < best[1]:
            best = run
    assign, inertia, n_iter, history = best
    assign = _canonical(assign)
    centroids = np.vstack([C[assign == j].mean(axis=0) for j in range(k)])
    return Clustering(k, assign, centroids, inertia, silhouette(X, assign), seed, float(sigma),
                      n_iter, history)


def fit_score(sample: GroupedSample | Sequence[HKEmbedding], k_range: Iterable[int],
              sigma: float = DEFAULT_SIGMA, seed: int | None = None, n_init: int = 20) -> list[dict]:
    """Mean silhouette and inertia for each ``k``; pick the row with the largest silhouette."""
    ks = [int(k) for k in k_range]
    N = len(sample.embeddings) if isinstance(sample, GroupedSample) else len(list(sample))
    if not ks or min(ks) < 2 or max(ks) > N - 1:
        raise InvalidInputError(f"k_range must lie within [2, {N - 1}], got {ks}")
    seed = resolve_seed(seed)
    rows = []
    for k in ks:
        c = topo_kmeans(sample, k, sigma=sigma, n_init=n_init, seed=seed)
        rows.append({"k": k, "silhouette": c.silhouette, "inertia": c.inertia})
    return rows


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Hubert-Arabie adjusted Rand index of two labelings."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise InvalidInputError("labelings differ in length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        return float((x * (x - 1) // 2).sum())

    index = pairs(table)
    ra, rb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    n = len(a)
    expected = ra * rb / (n * (n - 1) / 2) if n > 1 else 0.0
    top = 0.5 * (ra + rb)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)
