"""Clique filtrations of point clouds and weighted graphs, and their diagrams.

Simplices enter in the order ``(value, dimension, lexicographic vertices)``.
Edges are stored explicitly; triangles are implied by the edge matrix and
only materialised on request, since a 100-point cloud already has 161,700.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidInputError, UnsupportedRequestError

__all__ = [
    "PointCloud",
    "WeightedGraph",
    "Filtration",
    "PersistenceDiagram",
    "build_rips",
    "build_graph_filtration",
    "compute_diagram",
    "diagram_from_points",
]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInputError(f"point cloud must be an (n, 2) array, got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise InvalidInputError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class WeightedGraph:
    """Complete weighted graph; ``weights[i, j]`` is the edge value, diagonal ignored."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise InvalidInputError(f"weight matrix must be square and nonempty, got shape {w.shape}")
        off = ~np.eye(w.shape[0], dtype=bool)
        if not np.all(np.isfinite(w[off])):
            raise InvalidInputError("weights must be finite")
        if not np.array_equal(w, w.T):
            raise InvalidInputError("weight matrix is not symmetric")
        if np.any(w[off] <= 0):
            raise InvalidInputError("off-diagonal weights must be positive")
        np.fill_diagonal(w, 0.0)
        object.__setattr__(self, "weights", w)

    @property
    def node_count(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class Filtration:
    """Vertices at 0, edges at their matrix value, triangles at their longest edge.

    ``values[i, j]`` is ``inf`` for an edge that never enters.
    """

    values: np.ndarray
    max_dim: int = 2
    _edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        iu, ju = np.triu_indices(v.shape[0], 1)
        vals = v[iu, ju]
        present = np.isfinite(vals)
        iu, ju, vals = iu[present], ju[present], vals[present]
        order = np.lexsort((ju, iu, vals))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_edges", np.column_stack([iu[order], ju[order]]).astype(np.int64))

    @property
    def n_vertices(self) -> int:
        return self.values.shape[0]

    @property
    def edges(self) -> np.ndarray:
        """``(E, 2)`` vertex pairs in filtration order."""
        return self._edges

    @property
    def edge_values(self) -> np.ndarray:
        return self.values[self._edges[:, 0], self._edges[:, 1]]

    @property
    def cap(self) -> float:
        """Largest filtration value of any simplex (0 for a bare vertex set)."""
        ev = self.edge_values
        return float(ev[-1]) if ev.size else 0.0

    def triangles(self) -> tuple[np.ndarray, np.ndarray]:
        """All triangles and their values, in filtration order."""
        if self.max_dim < 2 or self.n_vertices < 3:
            return np.empty((0, 3), dtype=np.int64), np.empty(0)
        n = self.n_vertices
        tri = np.array(list(combinations(range(n), 3)), dtype=np.int64)
        v = self.values
        tv = np.maximum(np.maximum(v[tri[:, 0], tri[:, 1]], v[tri[:, 0], tri[:, 2]]), v[tri[:, 1], tri[:, 2]])
        keep = np.isfinite(tv)
        tri, tv = tri[keep], tv[keep]
        order = np.lexsort((tri[:, 2], tri[:, 1], tri[:, 0], tv))
        return tri[order], tv[order]

    def simplices(self) -> Iterator[tuple[tuple[int, ...], int, float]]:
        """Every simplex as ``(vertices, dim, value)`` in filtration order."""
        items = [((i,), 0, 0.0) for i in range(self.n_vertices)]
        items += [((int(a), int(b)), 1, float(x)) for (a, b), x in zip(self.edges, self.edge_values)]
        tri, tv = self.triangles()
        items += [(tuple(int(x) for x in t), 2, float(x)) for t, x in zip(tri, tv)]
        items.sort(key=lambda s: (s[2], s[1], s[0]))
        return iter(items)

    def __len__(self):
        return self.n_vertices + len(self.edges) + len(self.triangles()[1])


@dataclass(frozen=True)
class PersistenceDiagram:
    dim: int
    pairs: np.ndarray
    cap: float

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.float64).reshape(-1, 2)
        if p.size and np.any(p[:, 1] <= p[:, 0]):
            raise InvalidInputError("every pair needs death > birth")
        if p.size:
            p = p[np.lexsort((p[:, 1], p[:, 0]))]
        object.__setattr__(self, "pairs", p)

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def births(self):
        return self.pairs[:, 0]

    @property
    def deaths(self):
        return self.pairs[:, 1]

    @property
    def persistence(self):
        return self.pairs[:, 1] - self.pairs[:, 0]

    def to_dict(self) -> dict:
        return {"dim": int(self.dim), "cap": float(self.cap), "pairs": self.pairs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PersistenceDiagram":
        return cls(dim=int(d["dim"]), pairs=np.asarray(d["pairs"], dtype=np.float64), cap=float(d["cap"]))

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return (self.dim == other.dim and self.cap == other.cap
                and np.array_equal(self.pairs, other.pairs))


def _euclidean(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_rips(cloud: PointCloud | np.ndarray, max_eps: float | None = None, max_dim: int = 2) -> Filtration:
    """Vietoris-Rips filtration of a planar point cloud.

    ``max_eps`` defaults to the diagonal of the bounding box, which admits
    every edge.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    if max_dim not in (0, 1, 2):
        raise InvalidInputError(f"max_dim must be 0, 1 or 2, got {max_dim}")
    pts = cloud.points
    if max_eps is None:
        span = pts.max(axis=0) - pts.min(axis=0)
        max_eps = float(np.hypot(span[0], span[1]))
    elif not max_eps > 0:
        raise InvalidInputError(f"max_eps must be positive, got {max_eps}")
    d = _euclidean(pts)
    if max_dim == 0:
        d = np.full_like(d, np.inf)
    else:
        d[d > max_eps] = np.inf
    np.fill_diagonal(d, 0.0)
    return Filtration(d, max_dim=max_dim)


def build_graph_filtration(g: WeightedGraph | np.ndarray, max_dim: int = 2) -> Filtration:
    """Threshold filtration: edge ``(i, j)`` enters at ``w_ij``, triangles at their heaviest edge."""
    if not isinstance(g, WeightedGraph):
        g = WeightedGraph(g)
    return Filtration(g.weights.copy(), max_dim=max_dim)


def compute_diagram(f: Filtration, dim: int) -> PersistenceDiagram:
    """Persistence pairs of dimension 0 or 1.

    The essential H0 class is dropped; H1 classes never killed are closed at
    ``f.cap``. Pairs with zero persistence are omitted.
    """
    if dim not in (0, 1):
        raise UnsupportedRequestError(f"only dimensions 0 and 1 are supported, got {dim}")
    if dim == 1 and f.max_dim < 2:
        raise UnsupportedRequestError("H1 needs triangles; the filtration stops at the 1-skeleton")
    n = f.n_vertices
    edges = f.edges
    ev = f.edge_values
    uniq, inv = np.unique(ev, return_inverse=True)
    rank = np.full((n, n), -1, dtype=np.int64)
    rank[edges[:, 0], edges[:, 1]] = inv
    rank[edges[:, 1], edges[:, 0]] = inv
    h0, births, death_keys, essential = kernels.rips_pairs(
        rank, np.ascontiguousarray(edges[:, 0]), np.ascontiguousarray(edges[:, 1]), dim == 1)
    cap = f.cap
    if dim == 0:
        pairs = np.column_stack([np.zeros(len(h0)), ev[h0]])
    else:
        n3 = n * n * n
        finite = np.column_stack([ev[births], uniq[death_keys // n3]]) if len(births) else np.empty((0, 2))
        ess = np.column_stack([ev[essential], np.full(len(essential), cap)]) if len(essential) else np.empty((0, 2))
        pairs = np.vstack([finite, ess])
    pairs = pairs.reshape(-1, 2)
    pairs = pairs[pairs[:, 1] > pairs[:, 0]]
    return PersistenceDiagram(dim=dim, pairs=pairs, cap=cap)


def diagram_from_points(points, dim: int = 1, max_eps: float | None = None) -> PersistenceDiagram:
    return compute_diagram(build_rips(points, max_eps=max_eps, max_dim=2 if dim == 1 else 1), dim)


def diagrams_from_clouds(clouds: Sequence, dim: int = 1) -> list[PersistenceDiagram]:
    return [diagram_from_points(c, dim=dim) for c in clouds]
