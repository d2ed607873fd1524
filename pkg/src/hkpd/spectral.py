"""Heat-kernel representation of persistence diagrams.

Diagrams are mapped affinely into the triangle ``T = {0 <= x <= y <= 1}``
(x = birth, y = death). On ``T`` the Neumann Laplacian has closed-form
eigenfunctions: symmetrised cosine products

    psi_mn(x, y) = c_mn * (cos(m pi x) cos(n pi y) + cos(n pi x) cos(m pi y)),
    lambda_mn = pi^2 (m^2 + n^2),   0 <= m <= n <= M,

which are symmetric under x <-> y and hence have zero normal derivative on
the diagonal as well as on the two legs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DomainViolationError, IncompatibleEmbeddingError, InvalidInputError
from .persistence import PersistenceDiagram

__all__ = [
    "DomainMap",
    "SpectralBasis",
    "HKEmbedding",
    "SmoothedField",
    "fit_domain_map",
    "make_basis",
    "embed",
    "embed_many",
    "evaluate_field",
    "l2_distance",
    "hk_norm",
    "weights",
]

DEFAULT_M = 15
DEFAULT_SIGMA = 1.0
DEFAULT_MARGIN = 0.05
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class DomainMap:
    """``t(v) = margin + (v - shift) / scale``, applied to births and deaths alike."""

    shift: float
    scale: float
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidInputError(f"scale must be positive, got {self.scale}")

    def __call__(self, values):
        return self.margin + (np.asarray(values, dtype=np.float64) - self.shift) / self.scale

    def to_dict(self):
        return {"shift": float(self.shift), "scale": float(self.scale), "margin": float(self.margin)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["shift"]), float(d["scale"]), float(d["margin"]))


def fit_domain_map(diagrams: Sequence[PersistenceDiagram], margin: float = DEFAULT_MARGIN) -> DomainMap:
    """Shared map sending every birth/death of ``diagrams`` into ``[margin, 1 - margin]``."""
    if not 0 < margin < 0.5:
        raise InvalidInputError(f"margin must lie in (0, 0.5), got {margin}")
    values = [d.pairs.ravel() for d in diagrams if len(d)]
    if not values:
        raise InvalidInputError("all diagrams are empty; nothing to standardize")
    v = np.concatenate(values)
    lo, hi = float(v.min()), float(v.max())
    scale = (hi - lo) / (1.0 - 2.0 * margin) if hi > lo else 1.0
    return DomainMap(shift=lo, scale=scale, margin=margin)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    M: int
    index_pairs: np.ndarray
    eigenvalues: np.ndarray
    norms: np.ndarray

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, SpectralBasis) and self.M == other.M

    def __hash__(self):
        return hash(("SpectralBasis", self.M))

    def evaluate(self, x, y) -> np.ndarray:
        """Eigenfunctions at the points ``(x, y)``; shape ``(len(x), size)``."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        freq = np.pi * np.arange(self.M + 1)
        cx = np.cos(np.multiply.outer(x, freq))
        cy = np.cos(np.multiply.outer(y, freq))
        m, n = self.index_pairs[:, 0], self.index_pairs[:, 1]
        return self.norms * (cx[:, m] * cy[:, n] + cx[:, n] * cy[:, m])


@lru_cache(maxsize=None)
def make_basis(M: int = DEFAULT_M) -> SpectralBasis:
    """Neumann eigenbasis of ``T`` with frequencies up to ``M``; ``(M+1)(M+2)/2`` functions."""
    if M < 0:
        raise InvalidInputError(f"M must be nonnegative, got {M}")
    pairs = np.array([(m, n) for n in range(M + 1) for m in range(n + 1)], dtype=np.int64)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0], pairs[:, 0] ** 2 + pairs[:, 1] ** 2))]
    m, n = pairs[:, 0], pairs[:, 1]
    # integral over T of cos^2(k pi x): 1 for k = 0, 1/2 otherwise (halved from the unit square)
    a_m = np.where(m == 0, 1.0, 0.5)
    a_n = np.where(n == 0, 1.0, 0.5)
    sq = np.where(m == n, 2.0 * a_m * a_n, a_m * a_n)
    norms = 1.0 / np.sqrt(sq)
    lam = np.pi ** 2 * (m ** 2 + n ** 2).astype(np.float64)
    for arr in (pairs, lam, norms):
        arr.setflags(write=False)
    return SpectralBasis(M=M, index_pairs=pairs, eigenvalues=lam, norms=norms)


def weights(basis: SpectralBasis, sigma: float) -> np.ndarray:
    """Heat-kernel damping ``exp(-lambda_k sigma)``."""
    if sigma < 0:
        raise InvalidInputError(f"sigma must be nonnegative, got {sigma}")
    return np.exp(-basis.eigenvalues * sigma)


@dataclass(frozen=True, eq=False)
class HKEmbedding:
    coeffs: np.ndarray
    basis: SpectralBasis
    map: DomainMap
    point_count: int

    @property
    def basis_id(self) -> int:
        return self.basis.M

    def compatible_with(self, other: "HKEmbedding") -> bool:
        return self.basis == other.basis and self.map == other.map

    def zero(self) -> "HKEmbedding":
        return HKEmbedding(np.zeros_like(self.coeffs), self.basis, self.map, 0)

    def to_dict(self) -> dict:
        return {
            "basis": {"M": int(self.basis.M)},
            "map": self.map.to_dict(),
            "P": int(self.point_count),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HKEmbedding":
        basis = make_basis(int(d["basis"]["M"]))
        coeffs = np.asarray(d["coeffs"], dtype=np.float64)
        if coeffs.shape != (basis.size,):
            raise InvalidInputError(f"expected {basis.size} coefficients, got {coeffs.shape}")
        return cls(coeffs, basis, DomainMap.from_dict(d["map"]), int(d["P"]))


def _standardize(d: PersistenceDiagram, dmap: DomainMap):
    if not len(d):
        return np.empty(0), np.empty(0)
    x, y = dmap(d.births), dmap(d.deaths)
    bad = (x < -_EDGE_TOL) | (y > 1 + _EDGE_TOL) | (x > y + _EDGE_TOL)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise DomainViolationError(
            f"pair {tuple(d.pairs[k])} maps to ({x[k]:.6g}, {y[k]:.6g}) outside the unit triangle")
    return x, y


def embed(d: PersistenceDiagram, basis: SpectralBasis, dmap: DomainMap) -> HKEmbedding:
    """Fourier coefficients of the Dirac sum at the standardized pairs."""
    x, y = _standardize(d, dmap)
    if x.size == 0:
        coeffs = np.zeros(basis.size)
    else:
        coeffs = basis.evaluate(x, y).sum(axis=0)
    return HKEmbedding(coeffs, basis, dmap, len(d))


def embed_many(diagrams: Sequence[PersistenceDiagram], M: int = DEFAULT_M,
               margin: float = DEFAULT_MARGIN, dmap: DomainMap | None = None) -> list[HKEmbedding]:
    """Embed a whole analysis set on one shared basis and domain map."""
    basis = make_basis(M)
    if dmap is None:
        dmap = fit_domain_map(diagrams, margin)
    return [embed(d, basis, dmap) for d in diagrams]


@dataclass(frozen=True)
class SmoothedField:
    """Row ``i`` holds death ``y_i``, column ``j`` birth ``x_j``; cell centres of an R x R grid.

    Cells below the diagonal (``x > y``) are NaN.
    """

    values: np.ndarray
    sigma: float
    grid: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.10g")


def evaluate_field(e: HKEmbedding, sigma: float, resolution: int = 200) -> SmoothedField:
    """Degree-kappa heat-kernel estimate on a raster of the triangle."""
    if resolution < 2:
        raise InvalidInputError(f"resolution must be at least 2, got {resolution}")
    grid = (np.arange(resolution) + 0.5) / resolution
    freq = np.pi * np.arange(e.basis.M + 1)
    cos = np.cos(np.multiply.outer(grid, freq))
    m, n = e.basis.index_pairs[:, 0], e.basis.index_pairs[:, 1]
    w = weights(e.basis, sigma) * e.coeffs * e.basis.norms
    # sum_k w_k (cos_m(x) cos_n(y) + cos_n(x) cos_m(y)) as a product of small matrices
    A = np.zeros((e.basis.M + 1, e.basis.M + 1))
    np.add.at(A, (m, n), w)
    A = A + A.T
    values = cos @ A.T @ cos.T  # [y, x]
    values[np.greater.outer(grid, grid).T] = np.nan
    return SmoothedField(values, float(sigma), grid)


def _check(e1: HKEmbedding, e2: HKEmbedding):
    if e1.basis != e2.basis:
        raise IncompatibleEmbeddingError(f"basis M={e1.basis.M} vs M={e2.basis.M}")
    if e1.map != e2.map:
        raise IncompatibleEmbeddingError(f"domain maps differ: {e1.map} vs {e2.map}")


def l2_distance(e1: HKEmbedding, e2: HKEmbedding, sigma: float = DEFAULT_SIGMA) -> float:
    """``sum_k exp(-lambda_k sigma) (f1_k - f2_k)^2``."""
    _check(e1, e2)
    diff = e1.coeffs - e2.coeffs
    return float(np.sum(weights(e1.basis, sigma) * diff * diff))


def hk_norm(e: HKEmbedding, sigma: float = DEFAULT_SIGMA) -> float:
    return l2_distance(e, e.zero(), sigma)


def coefficient_matrix(embeddings: Sequence[HKEmbedding]) -> np.ndarray:
    """Stack coefficients after checking that all embeddings share basis and map."""
    if not embeddings:
        raise InvalidInputError("no embeddings given")
    first = embeddings[0]
    for e in embeddings[1:]:
        _check(first, e)
    return np.vstack([e.coeffs for e in embeddings])
