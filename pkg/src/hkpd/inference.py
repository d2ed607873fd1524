"""Resampling tests on heat-kernel embeddings.

Three procedures share the ``TestResult`` record:

* ``two_sample_test`` walks random transpositions between two groups and
  updates the two coefficient means in O(kappa) per step;
* ``tanova`` walks transpositions among K groups over a fixed pairwise
  distance matrix, updating the within/between sums in O(N) per step;
* ``permanova_baseline`` fully reshuffles the labels every iteration.

The p-value is the fraction of chain values at least as large as the
observed statistic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import IncompatibleEmbeddingError, InvalidInputError
from .spectral import DEFAULT_SIGMA, HKEmbedding, coefficient_matrix, weights

__all__ = [
    "GroupedSample",
    "TestResult",
    "TwoSampleChainState",
    "AnovaChainState",
    "two_sample_test",
    "chain_step_two_sample",
    "pairwise_distances",
    "tanova",
    "chain_step_tanova",
    "permanova_baseline",
    "pseudo_f",
    "resolve_seed",
]

HIST_BINS = 64
# relative slack when comparing float chain values to the observed value, so
# that a relabelling equal to the observed one is not lost to rounding drift
_TIE_RTOL = 1e-12


def resolve_seed(seed: int | None) -> int:
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    return int(seed) & ((1 << 64) - 1)


@dataclass
class GroupedSample:
    """Embeddings with a group label each; labels are remapped to ``0..K-1``."""

    embeddings: list[HKEmbedding]
    labels: np.ndarray
    group_names: list = field(default_factory=list)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if len(labels) != len(self.embeddings):
            raise InvalidInputError(f"{len(self.embeddings)} embeddings but {len(labels)} labels")
        names, codes = np.unique(labels, return_inverse=True)
        self.labels = codes.astype(np.int64)
        if not self.group_names:
            self.group_names = names.tolist()
        coefficient_matrix(self.embeddings)  # raises on mixed bases or maps

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[HKEmbedding]]) -> "GroupedSample":
        embeddings = [e for g in groups for e in g]
        labels = np.concatenate([np.full(len(g), k) for k, g in enumerate(groups)])
        return cls(embeddings, labels, list(range(len(groups))))

    @property
    def K(self) -> int:
        return len(self.group_names)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def basis(self):
        return self.embeddings[0].basis

    def coefficients(self) -> np.ndarray:
        return coefficient_matrix(self.embeddings)

    def weighted(self, sigma: float) -> np.ndarray:
        """Coefficient rows scaled by ``exp(-lambda sigma / 2)``; squared Euclidean = HK distance."""
        return np.ascontiguousarray(self.coefficients() * np.sqrt(weights(self.basis, sigma)))


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    method: str
    statistic: float
    p_value: float
    n_resamples: int
    seed: int
    elapsed_ms: float
    histogram: tuple[list, list] = ((), ())
    degenerate: bool = False
    null: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        counts, edges = self.histogram
        out = {
            "method": self.method,
            "observed": _json_float(self.statistic),
            "p_value": float(self.p_value),
            "n_resamples": int(self.n_resamples),
            "seed": int(self.seed),
            "elapsed_ms": float(self.elapsed_ms),
            "histogram": {"counts": [int(c) for c in counts], "edges": [float(x) for x in edges]},
            "degenerate": bool(self.degenerate),
        }
        out.update(self.extra)
        return out


def _json_float(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf"
    return x


def _histogram(null: np.ndarray):
    finite = null[np.isfinite(null)]
    if finite.size == 0:
        return [], []
    counts, edges = np.histogram(finite, bins=HIST_BINS)
    return counts.tolist(), edges.tolist()


def _p_value(null: np.ndarray, observed: float, rtol: float = 0.0) -> float:
    if len(null) == 0:
        return 1.0
    threshold = observed - rtol * abs(observed)
    return float(np.count_nonzero(null >= threshold)) / len(null)


# ---------------------------------------------------------------------------
# two-sample transposition test


class TwoSampleChainState:
    """Running group means of raw coefficients under the current labels.

    ``step(i, j)`` moves embedding ``i`` (group 0) to group 1 and ``j`` the
    other way, touching only the two coefficient rows involved.
    """

    def __init__(self, coeffs: np.ndarray, labels: np.ndarray, w: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self.labels = np.array(labels, dtype=np.int64)
        if set(np.unique(self.labels)) != {0, 1}:
            raise InvalidInputError("two-sample chain needs labels 0 and 1, both present")
        self.w = np.asarray(w, dtype=np.float64)
        self.m = int(np.count_nonzero(self.labels == 0))
        self.n = len(self.labels) - self.m
        self.fbar = self.coeffs[self.labels == 0].mean(axis=0)
        self.gbar = self.coeffs[self.labels == 1].mean(axis=0)
        self.statistic = self._stat()
        self.touched = 0

    @classmethod
    def from_sample(cls, sample: GroupedSample, sigma: float = DEFAULT_SIGMA) -> "TwoSampleChainState":
        if sample.K != 2:
            raise InvalidInputError(f"two-sample chain needs K = 2, got {sample.K}")
        return cls(sample.coefficients(), sample.labels, weights(sample.basis, sigma))

    def _stat(self) -> float:
        d = self.fbar - self.gbar
        return float(np.sum(self.w * d * d))

    def step(self, i: int, j: int) -> float:
        N = len(self.labels)
        if not (0 <= i < N and 0 <= j < N):
            raise InvalidInputError(f"indices ({i}, {j}) out of range for N = {N}")
        if self.labels[i] != 0 or self.labels[j] != 1:
            raise InvalidInputError(f"need i in group 0 and j in group 1, got labels "
                                    f"{self.labels[i]} and {self.labels[j]}")
        fi, gj = self.coeffs[i], self.coeffs[j]
        self.touched += fi.size + gj.size
        self.fbar = self.fbar + (gj - fi) / self.m
        self.gbar = self.gbar + (fi - gj) / self.n
        self.labels[i], self.labels[j] = 1, 0
        self.statistic = self._stat()
        return self.statistic


def chain_step_two_sample(state: TwoSampleChainState, i: int, j: int) -> float:
    """Apply one transposition in place and return the new statistic."""
    return state.step(i, j)


def two_sample_statistic(X: np.ndarray, labels: np.ndarray) -> float:
    """Squared distance between group means of pre-weighted rows."""
    labels = np.asarray(labels)
    d = X[labels == 0].mean(axis=0) - X[labels == 1].mean(axis=0)
    return float(d @ d)


def two_sample_test(sample: GroupedSample, sigma: float = DEFAULT_SIGMA, n_steps: int = 100_000,
                    shuffle_period: int = 500, seed: int | None = None,
                    keep_null: bool = False) -> TestResult:
    """Spectral transposition test for a difference in mean heat-kernel estimates."""
    if sample.K != 2:
        raise InvalidInputError(f"two-sample test needs exactly 2 groups, got {sample.K}")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be at least 1")
    seed = resolve_seed(seed)
    t0 = time.perf_counter()
    X = sample.weighted(sigma)
    observed = two_sample_statistic(X, sample.labels)
    null, _, _ = kernels.two_sample_chain(X, sample.labels, int(n_steps), int(shuffle_period), seed)
    p = _p_value(null, observed, _TIE_RTOL)
    degenerate = observed == 0.0 and not np.any(null > 0)
    if degenerate:
        p = 1.0
    elapsed = (time.perf_counter() - t0) * 1e3
    return TestResult("two-sample", observed, p, int(n_steps), seed, elapsed, _histogram(null),
                      degenerate, null if keep_null else None,
                      {"sigma": float(sigma), "shuffle_period": int(shuffle_period)})


# ---------------------------------------------------------------------------
# pairwise distances and T-ANOVA


def pairwise_distances(sample: GroupedSample | Sequence[HKEmbedding], sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Symmetric matrix of heat-kernel distances with an exactly zero diagonal."""
    if isinstance(sample, GroupedSample):
        X = sample.weighted(sigma)
    else:
        embeddings = list(sample)
        X = coefficient_matrix(embeddings) * np.sqrt(weights(embeddings[0].basis, sigma))
    N = X.shape[0]
    D = np.zeros((N, N))
    for i in range(N - 1):
        diff = X[i + 1:] - X[i]
        D[i, i + 1:] = np.einsum("ij,ij->i", diff, diff)
    return D + D.T


def fixed_point(D: np.ndarray) -> tuple[np.ndarray, float]:
    """Round distances onto a power-of-two grid so every partial sum is exact.

    The scale keeps the total of the upper triangle below 2**52, so sums
    stay exact both as int64 and after conversion to float.
    """
    N = D.shape[0]
    total = float(np.triu(D, 1).sum())
    if total <= 0:
        return np.zeros_like(D, dtype=np.int64), 1.0
    scale = 2.0 ** math.floor(math.log2((2.0 ** 52 - N * N) / total))
    Dint = np.rint(D * scale).astype(np.int64)
    Dint = np.triu(Dint, 1)
    return Dint + Dint.T, scale


def tss(D: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(TSSB, TSSW): sums of pairwise distances between and within groups."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    upper = np.triu(np.ones_like(same), 1)
    return float(D[upper & ~same].sum()), float(D[upper & same].sum())


def _ratio(tssb, tssw) -> float:
    if tssw == 0:
        return math.nan if tssb == 0 else math.inf
    return float(tssb) / float(tssw)


class AnovaChainState:
    """Within/between sums over a fixed distance matrix, updated per transposition.

    Distances are held in fixed point (see ``fixed_point``) so that
    ``tssb + tssw == total`` holds exactly after any number of steps.
    A step reads the two distance rows of the exchanged members and nothing else.
    """

    def __init__(self, D: np.ndarray, labels: np.ndarray, K: int | None = None):
        D = np.asarray(D, dtype=np.float64)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise InvalidInputError("distance matrix must be square")
        self.labels = np.array(labels, dtype=np.int64)
        self.K = int(K if K is not None else self.labels.max() + 1)
        sizes = np.bincount(self.labels, minlength=self.K)
        if np.any(sizes == 0):
            raise InvalidInputError(f"every group needs at least one member, sizes {sizes.tolist()}")
        self.D = D
        self.Dint, self.scale = fixed_point(D)
        same = self.labels[:, None] == self.labels[None, :]
        self.total = int(np.triu(self.Dint, 1).sum())
        self.tssw_int = int(np.triu(np.where(same, self.Dint, 0), 1).sum())
        self.tssb_int = self.total - self.tssw_int
        self.touched = 0

    @property
    def tssb(self) -> float:
        return self.tssb_int / self.scale

    @property
    def tssw(self) -> float:
        return self.tssw_int / self.scale

    @property
    def phi(self) -> float:
        return _ratio(self.tssb_int, self.tssw_int)

    def step(self, a: int, b: int) -> float:
        """Swap the groups of members ``a`` and ``b``; returns the new ratio."""
        N = len(self.labels)
        if not (0 <= a < N and 0 <= b < N):
            raise InvalidInputError(f"members ({a}, {b}) out of range for N = {N}")
        g1, g2 = int(self.labels[a]), int(self.labels[b])
        if g1 == g2:
            raise InvalidInputError("a transposition within one group leaves the statistic unchanged")
        lab = self.labels
        # a gains the members of g2 and loses those of g1; b the reverse; D[a, b] sits in both
        sign = (lab == g2).astype(np.int64) - (lab == g1).astype(np.int64)
        dw = int(sign @ (self.Dint[a] - self.Dint[b])) - 2 * int(self.Dint[a, b])
        self.tssw_int += dw
        self.tssb_int -= dw
        self.touched += 2 * (N - 1) - 1  # distinct entries {a,x}, {b,x}; {a,b} shared
        self.labels[a], self.labels[b] = g2, g1
        return self.phi


def chain_step_tanova(state: AnovaChainState, i1: int, j1: int, i2: int, j2: int) -> float:
    """Move member ``j1`` of group ``i1`` to ``i2`` and member ``j2`` the other way."""
    if i1 == i2:
        raise InvalidInputError("transposition needs two distinct groups")
    if state.labels[j1] != i1 or state.labels[j2] != i2:
        raise InvalidInputError(f"member {j1} is in group {state.labels[j1]}, member {j2} in "
                                f"group {state.labels[j2]}; expected {i1} and {i2}")
    return state.step(j1, j2)


def tanova(sample: GroupedSample, sigma: float = DEFAULT_SIGMA, n_steps: int = 1_000_000,
           shuffle_period: int = 500, seed: int | None = None,
           distances: np.ndarray | None = None, keep_null: bool = False) -> TestResult:
    """Topological ANOVA: ratio of between- to within-group distance sums."""
    if sample.K < 2:
        raise InvalidInputError(f"T-ANOVA needs at least 2 groups, got {sample.K}")
    if n_steps < 1:
        raise InvalidInputError("n_steps must be at least 1")
    seed = resolve_seed(seed)
    t0 = time.perf_counter()
    D = pairwise_distances(sample, sigma) if distances is None else np.asarray(distances, dtype=np.float64)
    state = AnovaChainState(D, sample.labels, sample.K)
    observed = state.phi
    null, _, _, _, _ = kernels.tanova_chain(state.Dint, sample.labels, sample.K, int(n_steps),
                                           int(shuffle_period), seed)
    degenerate = math.isnan(observed)
    p = 1.0 if degenerate else _p_value(null, observed)
    elapsed = (time.perf_counter() - t0) * 1e3
    return TestResult("tanova", observed, p, int(n_steps), seed, elapsed, _histogram(null),
                      degenerate, null if keep_null else None,
                      {"sigma": float(sigma), "shuffle_period": int(shuffle_period),
                       "tssb": state.tssb, "tssw": state.tssw})


# ---------------------------------------------------------------------------
# PERMANOVA


def pseudo_f(D: np.ndarray, labels: np.ndarray, K: int | None = None) -> float:
    """Anderson's pseudo-F; ``D`` already holds squared distances."""
    labels = np.asarray(labels)
    K = int(K if K is not None else labels.max() + 1)
    N = len(labels)
    iu, ju = np.triu_indices(N, 1)
    upper = D[iu, ju]
    sst = upper.sum() / N
    same = labels[iu] == labels[ju]
    W = np.bincount(labels[iu][same], weights=upper[same], minlength=K)
    ssw = float((W / np.bincount(labels, minlength=K)).sum())
    if ssw == 0.0:
        return math.nan if sst - ssw == 0.0 else math.inf
    return ((sst - ssw) / (K - 1)) / (ssw / (N - K))


def permanova_baseline(sample: GroupedSample, distances: np.ndarray | None = None, n_perms: int = 10_000,
                       seed: int | None = None, sigma: float = DEFAULT_SIGMA,
                       keep_null: bool = False) -> TestResult:
    """Permutational ANOVA with a full relabelling every iteration."""
    if sample.K < 2:
        raise InvalidInputError(f"PERMANOVA needs at least 2 groups, got {sample.K}")
    if np.any(sample.sizes == 0):
        raise InvalidInputError("every group needs at least one member")
    if sample.N <= sample.K:
        raise InvalidInputError("PERMANOVA needs more observations than groups")
    seed = resolve_seed(seed)
    t0 = time.perf_counter()
    D = pairwise_distances(sample, sigma) if distances is None else np.ascontiguousarray(distances, dtype=np.float64)
    if D.shape != (sample.N, sample.N):
        raise IncompatibleEmbeddingError(f"distance matrix shape {D.shape} does not match N = {sample.N}")
    observed = pseudo_f(D, sample.labels, sample.K)
    null = kernels.permanova_chain(D, sample.labels, sample.K, int(n_perms), seed)
    degenerate = math.isnan(observed)
    p = 1.0 if degenerate else _p_value(null, observed, _TIE_RTOL)
    elapsed = (time.perf_counter() - t0) * 1e3
    return TestResult("permanova", observed, p, int(n_perms), seed, elapsed, _histogram(null),
                      degenerate, null if keep_null else None, {"sigma": float(sigma)})
