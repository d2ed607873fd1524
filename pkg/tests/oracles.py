"""Independent brute-force references used by the test-suite."""

import numpy as np

from hkpd.persistence import PersistenceDiagram


def naive_pairs(filtration, dim):
    """Plain left-to-right Z/2 column reduction over the full boundary matrix.

    Returns the multiset of (birth, death) pairs of dimension ``dim`` with
    positive persistence; unpaired H1 classes die at ``filtration.cap`` and
    unpaired H0 classes are dropped.
    """
    simplices = list(filtration.simplices())
    index = {s[0]: k for k, s in enumerate(simplices)}
    columns = []
    for verts, d, _ in simplices:
        if d == 0:
            columns.append(set())
        else:
            faces = [tuple(v for v in verts if v != x) for x in verts]
            columns.append({index[f] for f in faces})
    low_owner = {}
    paired = set()
    pairs = []
    for j, col in enumerate(columns):
        while col:
            low = max(col)
            if low in low_owner:
                col ^= columns[low_owner[low]]
            else:
                low_owner[low] = j
                paired.update((low, j))
                birth_s, death_s = simplices[low], simplices[j]
                if birth_s[1] == dim:
                    pairs.append((birth_s[2], death_s[2]))
                break
    if dim == 1:
        for k, (verts, d, val) in enumerate(simplices):
            if d == 1 and k not in paired and not columns[k]:
                pairs.append((val, filtration.cap))
    out = sorted((b, d) for b, d in pairs if d > b)
    return np.array(out, dtype=float).reshape(-1, 2)


def scratch_two_sample(X, labels):
    """Squared norm of the difference of group means of pre-weighted rows."""
    labels = np.asarray(labels)
    d = X[labels == 0].mean(axis=0) - X[labels == 1].mean(axis=0)
    return float(d @ d), d


def scratch_tss(D, labels):
    """(TSSB, TSSW) by direct double loop over pairs."""
    N = D.shape[0]
    tssb = tssw = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            if labels[i] == labels[j]:
                tssw += D[i, j]
            else:
                tssb += D[i, j]
    return tssb, tssw


def triangle_quadrature(values):
    """Midpoint rule on the upper triangle of a cell-centred grid; diagonal cells count half."""
    R = values.shape[0]
    w = np.triu(np.ones((R, R)), 1) + 0.5 * np.eye(R)  # [y, x] with y >= x  -> transpose of triu
    w = w.T
    return float(np.nansum(values * w)) / R ** 2


def random_diagram(rng, k=None):
    k = int(rng.integers(1, 12)) if k is None else k
    b = rng.random(k) * 0.6
    d = b + rng.random(k) * 0.4 + 1e-3
    return PersistenceDiagram(1, np.column_stack([b, d]), 1.0)
