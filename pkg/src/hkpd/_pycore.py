"""Pure-Python twins of the compiled kernels in ``_core.pyx``.

Same signatures, same SplitMix64 stream, same update order. Used when the
extension is not built or when ``HKPD_PURE_PYTHON=1`` is set.
"""

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n):
        return (self.next() * n) >> 64

    def shuffle(self, arr):
        for i in range(len(arr) - 1, 0, -1):
            k = self.below(i + 1)
            arr[i], arr[k] = arr[k], arr[i]


def splitmix_draws(seed, count, bound):
    rng = SplitMix64(seed)
    return np.array([rng.below(bound) for _ in range(count)], dtype=np.int64)


def _symdiff(a, b):
    out = []
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        if a[i] < b[j]:
            out.append(a[i])
            i += 1
        elif b[j] < a[i]:
            out.append(b[j])
            j += 1
        else:
            i += 1
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def rips_pairs(rank, eu, ev, with_h1):
    n = rank.shape[0]
    E = len(eu)
    n3 = n * n * n
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    negative = np.zeros(E, dtype=bool)
    h0 = []
    for e in range(E):
        x, y = find(int(eu[e])), find(int(ev[e]))
        if x != y:
            if x < y:
                parent[y] = x
            else:
                parent[x] = y
            negative[e] = True
            h0.append(e)
    empty = np.empty(0, dtype=np.int64)
    if not with_h1:
        return np.asarray(h0, dtype=np.int64), empty, empty, empty

    rank = np.asarray(rank)
    others = np.arange(n)
    reduced = []
    pivot_of = {}
    births, deaths, essential = [], [], []
    for e in range(E - 1, -1, -1):
        if negative[e]:
            continue
        u, w = int(eu[e]), int(ev[e])
        ruv, rwv = rank[u], rank[w]
        ok = (ruv >= 0) & (rwv >= 0)
        ok[u] = ok[w] = False
        v = others[ok]
        key = np.maximum(np.maximum(ruv[ok], rwv[ok]), rank[u, w])
        a = np.minimum(v, u)
        c = np.maximum(v, w)
        b = u + w + v - a - c
        col = sorted((key * n3 + (a * n + b) * n + c).tolist())
        while col:
            j = pivot_of.get(col[0])
            if j is None:
                break
            col = _symdiff(col, reduced[j])
        if not col:
            essential.append(e)
        else:
            pivot_of[col[0]] = len(reduced)
            reduced.append(col)
            births.append(e)
            deaths.append(col[0])
    return (np.asarray(h0, dtype=np.int64), np.asarray(births, dtype=np.int64),
            np.asarray(deaths, dtype=np.int64), np.asarray(essential, dtype=np.int64))


def _two_sample_means(X, order, m):
    d = np.zeros(X.shape[1])
    for i in range(m):
        d += X[order[i]] * (1.0 / m)
    wn = 1.0 / (X.shape[0] - m)
    for i in range(m, X.shape[0]):
        d -= X[order[i]] * wn
    return d


def two_sample_chain(X, labels, n_steps, shuffle_period, seed):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    N = X.shape[0]
    order = np.concatenate([np.flatnonzero(labels == 0), np.flatnonzero(labels != 0)]).astype(np.int64)
    m = int(np.count_nonzero(labels == 0))
    n = N - m
    c = 1.0 / m + 1.0 / n
    rng = SplitMix64(seed)
    null = np.empty(n_steps)
    d = _two_sample_means(X, order, m)
    for t in range(n_steps):
        if shuffle_period > 0 and t > 0 and t % shuffle_period == 0:
            rng.shuffle(order)
            d = _two_sample_means(X, order, m)
        ii = rng.below(m)
        jj = m + rng.below(n)
        a, b = order[ii], order[jj]
        d += c * (X[b] - X[a])
        null[t] = d @ d
        order[ii], order[jj] = b, a
    return null, order, d


def _within(D, lab):
    same = lab[:, None] == lab[None, :]
    return int(np.triu(np.where(same, D, 0), 1).sum())


def _ratio(tssb, tssw):
    if tssw == 0:
        return float("nan") if tssb == 0 else float("inf")
    return float(tssb) / float(tssw)


def _blocks(lab, K):
    members = np.concatenate([np.flatnonzero(lab == g) for g in range(K)]).astype(np.int64)
    pos = np.empty_like(members)
    pos[members] = np.arange(len(members))
    return members, pos


def tanova_chain(D, labels, K, n_steps, shuffle_period, seed):
    D = np.asarray(D, dtype=np.int64)
    N = D.shape[0]
    lab = np.array(labels, dtype=np.int64)
    sizes = np.bincount(lab, minlength=K)
    start = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    pi, pj = np.nonzero(~np.eye(K, dtype=bool))
    cw = np.cumsum(sizes[pi] * sizes[pj]).tolist()
    W = cw[-1]
    rng = SplitMix64(seed)
    null = np.empty(n_steps)
    total = int(np.triu(D, 1).sum())
    members, pos = _blocks(lab, K)
    tssw = _within(D, lab)
    tssb = total - tssw
    for t in range(n_steps):
        if shuffle_period > 0 and t > 0 and t % shuffle_period == 0:
            rng.shuffle(lab)
            members, pos = _blocks(lab, K)
            tssw = _within(D, lab)
            tssb = total - tssw
        r = rng.below(W)
        p = 0
        while cw[p] <= r:
            p += 1
        g1, g2 = int(pi[p]), int(pj[p])
        a = int(members[start[g1] + rng.below(int(sizes[g1]))])
        b = int(members[start[g2] + rng.below(int(sizes[g2]))])
        sign = (lab == g2).astype(np.int64) - (lab == g1).astype(np.int64)
        dw = int(sign @ (D[a] - D[b])) - 2 * int(D[a, b])
        tssw += dw
        tssb -= dw
        lab[a], lab[b] = g2, g1
        members[pos[a]], members[pos[b]] = b, a
        pos[a], pos[b] = pos[b], pos[a]
        null[t] = _ratio(tssb, tssw)
    return null, lab, tssb, tssw, total


def permanova_chain(D, labels, K, n_perms, seed):
    D = np.asarray(D, dtype=np.float64)
    N = D.shape[0]
    lab = np.array(labels, dtype=np.int64)
    sizes = np.bincount(lab, minlength=K).astype(np.float64)
    rng = SplitMix64(seed)
    iu, ju = np.triu_indices(N, 1)
    upper = D[iu, ju]
    sst = upper.sum() / N
    null = np.empty(n_perms)
    for t in range(n_perms):
        rng.shuffle(lab)
        same = lab[iu] == lab[ju]
        W = np.bincount(lab[iu][same], weights=upper[same], minlength=K)
        ssw = float((W / sizes).sum())
        if ssw == 0.0:
            null[t] = float("nan") if sst - ssw == 0.0 else float("inf")
        else:
            null[t] = ((sst - ssw) / (K - 1)) / (ssw / (N - K))
    return null
