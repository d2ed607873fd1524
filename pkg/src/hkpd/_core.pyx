# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled kernels.

Every function here has a pure-Python twin in :mod:`hkpd._pycore` with the
same signature and the same random stream, so the two can be compared
draw for draw.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from libc.math cimport NAN, INFINITY
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map
from libcpp.algorithm cimport sort
from cython.operator cimport dereference as deref

cnp.import_array()

cdef extern from *:
    """
    static inline unsigned long long hkpd_mulhi(unsigned long long z, unsigned long long n) {
        return (unsigned long long)(((unsigned __int128)z * n) >> 64);
    }

    /* sum over x of (D[a,x] - D[b,x]) signed +1 on group g2, -1 on group g1 */
    __attribute__((target_clones("avx2", "default")))
    static long long hkpd_cross(const long long *__restrict lab, const long long *__restrict da,
                                const long long *__restrict db, long long g1, long long g2,
                                Py_ssize_t n) {
        long long acc = 0;
        for (Py_ssize_t x = 0; x < n; ++x) {
            long long d = da[x] - db[x];
            long long m2 = -(long long)(lab[x] == g2);
            long long m1 = -(long long)(lab[x] == g1);
            acc += (d & m2) - (d & m1);
        }
        return acc;
    }

    /* sum of row[x] over x with lab[x] == g */
    __attribute__((target_clones("avx2", "default")))
    static long long hkpd_masked_sum(const long long *__restrict lab, const long long *__restrict row,
                                     long long g, Py_ssize_t n) {
        long long acc = 0;
        for (Py_ssize_t x = 0; x < n; ++x)
            acc += row[x] & -(long long)(lab[x] == g);
        return acc;
    }
    """
    unsigned long long hkpd_mulhi(unsigned long long z, unsigned long long n) nogil
    long long hkpd_cross(const long long* lab, const long long* da, const long long* db,
                         long long g1, long long g2, Py_ssize_t n) nogil
    long long hkpd_masked_sum(const long long* lab, const long long* row, long long g,
                              Py_ssize_t n) nogil


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    state[0] += 0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline Py_ssize_t _below(uint64_t* state, Py_ssize_t n) noexcept nogil:
    # multiply-shift bounded draw (Lemire); no division
    return <Py_ssize_t>hkpd_mulhi(_next(state), <uint64_t>n)


def splitmix_draws(uint64_t seed, Py_ssize_t count, Py_ssize_t bound):
    """First ``count`` draws of ``randbelow(bound)``; used to pin the stream."""
    cdef uint64_t state = seed
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t i
    for i in range(count):
        o[i] = _below(&state, bound)
    return out


# ---------------------------------------------------------------------------
# persistence

cdef void _symdiff(vector[int64_t]& a, vector[int64_t]& b, vector[int64_t]& out) noexcept nogil:
    out.clear()
    cdef size_t i = 0, j = 0
    cdef size_t na = a.size(), nb = b.size()
    while i < na and j < nb:
        if a[i] < b[j]:
            out.push_back(a[i])
            i += 1
        elif b[j] < a[i]:
            out.push_back(b[j])
            j += 1
        else:
            i += 1
            j += 1
    while i < na:
        out.push_back(a[i])
        i += 1
    while j < nb:
        out.push_back(b[j])
        j += 1


def rips_pairs(const int64_t[:, ::1] rank, const int64_t[::1] eu, const int64_t[::1] ev,
               bint with_h1):
    """Persistence pairs of a clique filtration of dimension <= 2.

    ``rank[i, j]`` is the dense rank of the edge value (-1 for an absent
    edge); ``eu, ev`` list the present edges in filtration order.

    Returns ``(h0_edges, h1_birth_edges, h1_death_keys, essential_edges)``.
    A death key encodes a triangle as ``value_rank * n**3 + lex_code`` where
    ``lex_code = a*n*n + b*n + c`` for ``a < b < c``.
    """
    cdef Py_ssize_t n = rank.shape[0]
    cdef Py_ssize_t E = eu.shape[0]
    cdef int64_t n3 = <int64_t>n * n * n
    cdef Py_ssize_t e, v, x, y, a, b, c
    cdef int64_t r, ruv, rwv, key

    parent = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] par = parent
    negative = np.zeros(E, dtype=np.uint8)
    cdef cnp.uint8_t[::1] neg = negative
    h0 = []
    for e in range(E):
        x = eu[e]
        while par[x] != x:
            par[x] = par[par[x]]
            x = par[x]
        y = ev[e]
        while par[y] != y:
            par[y] = par[par[y]]
            y = par[y]
        if x != y:
            if x < y:
                par[y] = x
            else:
                par[x] = y
            neg[e] = 1
            h0.append(e)
    if not with_h1:
        return (np.asarray(h0, dtype=np.int64), np.empty(0, np.int64),
                np.empty(0, np.int64), np.empty(0, np.int64))

    cdef vector[vector[int64_t]] reduced
    cdef vector[char] is_sorted
    cdef unordered_map[int64_t, Py_ssize_t] pivot_of
    cdef unordered_map[int64_t, Py_ssize_t].iterator it
    cdef vector[int64_t] col, tmp
    cdef vector[int64_t] births, deaths, essential
    cdef Py_ssize_t u, w, j
    cdef int64_t low, entry
    cdef vector[int64_t] empty_col
    cdef char col_sorted

    with nogil:
        for e in range(E - 1, -1, -1):
            if neg[e]:
                continue
            u = eu[e]
            w = ev[e]
            r = rank[u, w]
            col.clear()
            col_sorted = 0
            low = -1
            for v in range(n):
                if v == u or v == w:
                    continue
                ruv = rank[u, v]
                rwv = rank[w, v]
                if ruv < 0 or rwv < 0:
                    continue
                key = r
                if ruv > key:
                    key = ruv
                if rwv > key:
                    key = rwv
                if v < u:
                    a = v; b = u; c = w
                elif v < w:
                    a = u; b = v; c = w
                else:
                    a = u; b = w; c = v
                entry = key * n3 + (<int64_t>a * n + b) * n + c
                col.push_back(entry)
                if low < 0 or entry < low:
                    low = entry
            # columns stay unsorted until they take part in an addition
            if col.size() > 0 and pivot_of.find(low) != pivot_of.end():
                sort(col.begin(), col.end())
                col_sorted = 1
                while col.size() > 0:
                    it = pivot_of.find(col[0])
                    if it == pivot_of.end():
                        break
                    j = deref(it).second
                    if not is_sorted[j]:
                        sort(reduced[j].begin(), reduced[j].end())
                        is_sorted[j] = 1
                    _symdiff(col, reduced[j], tmp)
                    col.swap(tmp)
                if col.size() > 0:
                    low = col[0]
            if col.size() == 0:
                essential.push_back(e)
            else:
                pivot_of[low] = reduced.size()
                reduced.push_back(empty_col)
                reduced.back().swap(col)
                is_sorted.push_back(col_sorted)
                births.push_back(e)
                deaths.push_back(low)

    return (np.asarray(h0, dtype=np.int64), np.asarray(births, dtype=np.int64),
            np.asarray(deaths, dtype=np.int64), np.asarray(essential, dtype=np.int64))


# ---------------------------------------------------------------------------
# two-sample transposition chain

def two_sample_chain(const double[:, ::1] X, const int64_t[::1] labels,
                     Py_ssize_t n_steps, Py_ssize_t shuffle_period, uint64_t seed):
    """Random transpositions between two groups of pre-weighted coefficient rows.

    ``X`` rows are coefficient vectors already scaled by ``exp(-lambda*sigma/2)``
    so the statistic is the squared Euclidean norm of the mean difference.
    Returns ``(null, order, diff)``: the statistic after each step, the final
    arrangement (first ``m`` entries form group 0) and the final mean difference.
    """
    cdef Py_ssize_t N = X.shape[0], kappa = X.shape[1]
    cdef Py_ssize_t i, t, k, ii, jj, a, b, m = 0
    for i in range(N):
        if labels[i] == 0:
            m += 1
    cdef Py_ssize_t n = N - m
    order_arr = np.concatenate([np.flatnonzero(np.asarray(labels) == 0),
                                np.flatnonzero(np.asarray(labels) != 0)]).astype(np.int64)
    cdef int64_t[::1] order = order_arr
    null_arr = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] null = null_arr
    diff_arr = np.zeros(kappa, dtype=np.float64)
    cdef double[::1] d = diff_arr
    cdef uint64_t state = seed
    cdef double c = 1.0 / m + 1.0 / n
    cdef double s
    cdef int64_t tmp

    with nogil:
        _two_sample_means(X, order, m, d)
        for t in range(n_steps):
            if shuffle_period > 0 and t > 0 and t % shuffle_period == 0:
                for i in range(N - 1, 0, -1):
                    k = _below(&state, i + 1)
                    tmp = order[i]; order[i] = order[k]; order[k] = tmp
                _two_sample_means(X, order, m, d)
            ii = _below(&state, m)
            jj = m + _below(&state, n)
            a = order[ii]
            b = order[jj]
            s = 0.0
            for k in range(kappa):
                d[k] += c * (X[b, k] - X[a, k])
                s += d[k] * d[k]
            order[ii] = b
            order[jj] = a
            null[t] = s
    return null_arr, order_arr, diff_arr


cdef void _two_sample_means(const double[:, ::1] X, int64_t[::1] order, Py_ssize_t m,
                            double[::1] d) noexcept nogil:
    cdef Py_ssize_t N = X.shape[0], kappa = X.shape[1], i, k
    cdef double wm = 1.0 / m, wn = 1.0 / (N - m)
    for k in range(kappa):
        d[k] = 0.0
    for i in range(m):
        for k in range(kappa):
            d[k] += X[order[i], k] * wm
    for i in range(m, N):
        for k in range(kappa):
            d[k] -= X[order[i], k] * wn


# ---------------------------------------------------------------------------
# T-ANOVA chain on fixed-point distances

cdef int64_t _within(const int64_t[:, ::1] D, int64_t[::1] lab) noexcept nogil:
    # upper triangle only: row x from column x + 1 on
    cdef Py_ssize_t N = D.shape[0], x
    cdef int64_t acc = 0
    for x in range(N - 1):
        acc += hkpd_masked_sum(<const long long*>&lab[x + 1], <const long long*>&D[x, x + 1],
                               lab[x], N - x - 1)
    return acc


cdef inline double _ratio(int64_t tssb, int64_t tssw) noexcept nogil:
    if tssw == 0:
        return NAN if tssb == 0 else INFINITY
    return <double>tssb / <double>tssw


cdef void _blocks(int64_t[::1] lab, int64_t[::1] start, int64_t[::1] members,
                  int64_t[::1] pos, int64_t[::1] fill) noexcept nogil:
    # members grouped by label, in index order within each block
    cdef Py_ssize_t N = lab.shape[0], x, g
    for g in range(start.shape[0]):
        fill[g] = start[g]
    for x in range(N):
        g = lab[x]
        members[fill[g]] = x
        pos[x] = fill[g]
        fill[g] += 1


def tanova_chain(const int64_t[:, ::1] D, const int64_t[::1] labels, Py_ssize_t K,
                 Py_ssize_t n_steps, Py_ssize_t shuffle_period, uint64_t seed):
    """Transposition walk for the between/within ratio on integer distances.

    An ordered pair of distinct groups is drawn with weight ``n_i n_j``, then
    one member of each uniformly. Each step reads the two distance rows of
    the exchanged members and nothing else. Returns
    ``(null, labels, tssb, tssw, total)``.
    """
    cdef Py_ssize_t N = D.shape[0]
    lab_arr = np.array(labels, dtype=np.int64)
    cdef int64_t[::1] lab = lab_arr
    sizes_arr = np.bincount(lab_arr, minlength=K).astype(np.int64)
    cdef int64_t[::1] sizes = sizes_arr
    start_arr = np.concatenate([[0], np.cumsum(sizes_arr)[:-1]]).astype(np.int64)
    cdef int64_t[::1] start = start_arr
    cdef int64_t[::1] members = np.empty(N, dtype=np.int64)
    cdef int64_t[::1] pos = np.empty(N, dtype=np.int64)
    cdef int64_t[::1] fill = np.empty(K, dtype=np.int64)
    pi_arr, pj_arr = np.nonzero(~np.eye(K, dtype=bool))
    cdef int64_t[::1] pi = pi_arr.astype(np.int64)
    cdef int64_t[::1] pj = pj_arr.astype(np.int64)
    cdef int64_t[::1] cw = np.cumsum(sizes_arr[pi_arr] * sizes_arr[pj_arr]).astype(np.int64)
    cdef Py_ssize_t n_pairs = cw.shape[0]
    cdef int64_t W = cw[n_pairs - 1]
    null_arr = np.empty(n_steps, dtype=np.float64)
    cdef double[::1] null = null_arr
    cdef uint64_t state = seed
    cdef Py_ssize_t t, x, i, k, a, b, p, r
    cdef int64_t g1, g2, dw, tmp
    cdef int64_t total = 0, tssw, tssb

    with nogil:
        for x in range(N):
            for i in range(x + 1, N):
                total += D[x, i]
        _blocks(lab, start, members, pos, fill)
        tssw = _within(D, lab)
        tssb = total - tssw
        for t in range(n_steps):
            if shuffle_period > 0 and t > 0 and t % shuffle_period == 0:
                for i in range(N - 1, 0, -1):
                    k = _below(&state, i + 1)
                    tmp = lab[i]; lab[i] = lab[k]; lab[k] = tmp
                _blocks(lab, start, members, pos, fill)
                tssw = _within(D, lab)
                tssb = total - tssw
            r = _below(&state, W)
            p = 0
            while cw[p] <= r:
                p += 1
            g1 = pi[p]
            g2 = pj[p]
            a = members[start[g1] + _below(&state, sizes[g1])]
            b = members[start[g2] + _below(&state, sizes[g2])]
            # a joins g2, b joins g1; D[a,b] is counted once in each signed row sum
            dw = hkpd_cross(<const long long*>&lab[0], <const long long*>&D[a, 0],
                            <const long long*>&D[b, 0], g1, g2, N) - 2 * D[a, b]
            tssw += dw
            tssb -= dw
            lab[a] = g2
            lab[b] = g1
            members[pos[a]] = b
            members[pos[b]] = a
            tmp = pos[a]; pos[a] = pos[b]; pos[b] = tmp
            null[t] = _ratio(tssb, tssw)
    return null_arr, lab_arr, int(tssb), int(tssw), int(total)


# ---------------------------------------------------------------------------
# PERMANOVA full relabelling

def permanova_chain(const double[:, ::1] D, const int64_t[::1] labels, Py_ssize_t K,
                    Py_ssize_t n_perms, uint64_t seed):
    """Pseudo-F under ``n_perms`` independent full shuffles of the labels."""
    cdef Py_ssize_t N = D.shape[0]
    lab_arr = np.array(labels, dtype=np.int64)
    cdef int64_t[::1] lab = lab_arr
    sizes_arr = np.bincount(lab_arr, minlength=K).astype(np.float64)
    cdef double[::1] sizes = sizes_arr
    W_arr = np.zeros(K, dtype=np.float64)
    cdef double[::1] W = W_arr
    null_arr = np.empty(n_perms, dtype=np.float64)
    cdef double[::1] null = null_arr
    cdef uint64_t state = seed
    cdef Py_ssize_t t, i, j, k, g
    cdef int64_t tmp, li
    cdef double sst = 0.0, ssw
    with nogil:
        for i in range(N):
            for j in range(i + 1, N):
                sst += D[i, j]
        sst /= N
        for t in range(n_perms):
            for i in range(N - 1, 0, -1):
                k = _below(&state, i + 1)
                tmp = lab[i]; lab[i] = lab[k]; lab[k] = tmp
            for g in range(K):
                W[g] = 0.0
            for i in range(N):
                li = lab[i]
                for j in range(i + 1, N):
                    if lab[j] == li:
                        W[li] += D[i, j]
            ssw = 0.0
            for g in range(K):
                ssw += W[g] / sizes[g]
            if ssw == 0.0:
                null[t] = NAN if sst - ssw == 0.0 else INFINITY
            else:
                null[t] = ((sst - ssw) / (K - 1)) / (ssw / (N - K))
    return null_arr
