# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled combinatorial kernels.

Each function mirrors the pure-Python version in ``_kernels_py`` exactly;
both are exercised by the test suite and compared in
``benchmarks/bench_kernels.py``.
"""
import numpy as np
cimport numpy as cnp

ctypedef unsigned long long u64

cdef extern from *:
    int __builtin_clzll(unsigned long long) nogil
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _connected(u64 mask, int n_edges, int* ea, int* eb, int k) noexcept nogil:
    cdef unsigned int adj[32]
    cdef int v, e
    cdef unsigned int comp, new, full
    for v in range(k):
        adj[v] = 0
    for e in range(n_edges):
        if (mask >> e) & 1:
            adj[ea[e]] |= (1u << eb[e])
            adj[eb[e]] |= (1u << ea[e])
    full = (1u << k) - 1u
    comp = 1u
    while True:
        new = comp
        for v in range(k):
            if (comp >> v) & 1:
                new |= adj[v]
        if new == comp:
            break
        comp = new
    return comp == full


def connected_graph_sum(cnp.ndarray[cnp.float64_t, ndim=2] xi):
    """Sum over connected graphs on k labelled vertices of the edge product of xi."""
    cdef int k = xi.shape[0]
    if k == 1:
        return 1.0
    cdef int ea[64]
    cdef int eb[64]
    cdef double w[64]
    cdef int n_edges = 0
    cdef int i, j, e
    for i in range(k):
        for j in range(i + 1, k):
            if xi[i, j] != 0.0:
                ea[n_edges] = i
                eb[n_edges] = j
                w[n_edges] = xi[i, j]
                n_edges += 1
    cdef u64 mask, n_masks = (<u64>1) << n_edges
    cdef double total = 0.0, prod
    with nogil:
        for mask in range(n_masks):
            prod = 1.0
            for e in range(n_edges):
                if (mask >> e) & 1:
                    prod *= w[e]
            if _connected(mask, n_edges, ea, eb, k):
                total += prod
    return total


def connected_sum_recursive(cnp.ndarray[cnp.float64_t, ndim=2] xi):
    """Same quantity as ``connected_graph_sum`` via the subset recursion, O(3^k)."""
    cdef int k = xi.shape[0]
    cdef u64 full = ((<u64>1) << k) - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] G = np.ones(full + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] C = np.zeros(full + 1)
    cdef u64 S, low, rest, sub, top_bit
    cdef int top, j
    cdef double g, acc
    for S in range(1, full + 1):
        top = 63 - __builtin_clzll(S)
        top_bit = (<u64>1) << top
        g = G[S ^ top_bit]
        for j in range(top):
            if (S >> j) & 1:
                g *= 1.0 + xi[top, j]
        G[S] = g
    for S in range(1, full + 1):
        low = S & (~S + 1)
        rest = S ^ low
        acc = G[S]
        # proper subsets T of S containing the lowest element
        sub = (rest - 1) & rest
        if rest != 0:
            while True:
                acc -= C[low | sub] * G[rest ^ sub]
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        C[S] = acc
    return C[full]


def count_labeled_trees(int n_vertices):
    """Count spanning trees of the complete graph by exhaustive edge-subset search."""
    if n_vertices <= 2:
        return 1
    cdef int ea[64]
    cdef int eb[64]
    cdef int n_edges = 0
    cdef int i, j
    for i in range(n_vertices):
        for j in range(i + 1, n_vertices):
            ea[n_edges] = i
            eb[n_edges] = j
            n_edges += 1
    cdef u64 mask, n_masks = (<u64>1) << n_edges
    cdef long long count = 0
    cdef int need = n_vertices - 1
    with nogil:
        for mask in range(n_masks):
            if __builtin_popcountll(mask) != need:
                continue
            if _connected(mask, n_edges, ea, eb, n_vertices):
                count += 1
    return count


def kp_neighbor_sums(cnp.ndarray[cnp.int64_t, ndim=1] kind,
                     cnp.ndarray[cnp.int64_t, ndim=1] lo,
                     cnp.ndarray[cnp.int64_t, ndim=1] hi,
                     cnp.ndarray[cnp.float64_t, ndim=1] weight):
    """For every element A_i, the sum of weights of elements A_j adjacent to it.

    kind 0 is an edge with endpoints (lo, hi); kind 1 is a block [lo, hi].
    Edge-edge pairs count at distance <= 1, edge-block pairs at distance 1,
    block-block pairs never.
    """
    cdef Py_ssize_t m = kind.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(m)
    cdef Py_ssize_t a, b
    cdef long long d, d1, d2, x
    cdef double acc
    for a in range(m):
        acc = 0.0
        for b in range(m):
            if kind[a] == 1 and kind[b] == 1:
                continue
            if kind[a] == 0 and kind[b] == 0:
                d = _absll(lo[a] - lo[b])
                d = _minll(d, _absll(lo[a] - hi[b]))
                d = _minll(d, _absll(hi[a] - lo[b]))
                d = _minll(d, _absll(hi[a] - hi[b]))
                if d <= 1:
                    acc += weight[b]
            else:
                if kind[a] == 0:
                    d1 = _pt_interval(lo[a], lo[b], hi[b])
                    d2 = _pt_interval(hi[a], lo[b], hi[b])
                else:
                    d1 = _pt_interval(lo[b], lo[a], hi[a])
                    d2 = _pt_interval(hi[b], lo[a], hi[a])
                if _minll(d1, d2) == 1:
                    acc += weight[b]
        out[a] = acc
    return out


cdef inline long long _absll(long long x) noexcept nogil:
    return -x if x < 0 else x


cdef inline long long _minll(long long x, long long y) noexcept nogil:
    return x if x < y else y


cdef inline long long _pt_interval(long long x, long long c, long long d) noexcept nogil:
    if x < c:
        return c - x
    if x > d:
        return x - d
    return 0
