"""Pure-Python versions of the combinatorial kernels.

Same algorithms and signatures as the compiled module ``_kernels``.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np


def _connected(mask: int, edges: list[tuple[int, int]], k: int) -> bool:
    adj = [0] * k
    for e, (a, b) in enumerate(edges):
        if (mask >> e) & 1:
            adj[a] |= 1 << b
            adj[b] |= 1 << a
    full = (1 << k) - 1
    comp = 1
    while True:
        new = comp
        v = comp
        idx = 0
        while v:
            if v & 1:
                new |= adj[idx]
            v >>= 1
            idx += 1
        if new == comp:
            return comp == full
        comp = new


def connected_graph_sum(xi: np.ndarray) -> float:
    k = xi.shape[0]
    if k == 1:
        return 1.0
    edges = [(i, j) for i in range(k) for j in range(i + 1, k) if xi[i, j] != 0.0]
    w = [float(xi[i, j]) for i, j in edges]
    total = 0.0
    for mask in range(1 << len(edges)):
        prod = 1.0
        for e in range(len(edges)):
            if (mask >> e) & 1:
                prod *= w[e]
        if _connected(mask, edges, k):
            total += prod
    return total


def connected_sum_recursive(xi: np.ndarray) -> float:
    k = xi.shape[0]
    full = (1 << k) - 1
    G = np.ones(full + 1)
    C = np.zeros(full + 1)
    for S in range(1, full + 1):
        top = S.bit_length() - 1
        g = G[S ^ (1 << top)]
        for j in range(top):
            if (S >> j) & 1:
                g *= 1.0 + xi[top, j]
        G[S] = g
    for S in range(1, full + 1):
        low = S & -S
        rest = S ^ low
        acc = G[S]
        if rest:
            sub = (rest - 1) & rest
            while True:
                acc -= C[low | sub] * G[rest ^ sub]
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        C[S] = acc
    return float(C[full])


def count_labeled_trees(n_vertices: int) -> int:
    if n_vertices <= 2:
        return 1
    edges = [(i, j) for i in range(n_vertices) for j in range(i + 1, n_vertices)]
    count = 0
    for chosen in combinations(range(len(edges)), n_vertices - 1):
        mask = 0
        for e in chosen:
            mask |= 1 << e
        if _connected(mask, edges, n_vertices):
            count += 1
    return count


def _pt_interval(x, c, d):
    return np.where(x < c, c - x, np.where(x > d, x - d, 0))


def kp_neighbor_sums(kind: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                     weight: np.ndarray) -> np.ndarray:
    kind = np.asarray(kind)
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    weight = np.asarray(weight, dtype=float)
    is_edge = kind == 0
    out = np.zeros(len(kind))
    for a in range(len(kind)):
        if is_edge[a]:
            dee = np.minimum.reduce([np.abs(lo[a] - lo), np.abs(lo[a] - hi),
                                     np.abs(hi[a] - lo), np.abs(hi[a] - hi)])
            deb = np.minimum(_pt_interval(lo[a], lo, hi), _pt_interval(hi[a], lo, hi))
            hit = np.where(is_edge, dee <= 1, deb == 1)
        else:
            dbe = np.minimum(_pt_interval(lo, lo[a], hi[a]), _pt_interval(hi, lo[a], hi[a]))
            hit = is_edge & (dbe == 1)
        out[a] = weight[hit].sum()
    return out
