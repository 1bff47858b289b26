"""Van Hove grids, polymers on the grid, weight bounds and cluster expansions.

Vertices are grid indices 0..N decorated ``B`` (carrying correlation edges) or
``R`` (a remainder factor).  For the Kotecky-Preiss majorant a polymer is
viewed as a set of *atoms*: its edges and its maximal runs of consecutive
R-vertices.  The Lemma-level weight bound factorizes over atoms, and the
number of connected atom sets is controlled by labeled spanning trees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import lambertw

from . import kernels
from .errors import AssumptionViolation, GuardError, ParameterError
from .model import CouplingSchedule, FormFactor, correlation_on_grid, coupling_at, decay_exponent_estimate, l1_norm_f

MAX_GRID_TIME = 1e300


# ----------------------------------------------------------------------------
# grid
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class VanHoveGrid:
    times: np.ndarray
    sched: CouplingSchedule
    tau: float

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times)

    def lam(self) -> np.ndarray:
        return np.asarray(coupling_at(self.sched, self.times), dtype=float)

    def box(self, i: int) -> tuple[float, float]:
        return float(self.times[i]), float(self.times[i + 1])


def van_hove_grid(sched: CouplingSchedule, tau: float, N: int) -> VanHoveGrid:
    """t_0 = 0, t_{i+1} = t_i + tau lambda(t_i)^{-2}."""
    if tau <= 0 or N < 1:
        raise ParameterError("need tau > 0 and N >= 1")
    t = np.empty(N + 1)
    t[0] = 0.0
    for i in range(N):
        t[i + 1] = t[i] + tau / float(coupling_at(sched, t[i])) ** 2
        if not math.isfinite(t[i + 1]) or t[i + 1] > MAX_GRID_TIME:
            raise ParameterError(f"grid horizon overflows at step {i + 1}")
    t.setflags(write=False)
    return VanHoveGrid(t, sched, float(tau))


# ----------------------------------------------------------------------------
# edge weights
# ----------------------------------------------------------------------------

def _graded_rule(a: float, b: float, near: float, order: int = 16, first: float = 0.25):
    """GL panels on [a, b] whose widths double away from the point ``near``."""
    L = b - a
    edges = [0.0]
    w = first
    while edges[-1] + w < L:
        edges.append(edges[-1] + w)
        w *= 2
    edges.append(L)
    d = np.asarray(edges)
    x, wt = leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(d[:-1], d[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * wt)
    s = np.concatenate(nodes)
    ws = np.concatenate(weights)
    if near >= b:
        return b - s, ws
    return a + s, ws


def eta_integral(ff: FormFactor, lam: Callable, box_u: tuple[float, float],
                 box_v: tuple[float, float], g_norm: float = 1.0, order: int = 16) -> float:
    """4 ||G||^2 int_box_u du int_box_v dv |f(v-u)| lambda(u) lambda(v)."""
    (a, b), (c, d) = box_u, box_v
    if g_norm == 0.0:
        return 0.0
    # grade each box toward the other one
    u, wu = _graded_rule(a, b, c if c >= b else a, order)
    v, wv = _graded_rule(c, d, b if c >= b else c, order)
    absf = np.abs(correlation_on_grid(ff, (v[None, :] - u[:, None]).ravel())).reshape(u.size, v.size)
    lu = np.asarray(lam(u), dtype=float)
    lv = np.asarray(lam(v), dtype=float)
    return float(4 * g_norm ** 2 * (wu * lu) @ absf @ (wv * lv))


def edge_weight_eta(grid: VanHoveGrid, ff: FormFactor, sched: CouplingSchedule, i: int, j: int,
                    g_norm: float = 1.0) -> float:
    """eta((i,B);(j,B)) over the grid boxes [t_i, t_{i+1}] x [t_j, t_{j+1}]."""
    if i == j:
        raise ParameterError("edge needs two distinct vertices")
    if max(i, j) >= grid.N:
        raise ParameterError("box index beyond the grid; build the grid one step longer")
    lam = lambda x: coupling_at(sched, x)
    return eta_integral(ff, lam, grid.box(min(i, j)), grid.box(max(i, j)), g_norm)


def eta_matrix(grid: VanHoveGrid, ff: FormFactor, g_norm: float = 1.0, n_vertices: int | None = None) -> np.ndarray:
    """Symmetric table of eta for vertices 0..n_vertices-1 (default: all boxes)."""
    m = grid.N if n_vertices is None else n_vertices
    E = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            E[i, j] = E[j, i] = edge_weight_eta(grid, ff, grid.sched, i, j, g_norm)
    return E


@dataclass
class SummabilityResult:
    plain: float
    weighted: float
    tail_bound: float
    alpha: float


def summability_check(grid: VanHoveGrid, ff: FormFactor, sched: CouplingSchedule, i: int,
                      beta_exp: float, g_norm: float = 1.0, alpha: float | None = None) -> SummabilityResult:
    """sum_{j != i} (1+|i-j|)^beta eta(i,j) / (lambda(t_i) lambda(t_j)), beta = 0 and beta_exp."""
    alpha = decay_exponent_estimate(ff) if alpha is None else alpha
    if alpha <= 2:
        raise AssumptionViolation(f"decay exponent {alpha:.3g} <= 2: summability criterion inapplicable")
    if not 0 < beta_exp < alpha - 2:
        raise ParameterError(f"beta_exp must lie in (0, {alpha - 2:.3g})")
    lam_t = grid.lam()
    plain = weighted = 0.0
    for j in range(grid.N):
        if j == i:
            continue
        term = edge_weight_eta(grid, ff, sched, i, j, g_norm) / (lam_t[i] * lam_t[j])
        plain += term
        weighted += (1 + abs(i - j)) ** beta_exp * term
    # boxes past the grid end: |f| integrated beyond the last grid time
    gap = grid.times[-1] - grid.times[i + 1]
    tail_f, _ = integrate.quad(lambda s: abs(complex(correlation_on_grid(ff, np.array([s]))[0])),
                               gap, np.inf, limit=200)
    box_i = grid.times[i + 1] - grid.times[i]
    tail = 4 * g_norm ** 2 * box_i * tail_f
    return SummabilityResult(plain, weighted, tail, alpha)


# ----------------------------------------------------------------------------
# polymers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Polymer:
    """Decorated vertices ((index, 'B'|'R'), ...) and B-B edges, both sorted."""

    vertices: tuple[tuple[int, str], ...]
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        vs = tuple(sorted(self.vertices))
        es = tuple(sorted(tuple(sorted(e)) for e in self.edges))
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", es)
        idx = [v for v, _ in vs]
        if len(set(idx)) != len(idx):
            raise ParameterError("vertex indices must be distinct")
        deco = dict(vs)
        for a, b in es:
            if a == b or deco.get(a) != "B" or deco.get(b) != "B":
                raise ParameterError("edges must join two distinct B-vertices")
        deg = {v: 0 for v, d in vs if d == "B"}
        for a, b in es:
            deg[a] += 1
            deg[b] += 1
        if any(x == 0 for x in deg.values()):
            raise ParameterError("every B-vertex needs an edge")
        if not _fused(vs, es):
            raise ParameterError("components are not fused at distance 1")

    @property
    def B(self) -> list[int]:
        return [v for v, d in self.vertices if d == "B"]

    @property
    def R(self) -> list[int]:
        return [v for v, d in self.vertices if d == "R"]

    @property
    def indices(self) -> list[int]:
        return [v for v, _ in self.vertices]

    def blocks(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive vertex indices, U(X)."""
        return _runs(self.indices)

    def r_blocks(self) -> list[tuple[int, int]]:
        return _runs(self.R)

    @property
    def diameter(self) -> int:
        idx = self.indices
        return max(idx) - min(idx)

    def key(self) -> tuple:
        return (self.vertices, self.edges)

    def dist(self, other: "Polymer") -> int:
        return min(abs(a - b) for a in self.indices for b in other.indices)


def _runs(idx: Iterable[int]) -> list[tuple[int, int]]:
    idx = sorted(idx)
    out = []
    for v in idx:
        if out and v == out[-1][1] + 1:
            out[-1] = (out[-1][0], v)
        else:
            out.append((v, v))
    return out


def _fused(vs, es) -> bool:
    """Components (B-graph components and single R-vertices) connected at distance <= 1."""
    idx = [v for v, _ in vs]
    parent = {v: v for v in idx}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in es:
        parent[find(a)] = find(b)
    for a in idx:
        for b in idx:
            if abs(a - b) == 1:
                parent[find(a)] = find(b)
    return len({find(v) for v in idx}) <= 1


def enumerate_polymers(N: int, max_vertices: int, work_limit: int = 5_000_000) -> list[Polymer]:
    """All polymers on vertices 0..N with at most ``max_vertices`` vertices."""
    if N > 14 or max_vertices > 6:
        raise GuardError("enumeration guard: N <= 14 and max_vertices <= 6")
    if N < 0 or max_vertices < 1:
        raise ParameterError("need N >= 0 and max_vertices >= 1")
    work = sum(math.comb(N + 1, m) * sum(math.comb(m, b) * 2 ** math.comb(b, 2) for b in range(m + 1))
               for m in range(1, max_vertices + 1))
    if work > work_limit:
        raise GuardError(f"enumeration would visit {work} configurations")
    out: dict[tuple, Polymer] = {}
    for m in range(1, max_vertices + 1):
        for idx in combinations(range(N + 1), m):
            for deco in product("BR", repeat=m):
                Bs = [v for v, d in zip(idx, deco) if d == "B"]
                if len(Bs) == 1:
                    continue
                pairs = list(combinations(Bs, 2))
                for mask in range(1 << len(pairs)):
                    es = tuple(p for e, p in enumerate(pairs) if (mask >> e) & 1)
                    touched = {x for e in es for x in e}
                    if len(touched) != len(Bs):
                        continue
                    vs = tuple(zip(idx, deco))
                    if not _fused(vs, es):
                        continue
                    X = Polymer(vs, es)
                    out.setdefault(X.key(), X)
    return list(out.values())


# ----------------------------------------------------------------------------
# weights and the KP majorant
# ----------------------------------------------------------------------------

@dataclass
class WeightLedger:
    """eta per edge, the exponent c = 4 tau ||f|| ||G||^2 and K = 2 e^{c + 1}."""

    eta: np.ndarray
    c: float
    eps0: float
    tau: float

    @property
    def K(self) -> float:
        return 2.0 * math.exp(self.c + 1.0)

    def eta_K(self, i: int, j: int) -> float:
        return self.K ** 2 * float(self.eta[i, j])

    def block_weight(self, length: int) -> float:
        """(e eps0)^{|A|} for a run A of R-vertices."""
        return (math.e * self.eps0) ** length

    @classmethod
    def build(cls, grid: VanHoveGrid, ff: FormFactor, g_norm: float, eps0: float,
              n_vertices: int | None = None, l1: float | None = None) -> "WeightLedger":
        l1 = l1_norm_f(ff) if l1 is None else l1
        E = eta_matrix(grid, ff, g_norm, n_vertices)
        return cls(E, 4 * grid.tau * l1 * g_norm ** 2, float(eps0), grid.tau)


def polymer_weight_bound(X: Polymer, ledger: WeightLedger, eps0: float | None = None) -> float:
    """2^{|U(X)|} e^{c|B(X)|} prod_E eta(E) eps0^{|R(X)|}."""
    eps0 = ledger.eps0 if eps0 is None else eps0
    val = 2.0 ** len(X.blocks()) * math.exp(ledger.c * len(X.B)) * eps0 ** len(X.R)
    for a, b in X.edges:
        val *= float(ledger.eta[a, b])
    return val


def tree_function(q: float) -> float:
    """T(q) = sum n^{n-1} q^n / n!, the solution of T = q e^T (q <= 1/e)."""
    if q > 1 / math.e:
        raise ParameterError("tree series diverges for q > 1/e")
    return float(-lambertw(-q).real)


def tree_series(q: float, n_terms: int) -> float:
    """Partial sum of sum_{n>=1} (n+1)^{n-1} q^n / n!  (-> e^{T(q)} - 1)."""
    return float(sum((n + 1) ** (n - 1) * q ** n / math.factorial(n) for n in range(1, n_terms + 1)))


@dataclass
class KPResult:
    q: float
    q_edge: float
    q_block: float
    anchor_sums: np.ndarray
    majorant: np.ndarray
    lhs_sup: float
    passed: bool
    reason: str = ""
    q_spec_shape: float = 0.0


def _atoms(ledger: WeightLedger, n_vertices: int):
    kinds, lo, hi, w = [], [], [], []
    for i in range(n_vertices):
        for j in range(i + 1, n_vertices):
            kinds.append(0)
            lo.append(i)
            hi.append(j)
            w.append(ledger.eta_K(i, j))
    for a in range(n_vertices):
        for b in range(a, n_vertices):
            kinds.append(1)
            lo.append(a)
            hi.append(b)
            w.append(2.0 * ledger.block_weight(b - a + 1))
    return (np.array(kinds, dtype=np.int64), np.array(lo, dtype=np.int64),
            np.array(hi, dtype=np.int64), np.array(w, dtype=float))


def kp_criterion_check(grid: VanHoveGrid, ledger: WeightLedger, eps0: float | None = None,
                       tau: float | None = None) -> KPResult:
    """Per-vertex majorant of sum_{X' near v} |p(X')| e^{|V(X')|}.

    Atom weights: K^2 eta(E) for edges, 2 (e eps0)^{|A|} for R-runs.  With
    D = sup over atoms of the neighbour-weight sum and A_v the weight of atoms
    within distance 1 of v, the majorant is A_v e^{T(D)}, and passing requires
    D < 1/e and A_v e^{T(D)} <= 1 for every v.
    """
    if eps0 is not None and eps0 != ledger.eps0:
        ledger = WeightLedger(ledger.eta, ledger.c, float(eps0), ledger.tau)
    m = ledger.eta.shape[0]
    kind, lo, hi, w = _atoms(ledger, m)
    nb = kernels.kp_neighbor_sums(kind, lo, hi, w)
    is_edge = kind == 0
    bp = _block_part(kind, lo, hi, w)
    q_edge = float((nb - bp).max())
    q_block = float(bp.max())
    D = float(nb.max())
    x = math.e * ledger.eps0
    shape = (4 * x / (1 - x)) if x < 1 else math.inf
    anchor = np.zeros(m)
    for v in range(m):
        d_edge = np.minimum(np.abs(lo - v), np.abs(hi - v))
        d_block = np.where(v < lo, lo - v, np.where(v > hi, v - hi, 0))
        near = np.where(is_edge, d_edge <= 1, d_block <= 1)
        anchor[v] = w[near].sum()
    if D >= 1 / math.e:
        majorant = np.full(m, math.inf)
        return KPResult(D, q_edge, q_block, anchor, majorant, math.inf, False,
                        f"divergent majorant: neighbour sum q = {D:.4g} >= 1/e", shape)
    majorant = anchor * math.exp(tree_function(D))
    sup = float(majorant.max())
    ok = sup <= 1.0
    reason = "" if ok else f"per-vertex majorant {sup:.4g} > 1"
    return KPResult(D, q_edge, q_block, anchor, majorant, sup, ok, reason, shape)


def _block_part(kind, lo, hi, w) -> np.ndarray:
    """Neighbour sums restricted to R-run atoms."""
    wb = np.where(kind == 1, w, 0.0)
    return kernels.kp_neighbor_sums(kind, lo, hi, wb)


def brute_force_kp_lhs(polymers: Sequence[Polymer], ledger: WeightLedger, v: int) -> float:
    """sum over enumerated X' with dist(X', {v}) <= 1 of bound(X') e^{|V(X')|}."""
    total = 0.0
    for X in polymers:
        if min(abs(a - v) for a in X.indices) <= 1:
            total += polymer_weight_bound(X, ledger) * math.exp(len(X.vertices))
    return total


def boundary_weight(Pi: np.ndarray, O: np.ndarray) -> complex:
    """p({(N,R)}) = <Pi(t_{N-1})|O> = Tr(Pi^dagger O)."""
    return complex(np.vdot(Pi, O))


# ----------------------------------------------------------------------------
# Ursell functions and the cluster identity
# ----------------------------------------------------------------------------

def default_xi(x, y) -> float:
    """-1 if the two polymers are within distance 1, else 0."""
    return -1.0 if x.dist(y) <= 1 else 0.0


def _xi_matrix(xi, items: Sequence) -> np.ndarray:
    k = len(items)
    if callable(xi):
        M = np.zeros((k, k))
        for a in range(k):
            for b in range(a + 1, k):
                M[a, b] = M[b, a] = xi(items[a], items[b])
        return M
    return np.asarray(xi, dtype=float)


def ursell(xi, polymers: Sequence | None = None, method: str = "graphs") -> float:
    """phi^T(x_1..x_k) = sum over connected graphs g on k vertices of prod_{(i,j) in g} xi(x_i, x_j).

    ``xi`` is a callable on polymer pairs (with ``polymers`` given) or a k x k matrix.
    """
    M = _xi_matrix(xi, polymers) if polymers is not None else np.asarray(xi, dtype=float)
    k = M.shape[0]
    if method == "graphs":
        if k > 7:
            raise GuardError("connected-graph enumeration is limited to k <= 7")
        return float(kernels.connected_graph_sum(np.ascontiguousarray(M, dtype=float)))
    if method == "recursive":
        return float(kernels.connected_sum_recursive(np.ascontiguousarray(M, dtype=float)))
    raise ParameterError(f"unknown method {method!r}")


@dataclass
class ClusterCheck:
    Z_direct: float
    log_Z: float
    partial_sums: np.ndarray
    tail_bounds: np.ndarray
    kp_holds: bool
    radius: float

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.partial_sums - self.log_Z)


def _compositions(P: int, n: int):
    """Multisets of size n from P items as count vectors."""
    if P == 1:
        yield (n,)
        return
    for c in range(n + 1):
        for rest in _compositions(P - 1, n - c):
            yield (c,) + rest


def _kp_holds(W: np.ndarray, xi: np.ndarray, a: np.ndarray, scale: float) -> bool:
    # sum_{x'} scale |w(x')| |xi(x,x')| e^{a(x')} <= a(x), including x' = x
    lhs = (np.abs(xi) * (scale * np.abs(W) * np.exp(a))[None, :]).sum(axis=1)
    return bool(np.all(lhs <= a * (1 + 1e-12)))


def _kp_radius(W, X, a) -> float:
    if not _kp_holds(W, X, a, 1.0):
        return 0.0
    lo, hi = 1.0, 1e6
    for _ in range(100):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if _kp_holds(W, X, a, mid) else (lo, mid)
    return lo


def cluster_identity_check(weights: Sequence[float], xi: np.ndarray, a: Sequence[float] | None = None,
                           n_max: int = 8) -> ClusterCheck:
    """Compare ln Z (direct sum over compatible families) with the Ursell series.

    ``xi`` is the P x P compatibility matrix with xi[x,x] = -1.  The tail bound
    uses the largest scale R for which the KP condition still holds for the
    weights R|w|: the n-th series coefficient is at most B_R / R^n.
    """
    W = np.asarray(weights, dtype=float)
    X = np.asarray(xi, dtype=float)
    P = W.size
    if X.shape != (P, P):
        raise ParameterError("xi must be P x P")
    if np.any(np.diag(X) != -1):
        raise ParameterError("self-overlap xi[x,x] must be -1")
    # direct: sum over mutually compatible subsets
    Z = 0.0
    for mask in range(1 << P):
        members = [i for i in range(P) if (mask >> i) & 1]
        if all(X[i, j] == 0 for i, j in combinations(members, 2)):
            Z += math.prod(W[i] for i in members)
    partial = []
    acc = 0.0
    for n in range(1, n_max + 1):
        term = 0.0
        for counts in _compositions(P, n):
            items = [i for i, c in enumerate(counts) for _ in range(c)]
            sub = X[np.ix_(items, items)].copy()
            np.fill_diagonal(sub, 0.0)
            phi = kernels.connected_sum_recursive(np.ascontiguousarray(sub))
            term += phi * math.prod(W[i] ** c / math.factorial(c) for i, c in enumerate(counts))
        acc += term
        partial.append(acc)
    if a is None:
        # a(x) = alpha, with alpha chosen to maximize the KP radius
        best = max((_kp_radius(W, X, np.full(P, al)), al) for al in np.linspace(0.05, 3.0, 60))
        a = np.full(P, best[1])
    a = np.asarray(a, dtype=float)
    holds = _kp_holds(W, X, a, 1.0)
    radius = _kp_radius(W, X, a) if holds else 1.0
    if holds and radius > 1.0:
        B = float(np.sum(radius * np.abs(W) * np.exp(a)))
        tails = np.array([B * radius ** -(n + 1) / (1 - 1 / radius) for n in range(1, n_max + 1)])
    else:
        tails = np.full(n_max, math.inf)
    return ClusterCheck(Z, math.log(Z), np.array(partial), tails, holds, radius)


# ----------------------------------------------------------------------------
# remainder series
# ----------------------------------------------------------------------------

@dataclass
class RemainderSeries:
    sigma: np.ndarray
    eps: float
    vanishing: bool
    monotone_from: int | None
    limit_estimate: float


def remainder_decay_demo(eps0: float, v: Sequence[float] | np.ndarray, tol: float = 1e-2,
                         burn_in: int = 0, direct_eps: bool = False) -> RemainderSeries:
    """Sigma_N = sum_{k=1}^N eps^k v_{N-k} with eps = e eps0 (or eps0 itself if direct_eps).

    Uses Sigma_N = eps (v_{N-1} + Sigma_{N-1}).  ``vanishing`` is set when the
    sequence is nonincreasing after ``burn_in`` and ends below ``tol``.
    """
    eps = eps0 if direct_eps else math.e * eps0
    if not 0 <= eps < 1:
        raise ParameterError(f"eps = {eps:.4g} must lie in [0, 1)")
    v = np.asarray(v, dtype=float)
    sigma = np.zeros(v.size + 1)
    for N in range(1, v.size + 1):
        sigma[N] = eps * (v[N - 1] + sigma[N - 1])
    tail = sigma[max(burn_in, 1):]
    d = np.diff(tail)
    mono = bool(np.all(d <= 1e-15 * np.maximum(1.0, np.abs(tail[:-1]))))
    start = None
    if mono:
        start = max(burn_in, 1)
    vanishing = mono and sigma[-1] <= tol
    limit = eps / (1 - eps) * float(v[-1]) if v.size else 0.0
    return RemainderSeries(sigma, eps, vanishing, start, limit)


def class2b_sequence(grid: VanHoveGrid, mu: float) -> np.ndarray:
    """v_n = lambda(t_n)^mu on the grid."""
    return grid.lam() ** mu
