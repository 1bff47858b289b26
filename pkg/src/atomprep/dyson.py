"""Truncated Dyson expansion of the reduced atomic map and the Riesz splitting.

Interaction picture: with G(x) = e^{i H_S x} G e^{-i H_S x} and the free
evolution E(t) = e^{i t L_S},

    Z^{t,s} = E(-s) Z_I E(t),   Z_I = sum_k int_{s<x_1<...<x_2k<t} sum_pairings T_S[...].

A point on the bra branch acts as L(iG(x)), one on the ket branch as
R(iG(x)); factors are composed with the earliest time outermost.  A Wick pair
(a < b) contributes f(x_a - x_b) when the earlier point sits on the bra branch
and f(x_b - x_a) otherwise, so summing the later point over both branches
gives the commutator C(x) = L(iG(x)) + R(iG(x)) and the earlier point gives
A(x_a; x_b) = f(x_a - x_b) L(iG(x_a)) + f(x_b - x_a) R(iG(x_a)).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .errors import DecompositionError, ParameterError, PrecisionWarning
from .lindblad import LindbladGenerator, lindbladian_closed_form, semigroup, spectral_check
from .model import AtomModel, CouplingSchedule, FormFactor, correlation_on_grid, coupling_at, l1_norm_f
from .superop import NormBracket, Superoperator, op_norm_2, op_norm_inf, vec, unvec


# ----------------------------------------------------------------------------
# combinatorics
# ----------------------------------------------------------------------------

def pairings(k: int) -> list[tuple[tuple[int, int], ...]]:
    """All perfect matchings of positions 0..2k-1, pairs written (earlier, later)."""

    def rec(items):
        if not items:
            yield ()
            return
        a = items[0]
        for idx in range(1, len(items)):
            b = items[idx]
            rest = items[1:idx] + items[idx + 1:]
            for tail in rec(rest):
                yield ((a, b),) + tail

    return list(rec(list(range(2 * k))))


def r_assignments(k: int) -> Iterator[tuple[int, ...]]:
    """Branch labels (0 = bra/left, 1 = ket/right) for the 2k points."""
    return product((0, 1), repeat=2 * k)


def double_factorial(m: int) -> int:
    return math.prod(range(m, 0, -2)) if m > 0 else 1


@dataclass(frozen=True)
class Pairing:
    """k pairs (u_i, r_i; v_i, r'_i) with u_1 < ... < u_k and u_i < v_i."""

    u: tuple[float, ...]
    v: tuple[float, ...]
    r: tuple[int, ...]
    r_prime: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.u) == len(self.v) == len(self.r) == len(self.r_prime)):
            raise ParameterError("pairing fields must have equal length")
        if any(a >= b for a, b in zip(self.u, self.v)):
            raise ParameterError("each pair needs u_i < v_i")
        if any(a >= b for a, b in zip(self.u[:-1], self.u[1:])):
            raise ParameterError("u_1 < ... < u_k required")
        if any(x not in (0, 1) for x in self.r + self.r_prime):
            raise ParameterError("branch labels must be 0 or 1")


# ----------------------------------------------------------------------------
# Feynman-rule amplitudes
# ----------------------------------------------------------------------------

def _rotated_coupling(atom: AtomModel, x: np.ndarray) -> np.ndarray:
    """G(x) = e^{i H x} G e^{-i H x} for an array of times, shape (len(x), n, n)."""
    eps = atom.bohr_frequencies()
    return np.exp(1j * x[:, None, None] * eps[None]) * atom.coupling[None]


def _L(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    return np.einsum("tik,jl->tijkl", A, np.eye(n)).reshape(A.shape[0], n * n, n * n)


def _R(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    return np.einsum("ik,tjl->tijkl", np.eye(n), A.conj()).reshape(A.shape[0], n * n, n * n)


@dataclass(frozen=True)
class KernelTable:
    """The four amplitudes (a)-(d) for a pair at times u < v.

    (a) both bra:  f(u-v) L(iG(u)) L(iG(v))
    (b) bra, ket:  f(u-v) L(iG(u)) R(iG(v))
    (c) ket, bra:  f(v-u) R(iG(u)) L(iG(v))
    (d) both ket:  f(v-u) R(iG(u)) R(iG(v))
    """

    atom: AtomModel
    ff: FormFactor

    def amplitude(self, case: str, u: float, v: float) -> np.ndarray:
        x = np.array([u, v], dtype=float)
        iG = 1j * _rotated_coupling(self.atom, x)
        f_uv = complex(correlation_on_grid(self.ff, np.array([u - v]))[0])
        f_vu = np.conj(f_uv)
        Lu, Lv, Ru, Rv = _L(iG[:1])[0], _L(iG[1:])[0], _R(iG[:1])[0], _R(iG[1:])[0]
        table = {"a": f_uv * Lu @ Lv, "b": f_uv * Lu @ Rv, "c": f_vu * Ru @ Lv, "d": f_vu * Ru @ Rv}
        return table[case]


# ----------------------------------------------------------------------------
# simplex quadrature
# ----------------------------------------------------------------------------

def simplex_rule(dim: int, n_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate Gauss-Legendre rule on 0 < y_1 < ... < y_dim < 1.

    y_dim = u_dim, y_{j} = y_{j+1} u_j; Jacobian prod_j u_j^{j-1}.  For dim = 2
    this is the Duffy map of the triangle.
    """
    x, w = leggauss(n_per_dim)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return _collapse(U, W)


def _collapse(U: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dim = U.shape[1]
    Y = np.empty_like(U)
    Y[:, dim - 1] = U[:, dim - 1]
    for j in range(dim - 2, -1, -1):
        Y[:, j] = Y[:, j + 1] * U[:, j]
    jac = np.ones(U.shape[0])
    for j in range(1, dim):
        jac *= U[:, j] ** j
    return Y, W * jac


def simplex_qmc(dim: int, m_log2: int, seed: int, replicates: int = 4):
    """Scrambled Sobol replicates mapped to the ordered simplex."""
    per = 2 ** m_log2 // replicates
    out = []
    for r in range(replicates):
        U = qmc.Sobol(dim, scramble=True, seed=seed + r).random(per)
        out.append(_collapse(U, np.full(per, 1.0 / per)))
    return out


# ----------------------------------------------------------------------------
# order-k integrand
# ----------------------------------------------------------------------------

def _order_integrand(atom: AtomModel, ff: FormFactor, lam: Callable, X: np.ndarray,
                     k: int, explicit: bool = False) -> np.ndarray:
    """Sum over pairings of the ordered superoperator products at times X (N, 2k)."""
    N = X.shape[0]
    n2 = atom.n ** 2
    iG = [1j * _rotated_coupling(atom, X[:, p]) for p in range(2 * k)]
    Ls = [_L(a) for a in iG]
    Rs = [_R(a) for a in iG]
    lamv = [np.asarray(lam(X[:, p]), dtype=float) for p in range(2 * k)]
    total = np.zeros((N, n2, n2), dtype=complex)
    for pr in pairings(k):
        partner = {}
        for a, b in pr:
            partner[a] = (b, True)
            partner[b] = (a, False)
        weight = np.ones(N)
        for a, b in pr:
            weight = weight * lamv[a] * lamv[b]
        if explicit:
            fab = {}
            for a, b in pr:
                fab[(a, b)] = correlation_on_grid(ff, X[:, a] - X[:, b])
            for r in r_assignments(k):
                acc = None
                scal = np.ones(N, dtype=complex)
                for a, b in pr:
                    scal = scal * (fab[(a, b)] if r[a] == 0 else np.conj(fab[(a, b)]))
                for p in range(2 * k):
                    S = Ls[p] if r[p] == 0 else Rs[p]
                    acc = S if acc is None else acc @ S
                total += (weight * scal)[:, None, None] * acc
            continue
        acc = None
        for p in range(2 * k):
            q, earlier = partner[p]
            if earlier:
                fv = correlation_on_grid(ff, X[:, p] - X[:, q])
                S = fv[:, None, None] * Ls[p] + np.conj(fv)[:, None, None] * Rs[p]
            else:
                S = Ls[p] + Rs[p]
            acc = S if acc is None else acc @ S
        total += weight[:, None, None] * acc
    return total


def _integrate_order(atom, ff, lam, s, t, k, rule, chunk=20000, explicit=False):
    Y, W = rule
    h = t - s
    X = s + h * Y
    W = W * h ** (2 * k)
    n2 = atom.n ** 2
    acc = np.zeros((n2, n2), dtype=complex)
    for a in range(0, X.shape[0], chunk):
        I = _order_integrand(atom, ff, lam, X[a:a + chunk], k, explicit)
        acc += np.tensordot(W[a:a + chunk], I, axes=1)
    return acc


@dataclass
class DysonResult:
    Z: Superoperator
    terms: list[np.ndarray]
    tail_bound: float
    qmc_stderr: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def apply(self, X):
        return self.Z.apply(X)


def _free(atom: AtomModel, t: float) -> np.ndarray:
    return np.diag(np.exp(1j * t * atom.bohr_frequencies().ravel()))


def _default_rule(k: int, seed: int):
    if k == 1:
        return [simplex_rule(2, 64)]
    if k == 2:
        return [simplex_rule(4, 24)]
    return simplex_qmc(2 * k, 16, seed)


def truncation_tail_bound(x: float, k_max: int) -> float:
    """e^x - sum_{k<=k_max} x^k / k!, the remainder of the exponential bound."""
    head = sum(x ** k / math.factorial(k) for k in range(k_max + 1))
    return max(math.exp(x) - head, 0.0)


def _dyson(atom, ff, lam_fn, lam_s, s, t, k_max, seed, tol, rules, explicit, l1):
    if t <= s:
        raise ParameterError("need t > s")
    if not 0 <= k_max <= 3:
        raise ParameterError("k_max must lie in 0..3")
    n2 = atom.n ** 2
    terms = [np.eye(n2, dtype=complex)]
    stderr = 0.0
    for k in range(1, k_max + 1):
        rule_list = (rules or {}).get(k) or _default_rule(k, seed)
        vals = [_integrate_order(atom, ff, lam_fn, s, t, k, r, explicit=explicit) for r in rule_list]
        term = np.mean(vals, axis=0)
        if len(vals) > 1:
            stderr = max(stderr, float(np.abs(np.std(vals, axis=0, ddof=1)).max() / math.sqrt(len(vals))))
        terms.append(term)
    ZI = sum(terms)
    Z = _free(atom, -s) @ ZI @ _free(atom, t)
    l1 = l1_norm_f(ff) if l1 is None else l1
    x = 4 * (t - s) * l1 * atom.coupling_norm() ** 2 * lam_s ** 2
    bound = truncation_tail_bound(x, k_max)
    msgs = []
    if bound > tol:
        msg = f"truncation tail bound {bound:.3e} exceeds tolerance {tol:.1e}"
        warnings.warn(msg, PrecisionWarning, stacklevel=3)
        msgs.append(msg)
    return DysonResult(Superoperator(Z), terms, bound, stderr, msgs)


def dyson_Z0(atom: AtomModel, ff: FormFactor, lam: float, s: float, t: float, k_max: int = 2,
             seed: int = 0, tol: float = 1e-2, rules: dict | None = None,
             explicit: bool = False, l1: float | None = None) -> DysonResult:
    """Dyson series of Z_0^{t,s} (constant coupling lam = lambda(s)) through order k_max."""
    lam = float(lam)
    return _dyson(atom, ff, lambda x: np.full_like(x, lam), lam, s, t, k_max, seed, tol, rules,
                  explicit, l1)


def dyson_Z(atom: AtomModel, ff: FormFactor, sched: CouplingSchedule, s: float, t: float,
            k_max: int = 2, seed: int = 0, tol: float = 1e-2, rules: dict | None = None,
            explicit: bool = False, l1: float | None = None) -> DysonResult:
    """Dyson series of Z^{t,s} with lambda(u) lambda(v) inside every pair."""
    lam_fn = lambda x: coupling_at(sched, x)
    return _dyson(atom, ff, lam_fn, float(coupling_at(sched, s)), s, t, k_max, seed, tol, rules,
                  explicit, l1)


def lemma_difference_bound(atom: AtomModel, l1: float, sched: CouplingSchedule, s: float,
                           t: float) -> float:
    """e^{4(t-s)||f|| ||G||^2 lam(s)^2} - e^{4(t-s)||f|| ||G||^2 lam(t)^2}."""
    c = 4 * (t - s) * l1 * atom.coupling_norm() ** 2
    return math.exp(c * coupling_at(sched, s) ** 2) - math.exp(c * coupling_at(sched, t) ** 2)


# ----------------------------------------------------------------------------
# comparison with the semigroup
# ----------------------------------------------------------------------------

@dataclass
class CompareResult:
    lam: float
    tau: float
    lhs_norm: float
    lhs_norm_2: float
    paper_rhs_shape: float
    inconclusive: bool = False
    detail: dict = field(default_factory=dict)


def compare_Z0_lindblad(atom: AtomModel, ff: FormFactor, lam: float, s: float, tau: float,
                        M_modes: int | None = None, r_max: float = 8.0, n_max: int = 2,
                        dt: float = 0.5, check_truncation: bool = True,
                        gen: LindbladGenerator | None = None) -> CompareResult:
    """||Z_0^{t,s} - e^{i(t-s)L_S + (t-s)lam^2 M}||_inf with t - s = tau/lam^2 (oracle route)."""
    from .fock import build_hamiltonian, discretize_field, effective_Z

    if lam <= 0:
        raise ParameterError("lam must be positive")
    T = tau / lam ** 2
    shape = lam ** 2 * abs(math.log(lam))
    n2 = atom.n ** 2
    if T == 0.0 or not np.any(atom.coupling):
        return CompareResult(lam, tau, 0.0, 0.0, shape)
    gen = gen or lindbladian_closed_form(atom, ff)
    S = semigroup(atom, gen, lam, T)
    if M_modes is None:
        # nonuniform node spacing makes revivals arrive early; keep 2 pi M / r_max >= 3T
        M_modes = int(8 * math.ceil(max(64, 3.0 * T * r_max / (2 * math.pi)) / 8))
    fld = discretize_field(ff, M_modes, r_max)
    detail = {"M": M_modes, "r_max": r_max, "n_max": n_max}

    def measure(nm):
        ham = build_hamiltonian(atom, fld, nm)
        Z = effective_Z(ham, lam, s, s + T, dt)
        return Z - S

    diff = measure(n_max)
    lhs = op_norm_inf(diff).lower
    inconclusive = False
    if check_truncation and n_max > 1:
        coarse = op_norm_inf(measure(n_max - 1)).lower
        detail["lhs_coarse"] = coarse
        inconclusive = abs(coarse - lhs) > 0.25 * max(lhs, 1e-300)
    return CompareResult(lam, tau, lhs, op_norm_2(diff), shape, inconclusive, detail)


# ----------------------------------------------------------------------------
# Riesz decomposition
# ----------------------------------------------------------------------------

@dataclass
class RieszSplit:
    P: Superoperator
    R: Superoperator
    Pi: np.ndarray
    eigenvalue: complex
    spectrum: np.ndarray

    def norm_R(self) -> NormBracket:
        return op_norm_inf(self.R)

    def pi_deviation(self, target: np.ndarray | None = None) -> float:
        n = self.Pi.shape[0]
        if target is None:
            target = np.zeros((n, n), dtype=complex)
            target[0, 0] = 1.0
        return float(np.linalg.norm(self.Pi - target, 2))


def _contour_projection(Zm: np.ndarray, radius: float, n_nodes: int = 64) -> np.ndarray:
    """(1 / 2 pi i) closed integral of (z - Z)^{-1} over |z - 1| = radius (trapezoid rule)."""
    I = np.eye(Zm.shape[0])
    P = np.zeros_like(Zm, dtype=complex)
    for th in 2 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes:
        e = radius * np.exp(1j * th)
        P += e * np.linalg.solve((1 + e) * I - Zm, I)
    return P / n_nodes


def riesz_decomposition(Z: Superoperator, disk_radius: float = 0.5, match_tol: float = 1e-6,
                        method: str = "eig") -> RieszSplit:
    """Split Z = P + R with P = |1_S><Pi| the spectral projection at eigenvalue 1."""
    Zm = Z.matrix
    n = Z.n
    w, Vr = np.linalg.eig(Zm)
    dist = np.abs(w - 1.0)
    i0 = int(np.argmin(dist))
    if dist[i0] > match_tol:
        raise DecompositionError(f"no eigenvalue within {match_tol} of 1; spectrum {w}")
    inside = np.sort(dist)[1] if w.size > 1 else np.inf
    if inside < disk_radius:
        raise DecompositionError(
            f"second eigenvalue at distance {inside:.3e} < {disk_radius} from 1; spectrum {w}")
    one = vec(np.eye(n))
    r = Vr[:, i0]
    c = np.vdot(one, r) / np.vdot(one, one)
    if np.linalg.norm(r - c * one) > 1e-6 * np.linalg.norm(r):
        raise DecompositionError("eigenvector at 1 is not proportional to the identity")
    if method == "contour":
        P = _contour_projection(Zm, disk_radius)
        # P = vec(1) vec(Pi)^H: read Pi off the first nonzero row
        l = P[0].conj() / one[0]
    elif method == "eig":
        wl, Vl = np.linalg.eig(Zm.conj().T)
        j0 = int(np.argmin(np.abs(wl - np.conj(w[i0]))))
        l = Vl[:, j0]
    else:
        raise ParameterError(f"unknown method {method!r}")
    L = unvec(l, n)
    Pi = L / np.trace(L)
    P = np.outer(one, vec(Pi).conj())
    return RieszSplit(Superoperator(P), Superoperator(Zm - P), Pi, complex(w[i0]), w)


# ----------------------------------------------------------------------------
# Van Hove profile
# ----------------------------------------------------------------------------

@dataclass
class ProfileRow:
    s: float
    lam: float
    norm_R: float
    pi_deviation: float
    split: RieszSplit = field(repr=False)


def vanhove_contraction_profile(atom: AtomModel, ff: FormFactor, sched: CouplingSchedule,
                                tau: float, N_steps: int, route: str = "surrogate",
                                gen: LindbladGenerator | None = None, M_modes: int | None = None,
                                r_max: float = 8.0, n_max: int = 1, dt: float = 0.5) -> list[ProfileRow]:
    """Riesz split of the one-step propagator at successive Van Hove grid points."""
    from .polymer import van_hove_grid

    if sched.kind != "decaying":
        raise ParameterError("profile requires a decaying schedule")
    grid = van_hove_grid(sched, tau, N_steps)
    gen = gen or lindbladian_closed_form(atom, ff)
    rows = []
    ham = None
    if route == "oracle":
        from .fock import build_hamiltonian, discretize_field, effective_Z

        horizon = float(np.max(np.diff(grid.times)))
        if M_modes is None:
            M_modes = int(8 * math.ceil(max(64, 3.0 * horizon * r_max / (2 * math.pi)) / 8))
        ham = build_hamiltonian(atom, discretize_field(ff, M_modes, r_max), n_max)
    elif route != "surrogate":
        raise ParameterError(f"unknown route {route!r}")
    for i in range(N_steps):
        s = float(grid.times[i])
        lam = float(coupling_at(sched, s))
        h = tau / lam ** 2
        if route == "surrogate":
            Z = semigroup(atom, gen, lam, h)
        else:
            Z = effective_Z(ham, sched, s, s + h, dt)
        split = riesz_decomposition(Z)
        rows.append(ProfileRow(s, lam, split.norm_R().value, split.pi_deviation(), split))
    return rows


def contraction_sequence(rows: Sequence[ProfileRow]) -> np.ndarray:
    """u_n = ||P(t_{n-1}) R(t_n)||_inf along a profile."""
    out = []
    for a, b in zip(rows[:-1], rows[1:]):
        out.append(op_norm_inf(a.split.P @ b.split.R).value)
    return np.array(out)
