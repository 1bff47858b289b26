"""Finite-mode Fock-space oracle for the atom-field dynamics.

The continuum field is replaced by M modes from a composite Gauss-Legendre
rule on the radial density, so that sum_m g_m^2 e^{-i t w_m} approximates
f(t).  States live on {atom level} x {multisets of at most n_max modes} and are
stored as (n, D) arrays; the coupling acts as lambda G (x) sum_m g_m (a_m + a_m^dag).
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import comb

from .errors import GuardError, ParameterError, RecurrenceWarning, StepSizeError
from .model import AtomModel, CouplingSchedule, FormFactor, correlation_function, coupling_at
from .superop import Superoperator

DEFAULT_MAX_BASIS = 4_000_000


# ----------------------------------------------------------------------------
# field discretization
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretizedField:
    omega: np.ndarray
    g: np.ndarray
    r_max: float
    provenance: str = ""

    @property
    def M(self) -> int:
        return int(self.omega.size)

    def correlation(self, t) -> np.ndarray:
        """sum_m g_m^2 e^{-i t w_m}."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-1j * np.outer(t, self.omega)) @ (self.g ** 2)

    @property
    def recurrence_time(self) -> float:
        """2 pi M / r_max, the revival scale set by the mean mode spacing."""
        return 2 * math.pi * self.M / self.r_max

    def reconstruction_error(self, ff: FormFactor, T: float | None = None,
                             n_points: int = 400) -> float:
        T = 0.8 * self.recurrence_time if T is None else T
        t = np.linspace(0.0, T, n_points)
        return float(np.abs(self.correlation(t) - correlation_function(ff, t)).max())

    def check_horizon(self, t_end: float) -> None:
        if t_end >= 0.8 * self.recurrence_time:
            warnings.warn(f"horizon {t_end:.4g} exceeds 0.8 x recurrence time "
                          f"{self.recurrence_time:.4g}", RecurrenceWarning, stacklevel=3)


def discretize_field(ff: FormFactor, M: int, r_max: float, nodes_per_panel: int = 8,
                     fold_tail: bool = True) -> DiscretizedField:
    """Composite Gauss-Legendre modes on [0, r_max] with g_m = sqrt(w_m J(w_m)).

    When ``fold_tail`` is set the spectral mass beyond r_max is added to the
    outermost mode so that sum g_m^2 = f(0).
    """
    if M < 2:
        raise ParameterError("need at least two modes")
    if r_max <= 0:
        raise ParameterError("r_max must be positive")
    p = min(nodes_per_panel, M)
    n_pan = int(math.ceil(M / p))
    x, w = leggauss(p)
    edges = np.linspace(0.0, r_max, n_pan + 1)
    om = (0.5 * (edges[1:] - edges[:-1])[:, None] * x + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    wt = (0.5 * (edges[1:] - edges[:-1])[:, None] * w).ravel()
    om, wt = om[:M], wt[:M]
    mass = wt * ff.spectral_density(om)
    if fold_tail and r_max < ff.cutoff():
        mass = mass.copy()
        mass[-1] += quad(ff.spectral_density, r_max, ff.cutoff(), limit=500)[0]
    order = np.argsort(om)
    om = om[order]
    g = np.sqrt(mass[order])
    om.setflags(write=False)
    g.setflags(write=False)
    return DiscretizedField(om, g, float(r_max), f"composite GL, {p}/panel, {n_pan} panels")


def single_mode_field(omega: float, g: float) -> DiscretizedField:
    om = np.array([float(omega)])
    gg = np.array([float(g)])
    return DiscretizedField(om, gg, float(omega), "single mode")


# ----------------------------------------------------------------------------
# Fock basis
# ----------------------------------------------------------------------------

def _multiset_key(S: np.ndarray, M: int) -> np.ndarray:
    """Injective integer key of sorted multisets (rows of S, entries < M)."""
    key = np.zeros(S.shape[0], dtype=np.int64)
    for c in range(S.shape[1]):
        key = key * (M + 1) + (S[:, c] + 1)
    return key


@dataclass
class FockBasis:
    """Occupation basis with total photon number <= n_max.

    Layer N holds the sorted mode-index tuples of length N; states are indexed
    layer by layer.
    """

    M: int
    n_max: int
    layers: list[np.ndarray] = field(repr=False)
    offsets: list[int] = field(repr=False)
    keys: list[np.ndarray] = field(repr=False)

    @classmethod
    def build(cls, M: int, n_max: int, max_size: int = DEFAULT_MAX_BASIS) -> "FockBasis":
        if n_max < 0:
            raise ParameterError("n_max must be nonnegative")
        size = int(comb(M + n_max, n_max, exact=True))
        if size > max_size:
            raise GuardError(f"Fock basis of size {size} exceeds cap {max_size}")
        layers = [np.zeros((1, 0), dtype=np.int64)]
        for N in range(1, n_max + 1):
            prev = layers[-1]
            start = prev[:, -1] if N > 1 else np.zeros(1, dtype=np.int64)
            reps = M - start
            rows = np.repeat(np.arange(prev.shape[0]), reps)
            nxt = np.concatenate([np.arange(s, M) for s in start])
            layers.append(np.column_stack([prev[rows], nxt]).astype(np.int64))
        offsets = [0]
        for L in layers:
            offsets.append(offsets[-1] + L.shape[0])
        keys = [_multiset_key(L, M) for L in layers]
        return cls(M, n_max, layers, offsets, keys)

    @property
    def size(self) -> int:
        return self.offsets[-1]

    def index_of(self, occ: Sequence[int]) -> int:
        s = np.sort(np.asarray(occ, dtype=np.int64))[None, :]
        N = s.shape[1]
        if N > self.n_max:
            raise KeyError(occ)
        key = _multiset_key(s, self.M)[0]
        pos = int(np.searchsorted(self.keys[N], key))
        if pos >= self.keys[N].size or self.keys[N][pos] != key:
            raise KeyError(occ)
        return self.offsets[N] + pos

    def field_energies(self, omega: np.ndarray) -> np.ndarray:
        return np.concatenate([omega[L].sum(axis=1) if L.shape[1] else np.zeros(1)
                               for L in self.layers])

    def photon_number(self) -> np.ndarray:
        return np.concatenate([np.full(L.shape[0], N) for N, L in enumerate(self.layers)])

    def creation(self, coeff: np.ndarray) -> sp.csr_matrix:
        """Matrix of sum_m coeff_m a_m^dag on the truncated space."""
        coeff = np.asarray(coeff)
        rows, cols, vals = [], [], []
        for N in range(1, self.n_max + 1):
            prev = self.layers[N - 1]
            mode_ids = np.arange(self.M)
            # all (state, mode) pairs
            src = np.repeat(np.arange(prev.shape[0]), self.M)
            m = np.tile(mode_ids, prev.shape[0])
            new = np.sort(np.column_stack([prev[src], m]), axis=1) if N > 1 else m[:, None]
            count = (prev[src] == m[:, None]).sum(axis=1) + 1 if N > 1 else np.ones(m.size)
            pos = np.searchsorted(self.keys[N], _multiset_key(new, self.M))
            rows.append(self.offsets[N] + pos)
            cols.append(self.offsets[N - 1] + src)
            vals.append(coeff[m] * np.sqrt(count))
        D = self.size
        if not rows:
            return sp.csr_matrix((D, D), dtype=coeff.dtype)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(D, D))

    def hash(self) -> str:
        h = hashlib.sha256(f"{self.M}:{self.n_max}".encode())
        return h.hexdigest()[:16]


# ----------------------------------------------------------------------------
# Hamiltonian
# ----------------------------------------------------------------------------

@dataclass
class FockHamiltonian:
    """H(lam) = H_S (x) 1 + 1 (x) H_f + lam G (x) X with X = sum g_m (a_m + a_m^dag)."""

    atom: AtomModel
    fld: DiscretizedField
    basis: FockBasis
    hf: np.ndarray
    X: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.atom.n * self.basis.size

    def apply(self, psi: np.ndarray, lam: float) -> np.ndarray:
        """H(lam) psi for psi of shape (n, D)."""
        out = self.atom.hamiltonian @ psi + psi * self.hf[None, :]
        if lam != 0.0:
            out += lam * (self.atom.coupling @ (self.X @ psi.T).T)
        return out

    def H0(self) -> sp.csr_matrix:
        n, D = self.atom.n, self.basis.size
        diag = (self.atom.energies[:, None] + self.hf[None, :]).ravel()
        return sp.diags(diag.astype(complex), format="csr", shape=(n * D, n * D))

    def HI(self) -> sp.csr_matrix:
        return sp.kron(sp.csr_matrix(self.atom.coupling), self.X, format="csr")

    def full(self, lam: float) -> sp.csr_matrix:
        return (self.H0() + lam * self.HI()).tocsr()

    def norm_bound(self, lam: float) -> float:
        """Cheap upper bound on ||H(lam)||."""
        xb = float(abs(self.X).sum(axis=1).max()) if self.X.nnz else 0.0
        return float(np.abs(self.atom.energies).max() + self.hf.max()
                     + abs(lam) * self.atom.coupling_norm() * xb)


def build_hamiltonian(atom: AtomModel, fld: DiscretizedField, n_max: int,
                      max_size: int = DEFAULT_MAX_BASIS) -> FockHamiltonian:
    if n_max < 1:
        raise ParameterError("n_max must be at least 1")
    if atom.n * math.comb(fld.M + n_max, n_max) > max_size:
        raise GuardError(f"basis n*C(M+n_max, n_max) exceeds cap {max_size}")
    basis = FockBasis.build(fld.M, n_max, max_size)
    Ad = basis.creation(fld.g)
    X = (Ad + Ad.T).tocsr()
    return FockHamiltonian(atom, fld, basis, basis.field_energies(np.asarray(fld.omega)), X)


# ----------------------------------------------------------------------------
# Krylov propagation
# ----------------------------------------------------------------------------

class KrylovStepper:
    """exp(-i h H) v by Lanczos with full reorthogonalization and step splitting."""

    def __init__(self, size: int, m_max: int = 20, tol: float = 1e-11):
        self.m_max = m_max
        self.tol = tol
        self.V = np.empty((m_max + 1, size), dtype=complex)

    def step(self, matvec: Callable[[np.ndarray], np.ndarray], v: np.ndarray, h: float) -> np.ndarray:
        remaining = h
        while remaining > 0:
            v, done = self._try(matvec, v, remaining)
            remaining -= done
        return v

    def _try(self, matvec, v, h):
        V = self.V
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return v, h
        V[0] = v / nv
        alpha = np.zeros(self.m_max)
        beta = np.zeros(self.m_max)
        k = self.m_max
        for j in range(self.m_max):
            w = matvec(V[j])
            alpha[j] = np.vdot(V[j], w).real
            w -= alpha[j] * V[j]
            if j > 0:
                w -= beta[j - 1] * V[j - 1]
            # one pass of full reorthogonalization
            c = np.conj(V[:j + 1] @ np.conj(w))
            w -= c @ V[:j + 1]
            b = np.linalg.norm(w)
            beta[j] = b
            if b < 1e-14 * max(1.0, abs(alpha[j])):
                k = j + 1
                break
            V[j + 1] = w / b
        else:
            k = self.m_max
        T = np.diag(alpha[:k]) + np.diag(beta[:k - 1], 1) + np.diag(beta[:k - 1], -1)
        e, U = np.linalg.eigh(T)
        while True:
            c = U @ (np.exp(-1j * h * e) * U[0].conj())
            err = beta[k - 1] * abs(c[-1]) if k == self.m_max else 0.0
            if err <= self.tol or h < 1e-8:
                return nv * (c @ V[:k]), h
            h *= 0.5


@dataclass
class TruncatedState:
    psi: np.ndarray
    t: float
    basis_hash: str = ""

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def reduced_density(self) -> np.ndarray:
        return self.psi @ self.psi.conj().T

    def populations(self) -> np.ndarray:
        return np.sum(np.abs(self.psi) ** 2, axis=1)

    def expectation(self, O: np.ndarray) -> complex:
        """<psi|(O (x) 1)|psi>."""
        return complex(np.vdot(self.psi, O @ self.psi))

    def save(self, path: str | Path) -> None:
        """Flat binary of amplitudes preceded by a one-line JSON header."""
        header = {"shape": list(self.psi.shape), "dtype": "complex128", "t": self.t,
                  "basis": self.basis_hash}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode())
            fh.write(np.ascontiguousarray(self.psi, dtype=np.complex128).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "TruncatedState":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            data = np.frombuffer(fh.read(), dtype=np.complex128)
        return cls(data.reshape(header["shape"]).copy(), header["t"], header["basis"])


def _lam_fn(sched) -> Callable[[float], float]:
    if sched is None:
        return lambda t: 0.0
    if isinstance(sched, CouplingSchedule):
        return lambda t: float(coupling_at(sched, t))
    if callable(sched):
        return sched
    c = float(sched)
    return lambda t: c


def propagate(ham: FockHamiltonian, sched, psi0: np.ndarray, t_start: float, t_end: float,
              dt: float = 0.5, norm_tol: float = 1e-9, stepper: KrylovStepper | None = None,
              callback: Callable[[float, np.ndarray], None] | None = None,
              sample_every: float | None = None) -> TruncatedState:
    """Piecewise-constant lambda (sampled at step midpoints) with Krylov steps.

    ``sched`` may be a CouplingSchedule, a callable t -> lambda, a constant or
    None (free evolution).  The schedule is evaluated at absolute time t.
    """
    if t_end < t_start:
        raise ParameterError("t_end must not precede t_start")
    if dt <= 0:
        raise ParameterError("dt must be positive")
    ham.fld.check_horizon(t_end - t_start)
    lam = _lam_fn(sched)
    n, D = ham.atom.n, ham.basis.size
    psi = np.array(psi0, dtype=complex).reshape(n, D)
    n0 = np.linalg.norm(psi)
    stepper = stepper or KrylovStepper(n * D)
    t = t_start
    next_sample = t_start
    if callback is not None:
        callback(t, psi)
        next_sample += sample_every or dt
    n_steps = max(1, int(math.ceil((t_end - t_start) / dt - 1e-12)))
    h = (t_end - t_start) / n_steps
    for k in range(n_steps):
        lm = lam(t + 0.5 * h)
        mv = lambda v, lm=lm: ham.apply(v.reshape(n, D), lm).ravel()
        psi = stepper.step(mv, psi.ravel(), h).reshape(n, D)
        t = t_start + (k + 1) * h
        drift = abs(np.linalg.norm(psi) - n0)
        if drift > norm_tol * max(1.0, t - t_start):
            raise StepSizeError(f"norm drift {drift:.2e} at t={t:.4g}")
        if callback is not None and t >= next_sample - 1e-9:
            callback(t, psi)
            next_sample += sample_every or dt
    return TruncatedState(psi, t, ham.basis.hash())


def product_state(ham: FockHamiltonian, level: int) -> np.ndarray:
    psi = np.zeros((ham.atom.n, ham.basis.size), dtype=complex)
    psi[level, 0] = 1.0
    return psi


# ----------------------------------------------------------------------------
# effective atomic map
# ----------------------------------------------------------------------------

def effective_Z(ham: FockHamiltonian, sched, s: float, t: float, dt: float = 0.5,
                return_states: bool = False):
    """Z^{t,s} with <phi_i|Z(O) phi_j> = <Psi_i|(O (x) 1)|Psi_j>, Psi_j = U(t,s)(phi_j (x) Omega)."""
    n, D = ham.atom.n, ham.basis.size
    stepper = KrylovStepper(n * D)
    finals = [propagate(ham, sched, product_state(ham, j), s, t, dt, stepper=stepper).psi
              for j in range(n)]
    Z = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            Z[i * n + j] = (finals[i].conj() @ finals[j].T).ravel()
    out = Superoperator(Z)
    return (out, finals) if return_states else out


# ----------------------------------------------------------------------------
# preparation experiments
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialStateSpec:
    """Atomic level (0-based) and optional one-photon mode profiles applied as Phi(f)."""

    level: int = 1
    photon_profiles: tuple = ()


def mode_profile(fld: DiscretizedField, radial: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Mode amplitudes of a continuum radial profile, consistent with g_m."""
    om = np.asarray(fld.omega)
    # g_m = sqrt(4 pi w_m) w_m phi(w_m) fixes the implied quadrature weights
    with np.errstate(divide="ignore", invalid="ignore"):
        wq = np.where(om > 0, fld.g ** 2 / (4 * np.pi * om ** 2), 0.0)
    return np.sqrt(4 * np.pi * wq) * om * radial(om)


def initial_state(ham: FockHamiltonian, spec: InitialStateSpec) -> np.ndarray:
    psi = product_state(ham, spec.level)
    for f in spec.photon_profiles:
        f = np.asarray(f, dtype=float)
        Ad = ham.basis.creation(f)
        Phi = (Ad + Ad.T).tocsr()
        psi = (Phi @ psi.T).T
        nrm = np.linalg.norm(psi)
        if nrm == 0:
            raise ParameterError("photon profile annihilates the state")
        psi /= nrm
    return psi


@dataclass
class Trace:
    t: np.ndarray
    populations: np.ndarray
    observable: np.ndarray
    norms: np.ndarray

    def final_populations(self) -> np.ndarray:
        return self.populations[-1]

    def rows(self):
        for k in range(self.t.size):
            yield ([float(self.t[k])] + [float(p) for p in self.populations[k]]
                   + [float(self.observable[k].real), float(self.observable[k].imag),
                      float(self.norms[k])])

    def header(self) -> list[str]:
        n = self.populations.shape[1]
        return ["t"] + [f"pop_{i + 1}" for i in range(n)] + ["re_obs", "im_obs", "norm"]


def prepare_experiment(ham: FockHamiltonian, sched, spec: InitialStateSpec, t_end: float,
                       dt: float = 0.5, observable: np.ndarray | None = None,
                       sample_every: float = 1.0) -> Trace:
    """Run from t = 0 and record populations, <O (x) 1> and the norm."""
    n = ham.atom.n
    O = np.diag(np.arange(n) == 0).astype(complex) if observable is None else np.asarray(observable)
    ts, pops, obs, norms = [], [], [], []

    def record(t, psi):
        st = TruncatedState(psi, t)
        rho = st.reduced_density()
        ts.append(t)
        pops.append(np.real(np.diag(rho)))
        obs.append(complex(np.trace(O @ rho)))
        norms.append(st.norm)

    psi0 = initial_state(ham, spec)
    propagate(ham, sched, psi0, 0.0, t_end, dt, callback=record, sample_every=sample_every)
    return Trace(np.array(ts), np.array(pops), np.array(obs), np.array(norms))


def truncation_sweep(atom: AtomModel, fld: DiscretizedField, sched, spec_fn, t_end: float,
                     n_max_values: Sequence[int] = (1, 2, 3), dt: float = 0.5,
                     max_size: int = DEFAULT_MAX_BASIS) -> dict:
    """Final populations for each n_max and the size of successive increments.

    ``spec_fn(ham)`` returns the InitialStateSpec for a given Hamiltonian (so
    mode profiles can be built per basis).
    """
    finals = {}
    for nm in n_max_values:
        ham = build_hamiltonian(atom, fld, nm, max_size)
        tr = prepare_experiment(ham, sched, spec_fn(ham), t_end, dt, sample_every=t_end)
        finals[nm] = tr.final_populations()
    keys = list(finals)
    incr = [float(np.abs(finals[b] - finals[a]).max()) for a, b in zip(keys[:-1], keys[1:])]
    return {"finals": finals, "increments": incr,
            "converged": bool(incr and incr[-1] < 1e-3)}
