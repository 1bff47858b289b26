"""Atomic Liouvillian, weak-coupling generator M, thermal generator and semigroup.

Everything is in the Heisenberg picture on the Pi_ij basis of ``superop``.
The generator is assembled from the half-line transforms

    H(eps) = int_0^inf f(s) e^{i s eps} ds = pi J(eps) + i PV int J(w)/(eps - w) dw

through the secular (P_eps-projected) second-order kernel.  Two routes are
provided: ``closed`` uses the spectral formula above, ``direct`` integrates the
time-domain kernel numerically and projects afterwards.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import AssumptionViolation, DegenerateSpectrumError, ParameterError, PrecisionWarning
from .model import (
    AtomModel,
    FormFactor,
    asymptotic_tail_terms,
    correlation_on_grid,
    thermal_density,
    _check_infrared,
)
from .superop import Superoperator, expm, vec, unvec

_BOHR_TOL = 1e-9
_QUAD_LIMIT = 2000


# ----------------------------------------------------------------------------
# Liouvillian and FGR
# ----------------------------------------------------------------------------

def liouvillian(atom: AtomModel) -> Superoperator:
    """L_S = L(H_S) - R(H_S): diagonal with entries eps_ij = E_i - E_j."""
    return Superoperator(np.diag(atom.bohr_frequencies().ravel()).astype(complex))


@dataclass(frozen=True)
class FgrReport:
    rates: dict[int, float]
    threshold: float

    @property
    def passed(self) -> bool:
        return all(r > self.threshold for r in self.rates.values())


def fermi_golden_rule(atom: AtomModel, ff: FormFactor, threshold: float = 1e-12) -> FgrReport:
    """rate_i = sum_{j<i} J(eps_ij) |G_ij|^2 for levels i = 2..n (1-based keys)."""
    eps = atom.bohr_frequencies()
    g2 = np.abs(atom.coupling) ** 2
    rates = {}
    for i in range(1, atom.n):
        rates[i + 1] = float(sum(ff.spectral_density(eps[i, j]) * g2[i, j] for j in range(i)))
    return FgrReport(rates, threshold)


# ----------------------------------------------------------------------------
# half-line transforms
# ----------------------------------------------------------------------------

def _pv_transform(density, lo: float, hi: float, eps: float, breaks=()) -> float:
    """PV int_lo^hi density(w)/(eps - w) dw."""
    if lo < eps < hi:
        # cauchy weight gives PV int g/(w - eps)
        width = min(eps - lo, hi - eps, 1.0)
        a, b = eps - 0.5 * width, eps + 0.5 * width
        core = -quad(density, a, b, weight="cauchy", wvar=eps, limit=_QUAD_LIMIT)[0]
        rest = 0.0
        for u, v in ((lo, a), (b, hi)):
            pts = [p for p in breaks if u < p < v]
            rest += quad(lambda w: density(w) / (eps - w), u, v, limit=_QUAD_LIMIT,
                         points=pts or None, epsabs=1e-13, epsrel=1e-12)[0]
        return core + rest
    pts = [p for p in breaks if lo < p < hi]
    return quad(lambda w: density(w) / (eps - w), lo, hi, limit=_QUAD_LIMIT,
                points=pts or None, epsabs=1e-13, epsrel=1e-12)[0]


def _spectral_transform(ff: FormFactor, eps: float, beta: float | None) -> complex:
    rc = ff.cutoff()
    breaks = tuple(ff.breakpoints()[1:-1]) if ff.kind == "tabulated" else (0.25 * rc,)
    if beta is None:
        density = ff.spectral_density
        re = math.pi * float(density(eps))
        im = _pv_transform(density, 0.0, rc, eps, breaks)
    else:
        density = lambda w: thermal_density(ff, w, beta)
        re = math.pi * float(density(eps))
        neg = tuple(-b for b in breaks)
        im = _pv_transform(density, -rc, 0.0, eps, neg) + _pv_transform(density, 0.0, rc, eps, breaks)
    return complex(re, im)


def _power_tail(q: float, nu: float, S: float) -> complex:
    """int_S^inf s^{-q} e^{i s nu} ds.

    The contour is rotated to s = S(1 + i y), where the integrand decays like
    e^{-|nu| S y} without oscillation.
    """
    if nu == 0.0:
        return S ** (1.0 - q) / (q - 1.0)
    w = abs(nu) * S
    kw = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    re = quad(lambda y: ((1 + 1j * y) ** (-q)).real * math.exp(-w * y), 0, np.inf, **kw)[0]
    im = quad(lambda y: ((1 + 1j * y) ** (-q)).imag * math.exp(-w * y), 0, np.inf, **kw)[0]
    val = 1j * np.exp(1j * w) * complex(re, im) * S ** (1.0 - q)
    return complex(val) if nu > 0 else complex(val).conjugate()


def _time_transform(ff: FormFactor, eps: float, beta: float | None, s_max: float) -> complex:
    """Direct quadrature of int_0^s_max f(s) e^{i s eps} plus the asymptotic tail."""
    nodes, weights = _panel_rule(s_max, 1.0, 16)
    fv = correlation_on_grid(ff, nodes, beta)
    body = np.sum(weights * fv * np.exp(1j * nodes * eps))
    tail = sum(A * _power_tail(q, eps, s_max) for A, q in asymptotic_tail_terms(ff, beta))
    return complex(body + tail)


def half_line_transform(ff: FormFactor, eps: float, beta: float | None = None,
                        method: str = "spectral", s_max: float = 400.0) -> complex:
    """int_0^inf f(s) e^{i s eps} ds (f_beta when beta is given).

    ``spectral``: real part pi J(eps) exactly, imaginary part by principal-value
    quadrature.  ``time``: Gauss-Legendre panels in s up to s_max plus the
    power-law tail from the low-frequency expansion of J.
    """
    eps = float(eps)
    if beta is not None:
        if beta <= 0:
            raise ParameterError("beta must be positive")
        _check_infrared(ff)
    if eps == 0.0:
        warnings.warn("half-line transform at eps = 0 is a boundary case",
                      PrecisionWarning, stacklevel=2)
    if method == "spectral":
        return _spectral_transform(ff, eps, beta)
    if method == "time":
        return _time_transform(ff, eps, beta, s_max)
    raise ParameterError(f"unknown method {method!r}")


# ----------------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class LindbladGenerator:
    M: Superoperator
    bohr: np.ndarray
    transforms: dict = field(default_factory=dict, compare=False)
    beta: float | None = None
    method: str = "closed"

    @property
    def n(self) -> int:
        return self.M.n

    @property
    def matrix(self) -> np.ndarray:
        return self.M.matrix

    def population_block(self) -> np.ndarray:
        """M_T[a, b] = M[(aa), (bb)]."""
        idx = [a * self.n + a for a in range(self.n)]
        return self.M.matrix[np.ix_(idx, idx)].copy()

    def coherence_rates(self) -> np.ndarray:
        """m_ij for i != j (diagonal entries on Pi_ij); nan on the diagonal."""
        n = self.n
        d = np.diag(self.M.matrix).reshape(n, n).astype(complex)
        d[np.diag_indices(n)] = np.nan
        return d


def secular_mask(bohr: np.ndarray, tol: float = _BOHR_TOL) -> np.ndarray:
    e = bohr.ravel()
    return np.abs(e[:, None] - e[None, :]) <= tol


def _check_degeneracy(atom: AtomModel, allow_degenerate: bool) -> None:
    if not atom.is_ascending():
        raise DegenerateSpectrumError("energies must be strictly increasing")
    if atom.bohr_degenerate() and not allow_degenerate:
        raise DegenerateSpectrumError(
            "degenerate Bohr frequencies; pass allow_degenerate=True for the secular-block version")


def _unique_bohr(bohr: np.ndarray) -> list[float]:
    vals = []
    for e in np.sort(bohr.ravel()):
        if not vals or abs(e - vals[-1]) > _BOHR_TOL:
            vals.append(float(e))
    return vals


def _lookup(table: dict, e: float) -> complex:
    for k, v in table.items():
        if abs(k - e) <= _BOHR_TOL:
            return v
    raise KeyError(e)


def lindbladian_closed_form(atom: AtomModel, ff: FormFactor, beta: float | None = None,
                            allow_degenerate: bool = False) -> LindbladGenerator:
    """Secular second-order generator from the spectral half-line transforms.

    With H = H(eps) and eps_ab = E_a - E_b,

      D[(ij),(kl)] = G_ik G_lj [H(eps_jl) + conj H(eps_ik)]
                     - delta_ik sum_m G_lm G_mj H(eps_jm)
                     - delta_jl sum_m G_im G_mk conj H(eps_im)

    and M keeps the entries with eps_ij = eps_kl.
    """
    _check_degeneracy(atom, allow_degenerate)
    n = atom.n
    eps = atom.bohr_frequencies()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        table = {e: half_line_transform(ff, e, beta) for e in _unique_bohr(eps)}
    Hm = np.vectorize(lambda e: _lookup(table, e), otypes=[complex])(eps)
    G = atom.coupling
    D = np.zeros((n, n, n, n), dtype=complex)
    # first term
    D += np.einsum("ik,lj->ijkl", G, G) * (Hm[None, :, None, :] + np.conj(Hm)[:, None, :, None])
    A = np.einsum("lm,mj,jm->lj", G, G, Hm)
    B = np.einsum("im,mk,im->ik", G, G, np.conj(Hm))
    eye = np.eye(n)
    D -= np.einsum("ik,lj->ijkl", eye, A)
    D -= np.einsum("jl,ik->ijkl", eye, B)
    Mm = D.reshape(n * n, n * n)
    Mm = np.where(secular_mask(eps), Mm, 0.0)
    return LindbladGenerator(Superoperator(Mm), eps, table, beta, "closed")


def _panel_rule(s_max: float, width: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    n_pan = max(1, int(math.ceil(s_max / width)))
    x, w = leggauss(order)
    edges = np.linspace(0.0, s_max, n_pan + 1)
    lo, hi = edges[:-1], edges[1:]
    nodes = (0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]).ravel()
    weights = (0.5 * (hi - lo)[:, None] * w).ravel()
    return nodes, weights


def kernel_parts(atom: AtomModel, s) -> tuple[np.ndarray, np.ndarray]:
    """Superoperator pieces multiplying f(s) and conj f(s) in the kernel K_s.

    With G_s = e^{-isH} G e^{isH}:
      P1(s) = L(G) R(G_s) - R(G_s G),   P2(s) = L(G_s) R(G) - L(G_s G),
    so K_s = f(s) P1(s) + conj(f(s)) P2(s).  Shapes (len(s), n^2, n^2).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = atom.n
    G = atom.coupling
    eps = atom.bohr_frequencies()
    Gs = np.exp(-1j * s[:, None, None] * eps[None]) * G[None]
    eye = np.eye(n)
    GsG = Gs @ G
    # L(A)[(ij),(kl)] = A_ik d_jl ; R(B)[(ij),(kl)] = d_ik conj(B_jl)
    LG_RGs = np.einsum("ik,tjl->tijkl", G, Gs.conj())
    R_GsG = np.einsum("ik,tjl->tijkl", eye, GsG.conj())
    L_Gs_RG = np.einsum("tik,jl->tijkl", Gs, G.conj())
    L_GsG = np.einsum("tik,jl->tijkl", GsG, eye)
    P1 = (LG_RGs - R_GsG).reshape(s.size, n * n, n * n)
    P2 = (L_Gs_RG - L_GsG).reshape(s.size, n * n, n * n)
    return P1, P2


def kernel(atom: AtomModel, ff: FormFactor, s, beta: float | None = None) -> np.ndarray:
    """K_s as an array of superoperator matrices."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    fv = correlation_on_grid(ff, s, beta)
    P1, P2 = kernel_parts(atom, s)
    return fv[:, None, None] * P1 + np.conj(fv)[:, None, None] * P2


def _frequency_decomposition(atom: AtomModel, freqs: list[float]):
    """Least-squares fit P(s) = sum_nu e^{i s nu} C_nu for both kernel parts."""
    m = len(freqs)
    sep = min(np.diff(freqs)) if m > 1 else 1.0
    span = max(30.0, 20.0 / sep)
    s = np.linspace(0.0, span, 8 * m + 7) + 0.173
    P1, P2 = kernel_parts(atom, s)
    V = np.exp(1j * np.outer(s, freqs))
    out = []
    for P in (P1, P2):
        C, *_ = np.linalg.lstsq(V, P.reshape(s.size, -1), rcond=None)
        resid = np.abs(V @ C - P.reshape(s.size, -1)).max()
        if resid > 1e-9:
            warnings.warn(f"kernel frequency decomposition residual {resid:.2e}",
                          PrecisionWarning, stacklevel=3)
        out.append(C.reshape(m, *P.shape[1:]))
    return out


def lindbladian_direct(atom: AtomModel, ff: FormFactor, s_max: float = 200.0,
                       quad_order: int = 16, panel_width: float = 1.0,
                       beta: float | None = None, tail: bool = True,
                       allow_degenerate: bool = False) -> LindbladGenerator:
    """sum_eps P_eps (int_0^inf K_s ds) P_eps with K_s integrated in the time domain.

    The body [0, s_max] uses composite Gauss-Legendre; the tail uses the
    power-law expansion of f together with a frequency decomposition of the
    kernel's bounded factors.
    """
    _check_degeneracy(atom, allow_degenerate)
    if s_max <= 0:
        raise ParameterError("s_max must be positive")
    nodes, weights = _panel_rule(s_max, panel_width, quad_order)
    n2 = atom.n ** 2
    body = np.zeros((n2, n2), dtype=complex)
    chunk = 512
    for a in range(0, nodes.size, chunk):
        K = kernel(atom, ff, nodes[a:a + chunk], beta)
        body += np.tensordot(weights[a:a + chunk], K, axes=1)
    total = body
    if tail:
        terms = asymptotic_tail_terms(ff, beta)
        if not terms:
            warnings.warn("no low-frequency series available; tail omitted",
                          PrecisionWarning, stacklevel=2)
        else:
            freqs = sorted(set(np.round(-atom.bohr_frequencies().ravel(), 12)))
            C1, C2 = _frequency_decomposition(atom, freqs)
            for nu, c1, c2 in zip(freqs, C1, C2):
                t1 = sum(A * _power_tail(q, nu, s_max) for A, q in terms)
                # conj f(s) e^{i s nu} integrates to conj of f e^{-i s nu}
                t2 = np.conj(sum(A * _power_tail(q, -nu, s_max) for A, q in terms))
                total = total + t1 * c1 + t2 * c2
            lead = abs(terms[0][0]) * s_max ** (1 - terms[0][1]) / (terms[0][1] - 1)
            if lead > 1e-2:
                warnings.warn(f"s_max={s_max} leaves a large tail ({lead:.2e})",
                              PrecisionWarning, stacklevel=2)
    Mm = np.where(secular_mask(atom.bohr_frequencies()), total, 0.0)
    return LindbladGenerator(Superoperator(Mm), atom.bohr_frequencies(), {}, beta, "direct")


def lindbladian_thermal(atom: AtomModel, ff: FormFactor, beta: float, method: str = "closed",
                        allow_degenerate: bool = False, **kw) -> LindbladGenerator:
    """The generator with f replaced by the thermal correlation f_beta."""
    if beta <= 0:
        raise ParameterError("beta must be positive")
    _check_infrared(ff)
    if method == "closed":
        return lindbladian_closed_form(atom, ff, beta=beta, allow_degenerate=allow_degenerate)
    if method == "direct":
        return lindbladian_direct(atom, ff, beta=beta, allow_degenerate=allow_degenerate, **kw)
    raise ParameterError(f"unknown method {method!r}")


# ----------------------------------------------------------------------------
# spectrum, stationary state, semigroup
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    zero_multiplicity: int
    max_re_nonzero: float
    gap_pass: bool
    eigenvalues: np.ndarray
    condition: float

    @property
    def gap(self) -> float:
        """Spectral gap m_sigma: max real part of the nonzero eigenvalues (negative)."""
        return self.max_re_nonzero


def spectral_check(gen: LindbladGenerator | Superoperator, zero_tol: float = 1e-9,
                   cond_limit: float = 1e10) -> SpectralReport:
    Mm = gen.M.matrix if isinstance(gen, LindbladGenerator) else gen.matrix
    w, V = np.linalg.eig(Mm)
    cond = float(np.linalg.cond(V))
    if cond > cond_limit:
        warnings.warn(f"eigenvector matrix is ill conditioned ({cond:.2e})",
                      PrecisionWarning, stacklevel=2)
    scale = max(float(np.linalg.norm(Mm, 2)), 1e-300)
    zero = np.abs(w) <= zero_tol * scale
    nz = w[~zero]
    max_re = float(nz.real.max()) if nz.size else -math.inf
    mult = int(zero.sum())
    passed = mult == 1 and max_re < -zero_tol
    order = np.argsort(-w.real)
    return SpectralReport(mult, max_re, bool(passed), w[order], cond)


def stationary_left_vector(gen: LindbladGenerator, zero_tol: float = 1e-9) -> np.ndarray:
    """Trace-one rho with Tr(rho M(X)) = 0 for all X."""
    rep = spectral_check(gen, zero_tol)
    if not rep.gap_pass:
        raise AssumptionViolation(
            f"no unique stationary state (zero multiplicity {rep.zero_multiplicity}, "
            f"max Re {rep.max_re_nonzero:.3e})")
    Mm = gen.M.matrix
    # vec(rho)^H M = 0  <=>  M^H vec(rho) = 0
    _, _, Vh = np.linalg.svd(Mm.conj().T)
    v = Vh[-1].conj()
    rho = unvec(v, gen.n)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def semigroup(atom: AtomModel, gen: LindbladGenerator, lam: float, dt: float) -> Superoperator:
    """e^{i dt L_S + dt lam^2 M}."""
    if dt < 0:
        raise ParameterError("dt must be nonnegative")
    A = Superoperator(1j * liouvillian(atom).matrix + lam * lam * gen.M.matrix)
    return expm(A, dt)


def evolve_semigroup(atom: AtomModel, gen: LindbladGenerator, lam: float, dt: float,
                     X: np.ndarray) -> np.ndarray:
    return semigroup(atom, gen, lam, dt).apply(np.asarray(X, dtype=complex))


def gibbs_state(atom: AtomModel, beta: float) -> np.ndarray:
    w = np.exp(-beta * (atom.energies - atom.energies.min()))
    return np.diag(w / w.sum()).astype(complex)


def schrodinger_evolve(atom: AtomModel, gen: LindbladGenerator, lam: float, dt: float,
                       rho: np.ndarray) -> np.ndarray:
    """Dual (state) evolution: vec(rho_t) = S^H vec(rho) for the Heisenberg map S."""
    S = semigroup(atom, gen, lam, dt)
    return unvec(S.matrix.conj().T @ vec(rho), atom.n)


def choi_diagnostic(gen: LindbladGenerator) -> float:
    """Smallest eigenvalue of the projected Choi matrix of the Schrodinger generator.

    A generator of a completely positive semigroup has this value >= 0
    (conditional complete positivity).  Diagnostic only.
    """
    n = gen.n
    L = gen.M.matrix.conj().T
    C = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            Eij = np.zeros((n, n), dtype=complex)
            Eij[i, j] = 1.0
            C += np.kron(Eij, unvec(L @ vec(Eij), n))
    omega = np.eye(n).ravel() / math.sqrt(n)
    Q = np.eye(n * n) - np.outer(omega, omega)
    Ch = Q @ (0.5 * (C + C.conj().T)) @ Q
    return float(np.linalg.eigvalsh(Ch)[0])
