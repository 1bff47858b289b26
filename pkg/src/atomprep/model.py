"""Atom, form factor and coupling schedule; field correlation functions.

Units are dimensionless with hbar = 1 and dispersion omega(k) = |k|.  For a
rotation-invariant form factor every 3D integral reduces to a radial one with
the spectral density J(omega) = 4 pi omega^2 |phi(omega)|^2, so that

    f(t) = int_0^inf J(w) exp(-i t w) dw.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from .errors import AssumptionViolation, ParameterError, PrecisionWarning

_QUAD_LIMIT = 2000


# ----------------------------------------------------------------------------
# atom
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomModel:
    """n-level atom: energies E_1 < ... < E_n and Hermitian coupling G."""

    energies: np.ndarray
    coupling: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).ravel()
        g = np.asarray(self.coupling, dtype=complex)
        if g.shape != (e.size, e.size):
            raise ParameterError(f"coupling must be {e.size}x{e.size}, got {g.shape}")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(g)):
            raise ParameterError("non-finite atom data")
        if np.max(np.abs(g - g.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(g).max()):
            raise ParameterError("coupling matrix is not Hermitian")
        e.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "coupling", g)

    @property
    def n(self) -> int:
        return int(self.energies.size)

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies).astype(complex)

    def bohr_frequencies(self) -> np.ndarray:
        """Matrix eps[i, j] = E_i - E_j."""
        return self.energies[:, None] - self.energies[None, :]

    def coupling_norm(self) -> float:
        return float(np.linalg.norm(self.coupling, 2))

    def is_ascending(self) -> bool:
        return bool(np.all(np.diff(self.energies) > 0))

    def bohr_degenerate(self, tol: float = 1e-9) -> bool:
        """True when two distinct pairs i != j share a Bohr frequency."""
        eps = self.bohr_frequencies()
        vals = np.sort(eps[~np.eye(self.n, dtype=bool)])
        return bool(np.any(np.diff(vals) <= tol))

    def issues(self) -> list[str]:
        out = []
        if not self.is_ascending():
            out.append("energies not strictly increasing")
        elif self.bohr_degenerate():
            out.append("degenerate Bohr frequencies")
        return out

    def scaled(self, c: float) -> "AtomModel":
        return AtomModel(self.energies, c * self.coupling)

    @classmethod
    def two_level_sigma_x(cls, gap: float = 1.0) -> "AtomModel":
        return cls(np.array([0.0, gap]), np.array([[0, 1], [1, 0]], dtype=complex))

    @classmethod
    def ladder(cls, energies: Sequence[float]) -> "AtomModel":
        """Nearest-neighbour coupling G_{i,i+1} = 1."""
        n = len(energies)
        g = np.zeros((n, n), dtype=complex)
        for i in range(n - 1):
            g[i, i + 1] = g[i + 1, i] = 1.0
        return cls(np.asarray(energies, dtype=float), g)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, spread: float = 2.0) -> "AtomModel":
        """Random ascending energies and a random Hermitian coupling of unit norm."""
        while True:
            gaps = rng.uniform(0.3, 1.0, n - 1) * spread / max(n - 1, 1)
            e = np.concatenate([[0.0], np.cumsum(gaps)])
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            g = (a + a.conj().T) / 2
            g /= np.linalg.norm(g, 2)
            atom = cls(e, g)
            eps = atom.bohr_frequencies()[~np.eye(n, dtype=bool)]
            if np.min(np.diff(np.sort(eps))) > 0.02:
                return atom


# ----------------------------------------------------------------------------
# form factor
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FormFactor:
    """Radial form factor phi(|k|).

    kind is one of ``exponential`` (c e^{-a r}), ``power-law-cutoff``
    (c r^mu e^{-r/K}) or ``tabulated`` (linear interpolation, zero outside
    the grid).
    """

    kind: str
    params: tuple = ()
    grid: np.ndarray | None = field(default=None, compare=False)
    values: np.ndarray | None = field(default=None, compare=False)

    # constructors ---------------------------------------------------------
    @classmethod
    def exponential(cls, c: float = 1.0, a: float = 1.0) -> "FormFactor":
        if a <= 0:
            raise ParameterError("exponential form factor needs a > 0")
        return cls("exponential", (float(c), float(a)))

    @classmethod
    def power_law(cls, c: float = 1.0, mu: float = 0.0, K: float = 1.0) -> "FormFactor":
        if mu <= -0.5:
            raise ParameterError("power-law-cutoff form factor needs mu > -1/2")
        if K <= 0:
            raise ParameterError("cutoff K must be positive")
        return cls("power-law-cutoff", (float(c), float(mu), float(K)))

    @classmethod
    def tabulated(cls, r: Sequence[float], values: Sequence[float]) -> "FormFactor":
        r = np.asarray(r, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise ParameterError("tabulated profile needs matching 1D grids of length >= 2")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ParameterError("tabulated radial grid must be ascending and nonnegative")
        r.setflags(write=False)
        v.setflags(write=False)
        return cls("tabulated", (), r, v)

    @classmethod
    def from_file(cls, path: str | Path) -> "FormFactor":
        data = np.loadtxt(path, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise ParameterError("tabulated profile file must have two columns (r, phi)")
        return cls.tabulated(data[:, 0], data[:, 1])

    # profile --------------------------------------------------------------
    @property
    def c(self) -> float:
        if self.kind == "tabulated":
            raise AttributeError("tabulated profiles carry no amplitude parameter")
        return self.params[0]

    def scaled(self, s: float) -> "FormFactor":
        if self.kind == "exponential":
            return FormFactor.exponential(s * self.params[0], self.params[1])
        if self.kind == "power-law-cutoff":
            c, mu, K = self.params
            return FormFactor.power_law(s * c, mu, K)
        return FormFactor.tabulated(self.grid, s * self.values)

    def phi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "exponential":
            c, a = self.params
            return c * np.exp(-a * r)
        if self.kind == "power-law-cutoff":
            c, mu, K = self.params
            with np.errstate(divide="ignore", invalid="ignore"):
                out = c * np.power(r, mu) * np.exp(-r / K)
            return np.where(r > 0, out, 0.0 if mu > 0 else (c if mu == 0 else np.inf))
        return np.interp(r, self.grid, self.values, left=0.0, right=0.0) * (
            (r >= self.grid[0]) & (r <= self.grid[-1]))

    def spectral_density(self, w) -> np.ndarray:
        """J(w) = 4 pi w^2 |phi(w)|^2 for w > 0, zero otherwise."""
        w = np.asarray(w, dtype=float)
        pos = w > 0
        ww = np.where(pos, w, 1.0)
        if self.kind == "power-law-cutoff":
            c, mu, K = self.params
            val = 4 * np.pi * c * c * ww ** (2 + 2 * mu) * np.exp(-2 * ww / K)
        else:
            val = 4 * np.pi * ww * ww * np.abs(self.phi(ww)) ** 2
        return np.where(pos, val, 0.0)

    def cutoff(self) -> float:
        """Upper radius beyond which J is negligible (below ~1e-20 relative)."""
        if self.kind == "exponential":
            return 25.0 / self.params[1]
        if self.kind == "power-law-cutoff":
            _, mu, K = self.params
            return K * (25.0 + 3.0 * (1 + mu) * math.log(30.0 * (1 + mu)))
        return float(self.grid[-1])

    def breakpoints(self) -> np.ndarray:
        if self.kind == "tabulated":
            return np.asarray(self.grid)
        return np.array([0.0, self.cutoff()])

    def low_frequency_series(self) -> list[tuple[float, float]]:
        """Leading terms (coef, power) of J(w) ~ sum coef w^power as w -> 0+."""
        if self.kind == "exponential":
            c, a = self.params
            return [(4 * np.pi * c * c, 2.0), (-8 * np.pi * a * c * c, 3.0),
                    (8 * np.pi * a * a * c * c, 4.0)]
        if self.kind == "power-law-cutoff":
            c, mu, K = self.params
            p = 2 + 2 * mu
            return [(4 * np.pi * c * c, p), (-8 * np.pi * c * c / K, p + 1),
                    (8 * np.pi * c * c / K ** 2, p + 2)]
        r, v = self.grid, self.values
        if r[0] > 0:
            return []
        slope = (v[1] - v[0]) / (r[1] - r[0])
        return [(4 * np.pi * v[0] ** 2, 2.0), (8 * np.pi * v[0] * slope, 3.0),
                (4 * np.pi * slope ** 2, 4.0)]

    def closed_form_correlation(self, t) -> np.ndarray | None:
        """Analytic f(t) where available, else None."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            c, a = self.params
            return 8 * np.pi * c * c / (2 * a + 1j * t) ** 3
        if self.kind == "power-law-cutoff":
            c, mu, K = self.params
            p = 3 + 2 * mu
            return 4 * np.pi * c * c * gamma_fn(p) / (2.0 / K + 1j * t) ** p
        return None

    def l2_norms(self) -> tuple[float, float]:
        """(int J dw, int J/w dw): the squared norms of phi and phi/sqrt(omega)."""
        pts = self.breakpoints()
        a = b = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            a += quad(self.spectral_density, lo, hi, limit=_QUAD_LIMIT)[0]
            b += quad(lambda w: self.spectral_density(w) / w, lo, hi, limit=_QUAD_LIMIT)[0]
        return a, b


# ----------------------------------------------------------------------------
# coupling schedule
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplingSchedule:
    """lambda(t) = (lambda0^{1/gamma} + t)^gamma (decaying) or lambda0 (constant)."""

    kind: str
    lambda0: float
    gamma: float | None = None

    def __post_init__(self):
        if self.lambda0 <= 0:
            raise ParameterError("lambda0 must be positive")
        if self.kind == "decaying":
            if self.gamma is None or not (-0.5 < self.gamma < 0):
                raise ParameterError("gamma must lie in (-1/2, 0)")
        elif self.kind != "constant":
            raise ParameterError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def decaying(cls, lambda0: float, gamma: float) -> "CouplingSchedule":
        return cls("decaying", float(lambda0), float(gamma))

    @classmethod
    def constant(cls, lambda0: float) -> "CouplingSchedule":
        return cls("constant", float(lambda0))

    def __call__(self, t):
        return coupling_at(self, t)


def coupling_at(sched: CouplingSchedule, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError("schedule is defined for t >= 0")
    if sched.kind == "constant":
        out = np.full_like(t, sched.lambda0)
    else:
        g = sched.gamma
        out = (sched.lambda0 ** (1.0 / g) + t) ** g
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# correlation functions
# ----------------------------------------------------------------------------

def _oscillatory(fn: Callable, lo: float, hi: float, t: float, **kw) -> complex:
    """int_lo^hi fn(w) e^{-i t w} dw with QAWO weights."""
    kw.setdefault("limit", _QUAD_LIMIT)
    if t == 0.0:
        return complex(quad(fn, lo, hi, **kw)[0])
    re = quad(fn, lo, hi, weight="cos", wvar=t, **kw)[0]
    im = quad(fn, lo, hi, weight="sin", wvar=t, **kw)[0]
    return complex(re, -im)


def _segments(ff: FormFactor) -> list[tuple[float, float]]:
    pts = ff.breakpoints()
    if ff.kind != "tabulated":
        rc = pts[-1]
        # split so the peak region is resolved before the long tail
        edges = [0.0, 0.25 * rc, rc]
        return list(zip(edges[:-1], edges[1:]))
    return list(zip(pts[:-1], pts[1:]))


def _gl_transform(ff: FormFactor, t: np.ndarray, order: int = 20) -> np.ndarray:
    """Composite Gauss-Legendre on each segment; panels shrink so every panel
    spans at most a quarter period of e^{-itw} at the largest |t|."""
    tmax = float(np.max(np.abs(t), initial=0.0))
    x, w = leggauss(order)
    out = np.zeros(t.shape, dtype=complex)
    for lo, hi in _segments(ff):
        width = min(0.5, 0.5 * math.pi / max(tmax, 1e-12))
        n_pan = max(1, int(math.ceil((hi - lo) / width)))
        edges = np.linspace(lo, hi, n_pan + 1)
        half = 0.5 * np.diff(edges)
        om = (half[:, None] * x + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
        ww = (half[:, None] * w).ravel() * ff.spectral_density(om)
        for a in range(0, t.size, 256):
            seg = t[a:a + 256]
            out[a:a + 256] += np.exp(-1j * np.outer(seg, om)) @ ww
    return out


def _tabulated_transform(ff: FormFactor, t: np.ndarray, weight_fn=None) -> np.ndarray:
    """Per-segment fixed Gauss-Legendre for piecewise-polynomial profiles."""
    r = ff.grid
    lo, hi = r[:-1], r[1:]
    tmax = float(np.max(np.abs(t), initial=0.0))
    npts = int(min(200, 8 + math.ceil(tmax * float(np.max(hi - lo)))))
    x, w = leggauss(npts)
    om = (0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]).ravel()
    ww = (0.5 * (hi - lo)[:, None] * w).ravel()
    jv = ff.spectral_density(om) if weight_fn is None else weight_fn(om)
    out = np.empty(t.shape, dtype=complex)
    for idx, tt in enumerate(t.ravel()):
        out.flat[idx] = np.dot(np.exp(-1j * tt * om), ww * jv)
    return out


def correlation_function(ff: FormFactor, t, method: str = "auto"):
    """f(t) = int_0^inf J(w) e^{-itw} dw.

    method ``auto`` uses the closed form when one exists, ``quad`` always
    integrates numerically (adaptive, per time point), ``gl`` uses a fixed
    composite Gauss-Legendre rule vectorized over t, and ``closed`` requires
    the analytic expression.
    """
    t_arr = np.asarray(t, dtype=float)
    if method not in ("auto", "quad", "gl", "closed"):
        raise ParameterError(f"unknown method {method!r}")
    if method in ("auto", "closed"):
        cf = ff.closed_form_correlation(t_arr)
        if cf is not None:
            return complex(cf) if cf.ndim == 0 else cf
        if method == "closed":
            raise ParameterError(f"no closed form for {ff.kind}")
    if ff.kind == "tabulated":
        out = _tabulated_transform(ff, np.atleast_1d(t_arr))
        return complex(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)
    flat = np.atleast_1d(t_arr).ravel()
    if method == "gl":
        vals = _gl_transform(ff, flat)
        return complex(vals[0]) if t_arr.ndim == 0 else vals.reshape(t_arr.shape)
    vals = np.empty(flat.shape, dtype=complex)
    for idx, tt in enumerate(flat):
        vals[idx] = sum(_oscillatory(ff.spectral_density, lo, hi, float(tt), epsabs=1e-13,
                                     epsrel=1e-12) for lo, hi in _segments(ff))
    return complex(vals[0]) if t_arr.ndim == 0 else vals.reshape(t_arr.shape)


def bose_factor(w, beta: float) -> np.ndarray:
    """n(w) = 1/(e^{beta w} - 1), evaluated without overflow."""
    x = beta * np.asarray(w, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        return np.where(x > 700, 0.0, 1.0 / np.expm1(np.minimum(x, 700)))


def thermal_density(ff: FormFactor, w, beta: float) -> np.ndarray:
    """Two-sided density: J(w)(1+n(w)) for w > 0 and J(|w|) n(|w|) for w < 0."""
    w = np.asarray(w, dtype=float)
    a = np.abs(w)
    j = ff.spectral_density(a)
    n = bose_factor(np.where(a > 0, a, 1.0), beta)
    return np.where(w > 0, j * (1 + n), np.where(w < 0, j * n, 0.0))


def _check_infrared(ff: FormFactor) -> None:
    series = ff.low_frequency_series()
    if series and series[0][1] <= 0:
        raise AssumptionViolation("Bose-weighted density is not integrable at w -> 0")


def thermal_correlation(ff: FormFactor, beta: float, t, epsabs: float = 1e-13,
                        limit: int = _QUAD_LIMIT):
    """f_beta(t) = int J(w) [coth(beta w/2) cos(wt) - i sin(wt)] dw."""
    if beta <= 0:
        raise ParameterError("beta must be positive")
    _check_infrared(ff)

    def coth_weight(w):
        w = np.asarray(w, dtype=float)
        return ff.spectral_density(w) * (1 + 2 * bose_factor(np.where(w > 0, w, 1.0), beta))

    t_arr = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t_arr).ravel()
    vals = np.empty(flat.shape, dtype=complex)
    for idx, tt in enumerate(flat):
        tt = float(tt)
        re = im = 0.0
        for lo, hi in _segments(ff):
            if tt == 0.0:
                re += quad(coth_weight, lo, hi, limit=limit, epsabs=epsabs)[0]
            else:
                re += quad(coth_weight, lo, hi, weight="cos", wvar=tt, limit=limit,
                           epsabs=epsabs)[0]
                im -= quad(ff.spectral_density, lo, hi, weight="sin", wvar=tt, limit=limit,
                           epsabs=epsabs)[0]
        vals[idx] = complex(re, im)
    return complex(vals[0]) if t_arr.ndim == 0 else vals.reshape(t_arr.shape)


# ----------------------------------------------------------------------------
# decay and norms
# ----------------------------------------------------------------------------

def decay_exponent_estimate(ff: FormFactor, t_min: float = 10.0, t_max: float = 1e3,
                            n_points: int = 40, values: Callable | None = None) -> float:
    """Negated least-squares slope of log|f| against log(1+t) on a log grid."""
    if t_min <= 0 or t_max / t_min < 10:
        raise ParameterError("decay fit needs t_max/t_min >= 10")
    ts = np.geomspace(t_min, t_max, n_points)
    fv = np.abs(values(ts) if values is not None else correlation_function(ff, ts))
    floor = 1e-14 * max(float(np.abs(values(np.array([0.0])))[0]) if values is not None
                        else abs(correlation_function(ff, 0.0)), 1e-300)
    if np.any(fv <= floor):
        raise ParameterError("|f| drops below the floating-point noise floor in the window")
    slope = np.polyfit(np.log1p(ts), np.log(fv), 1)[0]
    return float(-slope)


def l1_norm_f(ff: FormFactor, t_tail: float = 400.0, method: str = "auto") -> float:
    """int_0^inf |f(t)| dt: adaptive quadrature to t_tail plus a power-law tail."""
    fabs = lambda t: abs(correlation_function(ff, t, method=method))
    alpha = decay_exponent_estimate(ff, t_tail / 10, t_tail, n_points=12,
                                    values=lambda ts: np.array([fabs(x) for x in ts]))
    if alpha <= 1:
        raise AssumptionViolation(f"|f| decays too slowly (alpha={alpha:.3f} <= 1)")
    pts = np.concatenate([[0.0], np.geomspace(1.0, t_tail, 16)])
    body = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        body += quad(fabs, lo, hi, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    # local exponent at the matching point for the tail
    h = 1.02
    a_loc = -math.log(fabs(t_tail * h) / fabs(t_tail)) / math.log(h)
    if a_loc <= 1:
        raise AssumptionViolation("tail exponent <= 1")
    tail = fabs(t_tail) * t_tail / (a_loc - 1)
    return float(body + tail)


@dataclass(frozen=True)
class CorrelationProfile:
    """Evaluator for f together with cached L1 norm and fitted decay exponent."""

    ff: FormFactor
    l1: float
    alpha: float

    @classmethod
    def build(cls, ff: FormFactor) -> "CorrelationProfile":
        return cls(ff, l1_norm_f(ff), decay_exponent_estimate(ff))

    def __call__(self, t):
        return correlation_function(self.ff, t)


# ----------------------------------------------------------------------------
# assumption checks
# ----------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_assumptions(atom: AtomModel, ff: FormFactor, sched: CouplingSchedule,
                         alpha_min: float = 2.0) -> AssumptionReport:
    checks = []
    l2, l2w = ff.l2_norms()
    checks.append(CheckResult("phi in L2", bool(np.isfinite(l2)), f"{l2:.6g}"))
    checks.append(CheckResult("phi/sqrt(omega) in L2", bool(np.isfinite(l2w)), f"{l2w:.6g}"))
    try:
        alpha = decay_exponent_estimate(ff)
        checks.append(CheckResult("alpha > 2", alpha > alpha_min, f"alpha={alpha:.4f}"))
    except ParameterError as exc:
        checks.append(CheckResult("alpha > 2", False, str(exc)))
    if sched.kind == "decaying":
        checks.append(CheckResult("gamma in (-1/2,0)", True, f"gamma={sched.gamma}"))
    else:
        checks.append(CheckResult("gamma in (-1/2,0)", False, "constant schedule"))
    checks.append(CheckResult("non-degenerate energies", atom.is_ascending(),
                              f"E={list(atom.energies)}"))
    checks.append(CheckResult("non-degenerate Bohr frequencies",
                              atom.is_ascending() and not atom.bohr_degenerate(), ""))
    return AssumptionReport(checks)


def check_schedule_params(lambda0: float, gamma: float) -> CheckResult:
    """Range check without constructing a schedule (which would raise)."""
    ok = -0.5 < gamma < 0 and lambda0 > 0
    return CheckResult("gamma in (-1/2,0)", ok, f"gamma={gamma}")


# ----------------------------------------------------------------------------
# few-photon overlaps
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PhotonProfile:
    """One-photon profile f(|k|) Y_lm; for l >= 1 its overlap with a radial phi vanishes."""

    radial: Callable[[np.ndarray], np.ndarray]
    l: int = 0


def overlap_function(ff: FormFactor, prof: PhotonProfile, t, epsabs: float = 1e-14,
                     limit: int = _QUAD_LIMIT):
    """<f, phi_t> = 4 pi int r^2 conj(f(r)) phi(r) e^{-itr} dr."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if prof.l != 0:
        out = np.zeros(t_arr.shape, dtype=complex)
    else:
        integrand = lambda r: 4 * np.pi * r * r * np.conj(prof.radial(r)).real * ff.phi(r)
        out = np.array([sum(_oscillatory(integrand, lo, hi, float(tt), epsabs=epsabs,
                                         limit=limit) for lo, hi in _segments(ff))
                        for tt in t_arr])
    return complex(out[0]) if np.ndim(t) == 0 else out


def overlap_decay_check(ff: FormFactor, prof: PhotonProfile,
                        window: tuple[float, float] = (10.0, 1e3),
                        alpha_min: float = 2.0) -> tuple[float, bool]:
    """Fitted decay exponent of |<f, phi_t>| and whether it exceeds alpha_min."""
    if prof.l != 0:
        return math.inf, True
    ts = np.geomspace(window[0], window[1], 30)
    vals = np.abs(overlap_function(ff, prof, ts))
    if np.all(vals == 0):
        return math.inf, True
    scale = abs(overlap_function(ff, prof, 0.0))
    if np.any(vals <= 1e-14 * max(scale, 1e-300)):
        warnings.warn("overlap below noise floor in window", PrecisionWarning, stacklevel=2)
        raise ParameterError("overlap below noise floor in the fit window")
    slope = np.polyfit(np.log1p(ts), np.log(vals), 1)[0]
    expo = float(-slope)
    return expo, expo > alpha_min


def correlation_on_grid(ff: FormFactor, s, beta: float | None = None,
                        nodes_per_panel: int = 16) -> np.ndarray:
    """Vectorized f(s) (beta None) or f_beta(s) on an array of times.

    Closed forms are used for the vacuum exponential and power-law families;
    otherwise a composite Gauss-Legendre rule on [0, r_cut] whose panels
    resolve the fastest oscillation e^{-i s_max w}.
    """
    s = np.asarray(s, dtype=float)
    if beta is None:
        cf = ff.closed_form_correlation(s)
        if cf is not None:
            return cf
    else:
        if beta <= 0:
            raise ParameterError("beta must be positive")
        _check_infrared(ff)
    smax = float(np.max(np.abs(s), initial=0.0))
    if ff.kind == "tabulated":
        edges = np.asarray(ff.grid)
        width = max(float(np.max(np.diff(edges))), 1e-300)
        sub = max(1, int(math.ceil(width * max(smax, 1.0) / 8.0)))
        edges = np.interp(np.linspace(0, edges.size - 1, (edges.size - 1) * sub + 1),
                          np.arange(edges.size), edges)
    else:
        rc = ff.cutoff()
        n_pan = max(8, int(math.ceil(rc * max(smax, 1.0) / 8.0)))
        edges = np.linspace(0.0, rc, n_pan + 1)
    x, w = leggauss(nodes_per_panel)
    lo, hi = edges[:-1], edges[1:]
    om = (0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]).ravel()
    ww = (0.5 * (hi - lo)[:, None] * w).ravel()
    jv = ff.spectral_density(om)
    if beta is None:
        wc = ws = ww * jv
    else:
        wc = ww * jv * (1 + 2 * bose_factor(om, beta))
        ws = ww * jv
    flat = s.ravel()
    out = np.empty(flat.shape, dtype=complex)
    chunk = max(1, int(4e6 // max(om.size, 1)))
    for a in range(0, flat.size, chunk):
        ph = np.outer(flat[a:a + chunk], om)
        out[a:a + chunk] = np.cos(ph) @ wc - 1j * (np.sin(ph) @ ws)
    return out.reshape(s.shape)


def asymptotic_tail_terms(ff: FormFactor, beta: float | None = None) -> list[tuple[complex, float]]:
    """Large-s expansion f(s) ~ sum A s^{-q} as a list of (A, q).

    Each term c w^p of the low-frequency series of the (coth-weighted) density
    contributes c Gamma(p+1) (i s)^{-(p+1)}; for f_beta the cosine part uses
    J coth(beta w/2) and the sine part is the vacuum one.
    """
    series = ff.low_frequency_series()
    vac = [(c * gamma_fn(p + 1) * (1j) ** (-(p + 1)), p + 1.0) for c, p in series]
    if beta is None:
        return vac
    # coth(x/2) ~ 2/x + x/6 - x^3/360
    coth = [(2.0 / beta, -1.0), (beta / 6.0, 1.0), (-beta ** 3 / 360.0, 3.0)]
    terms = [(1j * A.imag, q) for A, q in vac]
    for c, p in series:
        for d, e in coth:
            a = p + e
            terms.append(((c * d * gamma_fn(a + 1) * (1j) ** (-(a + 1))).real, a + 1.0))
    return terms
