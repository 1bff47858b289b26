"""Liouville-space algebra on n x n matrices.

A superoperator is stored as an n^2 x n^2 matrix acting on row-major
vectorizations, so coordinate ``i*n + j`` is the matrix unit
Pi_ij = |i><j|.  In this basis ``L(A) = A (x) 1`` and
``R(A) = 1 (x) conj(A)`` where ``R(A) X = X A^dagger``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import ParameterError, PrecisionWarning


def vec(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(X, dtype=complex).reshape(-1)


def unvec(v: np.ndarray, n: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if n is None:
        n = math.isqrt(v.size)
    if n * n != v.size:
        raise ParameterError("vector length is not a perfect square")
    return v.reshape(n, n)


def matrix_unit(n: int, i: int, j: int) -> np.ndarray:
    out = np.zeros((n, n), dtype=complex)
    out[i, j] = 1.0
    return out


@dataclass(frozen=True)
class Superoperator:
    """Immutable n^2 x n^2 matrix in the Pi_ij basis."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError("superoperator matrix must be square")
        n = math.isqrt(m.shape[0])
        if n * n != m.shape[0]:
            raise ParameterError("superoperator size must be a perfect square")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return math.isqrt(self.matrix.shape[0])

    @classmethod
    def identity(cls, n: int) -> "Superoperator":
        return cls(np.eye(n * n, dtype=complex))

    @classmethod
    def zero(cls, n: int) -> "Superoperator":
        return cls(np.zeros((n * n, n * n), dtype=complex))

    @classmethod
    def from_map(cls, fn, n: int) -> "Superoperator":
        """Tabulate a linear map X -> fn(X) column by column."""
        cols = [vec(fn(matrix_unit(n, i, j))) for i in range(n) for j in range(n)]
        return cls(np.stack(cols, axis=1))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.shape != (self.n, self.n):
            raise ParameterError(f"expected {self.n}x{self.n} input, got {X.shape}")
        return unvec(self.matrix @ vec(X), self.n)

    __call__ = apply

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        _check_same(self, other)
        return Superoperator(self.matrix @ other.matrix)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        _check_same(self, other)
        return Superoperator(self.matrix + other.matrix)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        _check_same(self, other)
        return Superoperator(self.matrix - other.matrix)

    def __mul__(self, c: complex) -> "Superoperator":
        return Superoperator(c * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "Superoperator":
        return Superoperator(-self.matrix)

    def adjoint(self) -> "Superoperator":
        """Hilbert-Schmidt adjoint."""
        return Superoperator(self.matrix.conj().T)

    def to_csv(self, path: str | Path) -> None:
        """Debug dump: one row per nonzero entry (row, col, re, im)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "re", "im"])
            rows, cols = np.nonzero(self.matrix)
            for r, c in zip(rows, cols):
                z = self.matrix[r, c]
                w.writerow([int(r), int(c), repr(float(z.real)), repr(float(z.imag))])


def _check_same(a: Superoperator, b: Superoperator) -> None:
    if a.matrix.shape != b.matrix.shape:
        raise ParameterError("superoperator dimensions differ")


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("expected a square matrix")
    return A


def left_mult(A) -> Superoperator:
    """L(A): X -> A X."""
    A = _square(A)
    return Superoperator(np.kron(A, np.eye(A.shape[0])))


def right_mult_star(A) -> Superoperator:
    """R(A): X -> X A^dagger (antilinear in A)."""
    A = _square(A)
    return Superoperator(np.kron(np.eye(A.shape[0]), A.conj()))


def commutator(H) -> Superoperator:
    """X -> [H, X] for Hermitian H, i.e. L(H) - R(H)."""
    return left_mult(H) - right_mult_star(H)


def hs_inner(X, Y) -> complex:
    """Tr(X^dagger Y)."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ParameterError("dimension mismatch")
    return complex(np.vdot(X, Y))


@dataclass(frozen=True)
class MatrixObservable:
    X: np.ndarray

    @property
    def hermitian(self) -> bool:
        return bool(np.max(np.abs(self.X - self.X.conj().T), initial=0.0) <= 1e-12)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.X))


# ----------------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------------

def op_norm_2(S: Superoperator) -> float:
    """Largest singular value of the stored matrix (Hilbert-Schmidt induced norm)."""
    return float(np.linalg.norm(S.matrix, 2))


@dataclass(frozen=True)
class NormBracket:
    lower: float
    upper: float
    converged: bool

    @property
    def value(self) -> float:
        return self.lower if self.converged else 0.5 * (self.lower + self.upper)

    def __float__(self) -> float:
        return self.value


def _operator_schmidt_bound(S: Superoperator) -> float:
    """sum_r sigma_r ||A_r|| ||B_r|| from S = sum_r sigma_r L(A_r) R(B_r)."""
    n = S.n
    # S[(i,j),(k,l)] = sum_r s_r A[i,k] conj(B[j,l]); regroup to (ik),(jl)
    T = S.matrix.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)
    U, s, Vh = np.linalg.svd(T)
    total = 0.0
    for r in range(s.size):
        if s[r] <= 1e-15 * s[0]:
            break
        A = U[:, r].reshape(n, n)
        B = Vh[r].conj().reshape(n, n)
        total += s[r] * np.linalg.norm(A, 2) * np.linalg.norm(B, 2)
    return float(total)


def op_norm_inf(S: Superoperator, restarts: int = 8, iters: int = 200, tol: float = 1e-12,
                rng: np.random.Generator | None = None) -> NormBracket:
    """sup ||S X|| / ||X|| over matrices with the spectral norm.

    The lower end comes from an alternating maximization (on the extreme
    points of the unit ball, i.e. unitaries, paired with rank-one dual
    functionals) with random restarts; the upper end is the smaller of the
    norm-equivalence bound sqrt(n)||S||_2 and the operator-Schmidt bound.
    ``converged`` is set when the two ends meet to ``tol`` relative.
    """
    n = S.n
    rng = np.random.default_rng(0) if rng is None else rng
    upper = min(math.sqrt(n) * op_norm_2(S), _operator_schmidt_bound(S))
    Sm = S.matrix
    SH = Sm.conj().T
    best = 0.0
    starts = [np.eye(n, dtype=complex)]
    for _ in range(restarts):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        starts.append(np.linalg.qr(a)[0])
    for U in starts:
        val = 0.0
        for _ in range(iters):
            Y = unvec(Sm @ vec(U), n)
            u, s, vh = np.linalg.svd(Y)
            new = float(s[0])
            # dual functional W = u1 v1^dagger, then the best unitary for Re<W, S(.)>
            W = np.outer(u[:, 0], vh[0])
            Gm = unvec(SH @ vec(W), n)
            uu, _, vvh = np.linalg.svd(Gm)
            U = uu @ vvh
            if new <= val * (1 + 1e-14):
                val = max(val, new)
                break
            val = new
        best = max(best, val)
    upper = max(upper, best)
    converged = upper - best <= tol * max(upper, 1e-300)
    return NormBracket(best, upper, converged)


# ----------------------------------------------------------------------------
# exponentials
# ----------------------------------------------------------------------------

def expm(S: Superoperator, t: float = 1.0) -> Superoperator:
    """e^{tS} by scipy's scaling-and-squaring Pade algorithm.

    For very large t||S|| the step is split into pieces so that each piece has
    norm below 500, which keeps the squaring phase from overflowing.
    """
    A = t * S.matrix
    if not np.all(np.isfinite(A)):
        raise ParameterError("non-finite superoperator entries")
    nrm = float(np.linalg.norm(A, 1))
    if nrm <= 500.0:
        return Superoperator(sla.expm(A))
    pieces = int(math.ceil(nrm / 500.0))
    step = sla.expm(A / pieces)
    out = np.linalg.matrix_power(step, pieces)
    if not np.all(np.isfinite(out)):
        warnings.warn("matrix exponential overflowed", PrecisionWarning, stacklevel=2)
    return Superoperator(out)
