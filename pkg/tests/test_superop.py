import numpy as np
import pytest

from atomprep.errors import ParameterError
from atomprep.superop import (
    MatrixObservable,
    Superoperator,
    commutator,
    expm,
    hs_inner,
    left_mult,
    matrix_unit,
    op_norm_2,
    op_norm_inf,
    right_mult_star,
    unvec,
    vec,
)


def _rand(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_vec_roundtrip(rng):
    X = _rand(rng, 3)
    assert np.array_equal(unvec(vec(X)), X)


def test_left_right_mult(rng):
    A, B, X = _rand(rng, 3), _rand(rng, 3), _rand(rng, 3)
    assert np.allclose(left_mult(A).apply(X), A @ X)
    assert np.allclose(right_mult_star(B).apply(X), X @ B.conj().T)
    H = A + A.conj().T
    assert np.allclose(commutator(H).apply(X), H @ X - X @ H)


def test_algebra(rng):
    A, B = Superoperator(_rand(rng, 4)), Superoperator(_rand(rng, 4))
    X = _rand(rng, 2)
    assert np.allclose((A @ B).apply(X), A.apply(B.apply(X)))
    assert np.allclose((A + B - A * 2).apply(X), B.apply(X) - A.apply(X))
    assert np.allclose((-A).apply(X), -A.apply(X))


def test_adjoint_is_hs_dual(rng):
    S = Superoperator(_rand(rng, 9))
    X, Y = _rand(rng, 3), _rand(rng, 3)
    assert hs_inner(Y, S.apply(X)) == pytest.approx(hs_inner(S.adjoint().apply(Y), X))


def test_matrix_unit():
    E = matrix_unit(3, 1, 2)
    assert E[1, 2] == 1 and np.count_nonzero(E) == 1


def test_non_square_rejected():
    with pytest.raises(ParameterError):
        Superoperator(np.zeros((3, 3)))


def test_norm_inf_unitary_conjugation(rng):
    U = np.linalg.qr(_rand(rng, 3))[0]
    S = left_mult(U) @ right_mult_star(U)
    nb = op_norm_inf(S)
    assert nb.lower == pytest.approx(1.0, abs=1e-10)
    assert nb.lower <= nb.upper + 1e-12


def test_norm_inf_transpose_not_converged_to_hs():
    # X -> X^T has spectral-norm 1 but Hilbert-Schmidt norm 1 too; trace map has norm n
    n = 3
    tr = Superoperator.from_map(lambda X: np.trace(X) * np.eye(n), n)
    nb = op_norm_inf(tr)
    assert nb.lower == pytest.approx(n, rel=1e-10)
    assert op_norm_2(tr) == pytest.approx(n, rel=1e-10)


def test_norm_inf_bracket_random(rng):
    for _ in range(5):
        S = Superoperator(_rand(rng, 4))
        nb = op_norm_inf(S)
        assert nb.lower <= nb.upper * (1 + 1e-12)
        assert nb.lower >= op_norm_2(S) / 2 - 1e-12


def test_expm_matches_scipy_and_splits(rng):
    from scipy.linalg import expm as sexpm

    A = Superoperator(_rand(rng, 4))
    assert np.allclose(expm(A, 0.3).matrix, sexpm(0.3 * A.matrix))
    D = Superoperator(np.diag([-400.0, -1.0, 0.0, -2000.0]).astype(complex))
    assert np.allclose(expm(D, 1.0).matrix, np.diag(np.exp([-400.0, -1.0, 0.0, -2000.0])))


def test_matrix_observable():
    O = MatrixObservable(np.diag([1.0, 2.0]))
    assert O.hermitian and O.trace == 3
