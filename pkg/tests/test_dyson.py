import math
import warnings

import numpy as np
import pytest

from atomprep.dyson import (
    KernelTable,
    Pairing,
    _order_integrand,
    compare_Z0_lindblad,
    contraction_sequence,
    double_factorial,
    dyson_Z,
    dyson_Z0,
    lemma_difference_bound,
    pairings,
    r_assignments,
    riesz_decomposition,
    simplex_qmc,
    simplex_rule,
    truncation_tail_bound,
    vanhove_contraction_profile,
)
from atomprep.errors import DecompositionError, ParameterError, PrecisionWarning
from atomprep.fock import build_hamiltonian, discretize_field, effective_Z
from atomprep.lindblad import lindbladian_closed_form, semigroup
from atomprep.model import AtomModel, CouplingSchedule, correlation_on_grid, coupling_at, l1_norm_f
from atomprep.superop import Superoperator, left_mult, op_norm_inf, right_mult_star, vec


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_pairing_count(k):
    ps = pairings(k)
    assert len(ps) == double_factorial(2 * k - 1)
    assert len(set(ps)) == len(ps)
    for p in ps:
        assert sorted(x for pr in p for x in pr) == list(range(2 * k))
        assert all(a < b for a, b in p)
    assert sum(1 for _ in r_assignments(k)) == 4 ** k


def test_pairing_validation():
    Pairing((0.1,), (0.2,), (0,), (1,))
    with pytest.raises(ParameterError):
        Pairing((0.3,), (0.2,), (0,), (1,))
    with pytest.raises(ParameterError):
        Pairing((0.1, 0.05), (0.2, 0.3), (0, 0), (1, 1))
    with pytest.raises(ParameterError):
        Pairing((0.1,), (0.2,), (2,), (1,))


def test_kernel_table_case_b(sigma_x, expo):
    kt = KernelTable(sigma_x, expo)
    u, v = 0.3, 1.1
    Gu = np.diag(np.exp(1j * u * np.array([0.0, 1.0]))) @ sigma_x.coupling @ np.diag(np.exp(-1j * u * np.array([0.0, 1.0])))
    Gv = np.diag(np.exp(1j * v * np.array([0.0, 1.0]))) @ sigma_x.coupling @ np.diag(np.exp(-1j * v * np.array([0.0, 1.0])))
    f = correlation_on_grid(expo, np.array([u - v]))[0]
    ref = f * left_mult(1j * Gu).matrix @ right_mult_star(1j * Gv).matrix
    assert np.allclose(kt.amplitude("b", u, v), ref)


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_simplex_rule_volume_and_moment(dim):
    Y, W = simplex_rule(dim, 10)
    assert W.sum() == pytest.approx(1 / math.factorial(dim), rel=1e-12)
    assert np.all(np.diff(Y, axis=1) >= 0)
    # int over the ordered simplex of y_dim equals dim / (dim + 1)!
    assert np.dot(W, Y[:, -1]) == pytest.approx(dim / math.factorial(dim + 1), rel=1e-12)


def test_simplex_qmc_volume():
    reps = simplex_qmc(4, 12, seed=3)
    assert len(reps) == 4
    vols = [W.sum() * math.factorial(4) for _, W in reps]
    assert np.allclose(vols, 1.0, rtol=5e-3)
    assert np.mean([np.dot(W, Y[:, -1]) for Y, W in reps]) == pytest.approx(4 / 120, rel=2e-2)


@pytest.mark.parametrize("k", [1, 2])
def test_summed_matches_explicit_assignments(sigma_x, expo, rng, k):
    X = np.sort(rng.uniform(0, 3, size=(7, 2 * k)), axis=1)
    lam = lambda x: np.full_like(x, 0.1)
    a = _order_integrand(sigma_x, expo, lam, X, k)
    b = _order_integrand(sigma_x, expo, lam, X, k, explicit=True)
    assert np.max(np.abs(a - b)) < 1e-12


def test_dyson_unital(sigma_x, expo):
    r = dyson_Z0(sigma_x, expo, 0.05, 0.0, 1.0, k_max=2, rules={2: [simplex_rule(4, 10)]})
    assert np.max(np.abs(r.apply(np.eye(2)) - np.eye(2))) < 1e-13
    assert len(r.terms) == 3


def test_dyson_zero_order_is_free(sigma_x, expo):
    r = dyson_Z0(sigma_x, expo, 0.05, 0.5, 2.0, k_max=0, tol=1.0)
    eps = sigma_x.bohr_frequencies().ravel()
    assert np.allclose(r.Z.matrix, np.diag(np.exp(1.5j * eps)))


def test_dyson_matches_oracle_short_horizon(sigma_x, expo):
    # oracle converged at (M, r_max, n_max) = (64, 10, 3)
    lam = 0.05
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 64, 10.0), 3)
    Zo = effective_Z(ham, lam, 0.0, 1.0, 0.25).matrix
    r = dyson_Z0(sigma_x, expo, lam, 0.0, 1.0, k_max=2)
    assert np.max(np.abs(r.Z.matrix - Zo)) < 1e-6


def test_dyson_constant_schedule_equals_Z0(sigma_x, expo):
    rules = {1: [simplex_rule(2, 16)], 2: [simplex_rule(4, 8)]}
    a = dyson_Z(sigma_x, expo, CouplingSchedule.constant(0.07), 0.2, 1.2, rules=rules)
    b = dyson_Z0(sigma_x, expo, 0.07, 0.2, 1.2, rules=rules)
    assert np.allclose(a.Z.matrix, b.Z.matrix, atol=1e-14)


def test_dyson_tail_bound_and_warning(sigma_x, expo):
    x = 4 * 2.0 * l1_norm_f(expo) * 0.3 ** 2
    assert truncation_tail_bound(x, 1) == pytest.approx(math.exp(x) - 1 - x)
    with pytest.warns(PrecisionWarning):
        r = dyson_Z0(sigma_x, expo, 0.3, 0.0, 2.0, k_max=1, tol=1e-3)
    assert r.tail_bound == pytest.approx(math.exp(x) - 1 - x, rel=1e-6)
    assert r.warnings


def test_dyson_rejects_bad_input(sigma_x, expo):
    with pytest.raises(ParameterError):
        dyson_Z0(sigma_x, expo, 0.1, 1.0, 1.0)
    with pytest.raises(ParameterError):
        dyson_Z0(sigma_x, expo, 0.1, 0.0, 1.0, k_max=4)


def test_lemma_difference_bound_sign(sigma_x, expo, decaying):
    l1 = l1_norm_f(expo)
    assert lemma_difference_bound(sigma_x, l1, decaying, 0.0, 5.0) > 0
    assert lemma_difference_bound(sigma_x, l1, CouplingSchedule.constant(0.1), 0.0, 5.0) == 0


def test_compare_zero_coupling_returns_zero(expo):
    atom = AtomModel(np.array([0.0, 1.0]), np.zeros((2, 2)))
    res = compare_Z0_lindblad(atom, expo, 0.1, 0.0, 0.05)
    assert res.lhs_norm == 0.0


def test_riesz_on_semigroup(sigma_x, expo):
    gen = lindbladian_closed_form(sigma_x, expo)
    Z = semigroup(sigma_x, gen, 0.1, 0.5 / 0.01)
    split = riesz_decomposition(Z)
    P = split.P.matrix
    target = np.outer(vec(np.eye(2)), vec(np.diag([1.0, 0.0])).conj())
    assert np.max(np.abs(P - target)) < 1e-10
    assert np.max(np.abs(P @ P - P)) < 1e-12
    R = split.R.matrix
    assert np.max(np.abs(P @ R)) < 1e-12 and np.max(np.abs(R @ P)) < 1e-12
    c = riesz_decomposition(Z, method="contour")
    assert np.max(np.abs(c.P.matrix - P)) < 1e-10


def test_riesz_rejects_identity():
    with pytest.raises(DecompositionError):
        riesz_decomposition(Superoperator.identity(2))


def test_profile_surrogate_monotone(sigma_x, expo, decaying):
    rows = vanhove_contraction_profile(sigma_x, expo, decaying, 0.3, 4)
    assert all(r.pi_deviation < 1e-10 for r in rows)
    assert all(r.norm_R < 1 for r in rows)
    assert contraction_sequence(rows).shape == (3,)
    with pytest.raises(ParameterError):
        vanhove_contraction_profile(sigma_x, expo, CouplingSchedule.constant(0.1), 0.3, 2)


def test_lemma_difference_inequality_random_models(expo, rng):
    sched = CouplingSchedule.decaying(0.1, -0.25)
    l1 = l1_norm_f(expo)
    fld = discretize_field(expo, 32, 5.0)
    s, t = 1.0, 4.0
    for trial in range(10):
        atom = AtomModel.random(2 + trial % 2, rng)
        ham = build_hamiltonian(atom, fld, 2)
        Z = effective_Z(ham, sched, s, t)
        Z0 = effective_Z(ham, float(coupling_at(sched, s)), s, t)
        lhs = op_norm_inf(Z - Z0).lower
        assert 0 < lhs <= lemma_difference_bound(atom, l1, sched, s, t)
