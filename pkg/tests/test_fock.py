import math
import warnings

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import comb

from atomprep.errors import GuardError, ParameterError, RecurrenceWarning
from atomprep.fock import (
    FockBasis,
    InitialStateSpec,
    KrylovStepper,
    TruncatedState,
    build_hamiltonian,
    discretize_field,
    effective_Z,
    initial_state,
    mode_profile,
    prepare_experiment,
    product_state,
    propagate,
    single_mode_field,
    truncation_sweep,
)
from atomprep.model import correlation_function
from atomprep.superop import vec


@pytest.mark.parametrize("M, n_max", [(3, 2), (5, 3), (8, 1)])
def test_basis_size_and_index(M, n_max):
    b = FockBasis.build(M, n_max)
    assert b.size == comb(M + n_max, n_max, exact=True)
    assert b.index_of(()) == 0
    if n_max >= 2:
        assert b.index_of((1, 0)) == b.index_of((0, 1))
    with pytest.raises(KeyError):
        b.index_of(tuple([0] * (n_max + 1)))


def test_basis_guard():
    with pytest.raises(GuardError):
        FockBasis.build(200, 4, max_size=1000)


def test_creation_single_mode_matrix():
    b = FockBasis.build(1, 3)
    Ad = b.creation(np.array([1.0])).toarray()
    assert np.allclose(Ad, np.diag(np.sqrt([1.0, 2.0, 3.0]), -1))


def test_creation_commutator_on_low_layers(rng):
    b = FockBasis.build(4, 3)
    f, g = rng.normal(size=4), rng.normal(size=4)
    Af, Ag = b.creation(f).toarray(), b.creation(g).toarray()
    comm = Af.T @ Ag - Ag @ Af.T
    low = b.photon_number() < 3
    assert np.allclose(comm[np.ix_(low, low)], np.dot(f, g) * np.eye(low.sum()))


def test_field_reconstructs_correlation(expo):
    fld = discretize_field(expo, 96, 8.0)
    assert np.sum(fld.g ** 2) == pytest.approx(correlation_function(expo, 0.0).real, rel=1e-10)
    assert fld.reconstruction_error(expo, T=20.0) < 1e-4


def test_discretize_rejects_bad_args(expo):
    with pytest.raises(ParameterError):
        discretize_field(expo, 1, 5.0)
    with pytest.raises(ParameterError):
        discretize_field(expo, 8, 0.0)


def test_propagate_matches_dense_exponential(sigma_x):
    fld = single_mode_field(1.1, 0.4)
    ham = build_hamiltonian(sigma_x, fld, 4)
    psi0 = product_state(ham, 1)
    st = propagate(ham, 0.3, psi0, 0.0, 3.0, dt=0.25)
    ref = expm(-1j * 3.0 * ham.full(0.3).toarray()) @ psi0.ravel()
    assert np.max(np.abs(st.psi.ravel() - ref)) < 1e-9


def test_krylov_zero_vector():
    ks = KrylovStepper(3)
    out = ks.step(lambda v: 2 * v, np.zeros(3, dtype=complex), 1.0)
    assert np.all(out == 0)


def test_effective_Z_unital_and_identity_at_zero_time(sigma_x, expo):
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 24, 5.0), 2)
    Z = effective_Z(ham, 0.05, 0.0, 1.0)
    assert np.max(np.abs(Z.apply(np.eye(2)) - np.eye(2))) < 1e-12
    Z0 = effective_Z(ham, 0.05, 0.0, 0.0)
    assert np.allclose(Z0.matrix, np.eye(4))


def test_effective_Z_free_evolution(sigma_x, expo):
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 16, 5.0), 1)
    Z = effective_Z(ham, None, 0.0, 2.0)
    eps = sigma_x.bohr_frequencies().ravel()
    assert np.allclose(Z.matrix, np.diag(np.exp(2.0j * eps)), atol=1e-10)


def test_recurrence_warning(sigma_x, expo):
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 8, 5.0), 1)
    with pytest.warns(RecurrenceWarning):
        propagate(ham, 0.1, product_state(ham, 1), 0.0, 0.9 * ham.fld.recurrence_time, dt=1.0)


def test_prepare_trace_shapes(sigma_x, expo, decaying):
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 32, 5.0), 1)
    tr = prepare_experiment(ham, decaying, InitialStateSpec(1), 4.0, sample_every=1.0)
    assert tr.t.tolist() == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert np.allclose(tr.populations.sum(axis=1), tr.norms ** 2)
    assert tr.header() == ["t", "pop_1", "pop_2", "re_obs", "im_obs", "norm"]
    assert len(next(tr.rows())) == 6


def test_photon_initial_state_normalized(sigma_x, expo):
    ham = build_hamiltonian(sigma_x, discretize_field(expo, 16, 5.0), 2)
    prof = mode_profile(ham.fld, lambda r: r * np.exp(-r))
    psi = initial_state(ham, InitialStateSpec(1, (prof,)))
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    assert np.sum(np.abs(psi[1, 1:17]) ** 2) == pytest.approx(1.0)


def test_truncated_state_roundtrip(tmp_path, rng):
    st = TruncatedState(rng.normal(size=(2, 5)) + 0j, 1.5, "abc")
    st.save(tmp_path / "s.bin")
    back = TruncatedState.load(tmp_path / "s.bin")
    assert np.array_equal(back.psi, st.psi) and back.t == 1.5 and back.basis_hash == "abc"


def test_truncation_sweep_small(sigma_x, expo, decaying):
    fld = discretize_field(expo, 16, 5.0)
    out = truncation_sweep(sigma_x, fld, decaying, lambda h: InitialStateSpec(1), 5.0, (1, 2))
    assert set(out["finals"]) == {1, 2}
    assert len(out["increments"]) == 1
