import math

import numpy as np
import pytest

from atomprep.errors import AssumptionViolation, DegenerateSpectrumError, ParameterError
from atomprep.lindblad import (
    choi_diagnostic,
    fermi_golden_rule,
    gibbs_state,
    half_line_transform,
    lindbladian_closed_form,
    lindbladian_direct,
    lindbladian_thermal,
    liouvillian,
    schrodinger_evolve,
    semigroup,
    spectral_check,
    stationary_left_vector,
)
from atomprep.model import AtomModel, FormFactor
from atomprep.superop import vec

# frozen from the independent closed-form calculation for sigma_x, exponential profile
M21 = 8 * math.pi ** 2 * math.exp(-2)
RE_M12 = -4 * math.pi ** 2 * math.exp(-2)


def test_liouvillian_diagonal(sigma_x):
    L = liouvillian(sigma_x)
    assert np.allclose(np.diag(L.matrix), [0, -1, 1, 0])


def test_fgr_sigma_x(sigma_x, expo):
    rep = fermi_golden_rule(sigma_x, expo)
    assert rep.passed
    assert rep.rates[2] == pytest.approx(1.70067332635, abs=1e-9)


def test_fgr_fails_on_zero_coupling(expo):
    atom = AtomModel(np.array([0.0, 1.0]), np.diag([1.0, -1.0]).astype(complex))
    assert not fermi_golden_rule(atom, expo).passed


def test_sigma_x_entries(sigma_x, expo):
    gen = lindbladian_closed_form(sigma_x, expo)
    T = gen.population_block()
    assert T[1, 0].real == pytest.approx(M21, abs=1e-6)
    assert gen.coherence_rates()[0, 1].real == pytest.approx(RE_M12, abs=1e-6)


def test_half_line_spectral_vs_time(expo):
    eps = 1.3
    h = half_line_transform(expo, eps)
    assert h.real == pytest.approx(math.pi * expo.spectral_density(eps), rel=1e-12)
    assert abs(h - half_line_transform(expo, eps, method="time")) < 1e-7


def test_direct_matches_closed(sigma_x, expo):
    a = lindbladian_closed_form(sigma_x, expo).matrix
    b = lindbladian_direct(sigma_x, expo).matrix
    assert np.max(np.abs(a - b)) < 1e-5


def test_unit_preserved_and_ground_stationary(expo, rng):
    atom = AtomModel.random(3, rng)
    gen = lindbladian_closed_form(atom, expo)
    assert np.max(np.abs(gen.matrix @ vec(np.eye(3)))) < 1e-12
    rho = stationary_left_vector(gen)
    assert abs(rho[0, 0] - 1) < 1e-9


def test_spectral_check_flags_zero_coupling(expo):
    atom = AtomModel(np.array([0.0, 1.0]), np.diag([1.0, -1.0]).astype(complex))
    gen = lindbladian_closed_form(atom, expo)
    rep = spectral_check(gen)
    assert not rep.gap_pass
    with pytest.raises(AssumptionViolation):
        stationary_left_vector(gen)


def test_degenerate_bohr_needs_opt_in(expo):
    atom = AtomModel.ladder([0.0, 1.0, 2.0])
    with pytest.raises(DegenerateSpectrumError):
        lindbladian_closed_form(atom, expo)
    gen = lindbladian_closed_form(atom, expo, allow_degenerate=True)
    assert spectral_check(gen).gap_pass


def test_thermal_detailed_balance(sigma_x, expo):
    beta = 1.0
    T = lindbladian_thermal(sigma_x, expo, beta).population_block().real
    assert T[0, 1] / T[1, 0] == pytest.approx(math.exp(-beta), rel=1e-8)
    assert np.allclose(T.sum(axis=1), 0, atol=1e-12)


def test_thermal_rejects_bad_beta(sigma_x, expo):
    with pytest.raises(ParameterError):
        lindbladian_thermal(sigma_x, expo, 0.0)


def test_semigroup_contraction_to_ground(sigma_x, expo):
    gen = lindbladian_closed_form(sigma_x, expo)
    rho = schrodinger_evolve(sigma_x, gen, 0.3, 200.0, np.diag([0.0, 1.0]).astype(complex))
    assert abs(rho[0, 0] - 1) < 1e-10
    assert np.allclose(semigroup(sigma_x, gen, 0.3, 0.0).matrix, np.eye(4))


def test_gibbs_state():
    atom = AtomModel.ladder([0.0, 1.0, 2.3])
    g = gibbs_state(atom, 2.0)
    assert np.trace(g).real == pytest.approx(1.0)
    assert g[1, 1].real / g[0, 0].real == pytest.approx(math.exp(-2.0))


def test_choi_diagnostic_nonnegative(sigma_x, expo):
    assert choi_diagnostic(lindbladian_closed_form(sigma_x, expo)) > -1e-9


def test_sigma_x_spectrum(sigma_x, expo):
    gen = lindbladian_closed_form(sigma_x, expo)
    rep = spectral_check(gen)
    m12 = gen.coherence_rates()[0, 1]
    expect = np.array([0.0, m12, np.conj(m12), -M21])
    assert rep.gap_pass
    assert np.max(np.abs(np.sort_complex(rep.eigenvalues) - np.sort_complex(expect))) < 1e-9


def test_diagonal_coupling_degenerate_zero(expo):
    atom = AtomModel(np.array([0.0, 1.0, 2.5]), np.diag([1.0, 0.5, -1.0]).astype(complex))
    rep = spectral_check(lindbladian_closed_form(atom, expo))
    assert rep.zero_multiplicity >= 3 and not rep.gap_pass


def test_ladder_fgr_rates_positive(expo):
    atom = AtomModel.ladder([0.0, 1.0, 2.3])
    rep = fermi_golden_rule(atom, expo)
    assert rep.passed and rep.rates[2] > 0 and rep.rates[3] > 0


def test_thermal_stationary_is_gibbs(sigma_x, expo):
    gen = lindbladian_thermal(sigma_x, expo, 1.0)
    assert spectral_check(gen).gap_pass
    assert np.max(np.abs(stationary_left_vector(gen) - gibbs_state(sigma_x, 1.0))) < 1e-9


def test_gap_shrinks_with_coupling_scale(expo):
    base = AtomModel.ladder([0.0, 1.0, 2.3])
    gaps = []
    for g in (1.0, 0.5, 0.25, 0.1):
        atom = AtomModel(base.energies, g * base.coupling)
        gaps.append(spectral_check(lindbladian_closed_form(atom, expo)).gap)
    assert all(a < b < 0 for a, b in zip(gaps[:-1], gaps[1:]))
