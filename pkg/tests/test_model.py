import math

import numpy as np
import pytest

from atomprep.errors import ParameterError
from atomprep.model import (
    AtomModel,
    CouplingSchedule,
    FormFactor,
    PhotonProfile,
    bose_factor,
    correlation_function,
    correlation_on_grid,
    coupling_at,
    decay_exponent_estimate,
    l1_norm_f,
    overlap_decay_check,
    overlap_function,
    thermal_correlation,
    thermal_density,
    validate_assumptions,
)


def test_atom_rejects_non_hermitian():
    with pytest.raises(ParameterError):
        AtomModel(np.array([0.0, 1.0]), np.array([[0, 1], [0, 0]], dtype=complex))


def test_atom_shape_mismatch():
    with pytest.raises(ParameterError):
        AtomModel(np.array([0.0, 1.0, 2.0]), np.eye(2))


def test_bohr_frequencies(sigma_x):
    eps = sigma_x.bohr_frequencies()
    assert eps[1, 0] == 1.0 and eps[0, 1] == -1.0
    assert not sigma_x.bohr_degenerate()
    assert AtomModel.ladder([0.0, 1.0, 2.0]).bohr_degenerate()


def test_random_atom_unit_norm(rng):
    for n in (2, 3, 4):
        atom = AtomModel.random(n, rng)
        assert atom.coupling_norm() == pytest.approx(1.0)
        assert atom.is_ascending()


def test_exponential_closed_form_vs_quadrature(expo):
    t = np.linspace(0, 50, 101)
    num = correlation_function(expo, t, method="quad")
    closed = 8 * math.pi / (2 + 1j * t) ** 3
    assert np.max(np.abs(num - closed)) < 1e-8


@pytest.mark.parametrize("kind", ["exponential", "power-law"])
def test_gl_route_matches_quad(kind):
    ff = FormFactor.exponential() if kind == "exponential" else FormFactor.power_law(mu=0.25)
    t = np.array([0.0, 0.5, 7.0, 33.0])
    assert np.max(np.abs(correlation_function(ff, t, method="gl")
                         - correlation_function(ff, t, method="quad"))) < 1e-10


def test_power_law_closed_form():
    ff = FormFactor.power_law(c=1.0, mu=0.5, K=1.0)
    t = np.array([0.0, 0.7, 3.0, 12.0])
    num = correlation_function(ff, t, method="quad")
    closed = ff.closed_form_correlation(t)
    assert np.max(np.abs(num - closed)) < 1e-8


def test_power_law_rejects_small_mu():
    with pytest.raises(ParameterError):
        FormFactor.power_law(mu=-0.5)


def test_l1_norm_exponential(expo):
    # int |8 pi / (2 + i t)^3| over R equals 2 pi
    assert l1_norm_f(expo) == pytest.approx(2 * math.pi, abs=1e-6)


@pytest.mark.parametrize("mu, alpha", [(0.0, 3.0), (0.25, 3.5), (0.5, 4.0), (1.0, 5.0)])
def test_decay_exponent_power_law(mu, alpha):
    ff = FormFactor.power_law(mu=mu)
    assert decay_exponent_estimate(ff) == pytest.approx(alpha, abs=0.2)


def test_correlation_hermitian_symmetry(expo):
    t = np.linspace(-5, 5, 11)
    f = correlation_on_grid(expo, t)
    assert np.allclose(f, np.conj(f[::-1]), atol=1e-14)


def test_tabulated_matches_exponential(tmp_path):
    r = np.linspace(0.0, 25.0, 10001)
    path = tmp_path / "phi.dat"
    np.savetxt(path, np.column_stack([r, np.exp(-r)]))
    ff = FormFactor.from_file(path)
    assert l1_norm_f(ff) == pytest.approx(2 * math.pi, abs=1e-5)
    t = np.array([0.0, 1.0, 4.0])
    assert np.max(np.abs(correlation_on_grid(ff, t) - 8 * math.pi / (2 + 1j * t) ** 3)) < 1e-5


def test_bose_factor_limits():
    assert bose_factor(1.0, 1e6) == pytest.approx(0.0, abs=1e-300)
    assert bose_factor(1.0, 1.0) == pytest.approx(1 / (math.e - 1))


def test_thermal_density_two_sided(expo):
    beta = 1.0
    w = 0.8
    up = thermal_density(expo, w, beta)
    down = thermal_density(expo, -w, beta)
    # detailed balance J_beta(-w) = e^{-beta w} J_beta(w)
    assert down / up == pytest.approx(math.exp(-beta * w), rel=1e-12)


def test_thermal_correlation_zero_temperature_limit(expo):
    t = np.array([0.0, 1.0, 3.0])
    assert np.max(np.abs(thermal_correlation(expo, 1e6, t) - correlation_on_grid(expo, t))) < 1e-8


def test_thermal_correlation_at_origin(expo):
    # frozen from the independent coth-weighted quadrature: f_1(0)
    assert thermal_correlation(expo, 1.0, 0.0).real == pytest.approx(7.0149, abs=1e-4)


def test_schedule_values(decaying):
    assert coupling_at(decaying, 0.0) == pytest.approx(0.1)
    assert coupling_at(decaying, 100.0) == pytest.approx(10100 ** -0.25)
    with pytest.raises(ParameterError):
        CouplingSchedule.decaying(0.1, -0.6)
    with pytest.raises(ParameterError):
        coupling_at(decaying, -1.0)


def test_validate_assumptions_pass(sigma_x, expo, decaying):
    rep = validate_assumptions(sigma_x, expo, decaying)
    assert rep.passed, rep.failures()


def test_validate_assumptions_constant_schedule_fails(sigma_x, expo):
    rep = validate_assumptions(sigma_x, expo, CouplingSchedule.constant(0.1))
    assert "gamma in (-1/2,0)" in rep.failures()


def test_overlap_decay(expo):
    expo_r, ok = overlap_decay_check(expo, PhotonProfile(lambda r: r * np.exp(-r)))
    assert ok and expo_r == pytest.approx(4.06, abs=0.1)
    assert overlap_function(expo, PhotonProfile(np.exp, l=1), 2.0) == 0
