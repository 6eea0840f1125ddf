import numpy as np
import pytest

from spinburst import exact
from spinburst.errors import CapacityError, ParameterError
from spinburst.model import (
    CouplingProfile,
    SystemParams,
    gamma_for_epsilon,
    homogeneous_couplings,
)


def params_for(eps=0.5, **kw):
    return SystemParams(gamma_r=gamma_for_epsilon(eps), omega_s=0.5, **kw)


def test_capacity_guard():
    prof = homogeneous_couplings(3)
    with pytest.raises(CapacityError):
        exact.evolve(prof, params_for(), 1.0, n_max=2)
    with pytest.raises(CapacityError):
        exact.build_hamiltonian(prof, params_for(), n_max=2)


def test_initial_state_layout():
    prof = homogeneous_couplings(2)
    params = SystemParams(gamma_r=1.0, polarization=1.0)
    rho = exact.initial_state(prof, params)
    assert rho.shape == (8, 8)
    assert np.trace(rho).real == pytest.approx(1.0)
    # electron in the pumped (lower) level, both nuclei up: index 0b011
    assert rho[0b011, 0b011] == pytest.approx(1.0)


def test_initial_state_partial_polarization():
    prof = homogeneous_couplings(1)
    rho = exact.initial_state(prof, SystemParams(gamma_r=1.0,
                                                 polarization=0.5))
    assert rho[0b00, 0b00].real == pytest.approx(0.25)
    assert rho[0b01, 0b01].real == pytest.approx(0.75)


def test_dicke_mixture_requires_homogeneous():
    c = np.array([0.8, 0.6])
    prof = CouplingProfile(couplings=c, g=1.0 / float(c.sum()))
    with pytest.raises(ParameterError):
        exact.initial_state(prof, SystemParams(
            gamma_r=1.0, initial_state="dicke_mixture"))


def test_hamiltonian_is_hermitian():
    prof = homogeneous_couplings(3)
    h = exact.build_hamiltonian(prof, params_for(m_s=-0.5)).toarray()
    assert np.allclose(h, h.conj().T)


def test_rhs_preserves_trace_and_hermiticity():
    prof = homogeneous_couplings(2)
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    out = exact.lindblad_rhs(prof, params_for(m_s=0.0), rho)
    assert abs(np.trace(out)) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_single_nucleus_photon_count():
    # one nucleus, one excitation: integrated flux approaches 1
    prof = homogeneous_couplings(1)
    params = SystemParams(gamma_r=1.5, omega_s=0.5, polarization=1.0)
    series = exact.evolve(prof, params, 250.0, n_samples=1200)
    photons = np.trapezoid(series.intensity, series.t)
    assert photons == pytest.approx(1.0, abs=2e-3)
    assert series.excitation[0] == pytest.approx(1.0)
    assert series.excitation[-1] < 0.01


def test_run_diagnostics():
    prof = homogeneous_couplings(2)
    params = params_for(eps=0.5, m_s=-0.5)
    series = exact.evolve(prof, params, 30.0, n_samples=150)
    assert series.meta["solver"] == "exact"
    assert series.meta["bookkeeping_max_residual"] < 1e-10
    assert series.meta["trace_deviation"] < 1e-8
    assert series.meta["min_eigenvalue"] > -1e-9
    assert series.intensity[0] == pytest.approx(0.0, abs=1e-12)
    # electron charges up on the 1/gamma_r scale, so the plateau reference
    # is recorded once the run is long enough
    assert "plateau_intensity" in series.meta
    assert series.meta["plateau_intensity"] > 0


def test_independent_mask_blocks_cross_coherence():
    prof = homogeneous_couplings(2)
    params = params_for(eps=0.5)
    full = exact.evolve(prof, params, 40.0, n_samples=100)
    ind = exact.evolve(prof, params, 40.0, n_samples=100, independent=True)
    # the independent reference loses the cooperative enhancement
    assert np.max(ind.intensity) <= np.max(full.intensity) + 1e-12
    assert ind.meta["independent"]


def test_compensation_pins_effective_splitting():
    prof = homogeneous_couplings(2)
    params = SystemParams(gamma_r=1.0, omega_s=0.5, compensate=True,
                          m_s=-0.5)
    series = exact.evolve(prof, params, 30.0, n_samples=100)
    effective = series.omega_s + prof.g * series.a_z
    assert np.max(np.abs(effective - 0.5)) < 1e-7


def test_rho0_shape_guard():
    prof = homogeneous_couplings(2)
    with pytest.raises(ParameterError):
        exact.evolve(prof, params_for(), 1.0, rho0=np.eye(4, dtype=complex))


def test_anisotropic_tensors_enter_hamiltonian():
    tensors = np.zeros((2, 3, 3))
    tensors[0, 2, 0] = 0.2    # S^z sigma_0^x cross term
    c = np.full(2, 1.0 / np.sqrt(2))
    prof = CouplingProfile(couplings=c, g=1.0 / float(c.sum()),
                           tensors=tensors)
    plain = CouplingProfile(couplings=c, g=1.0 / float(c.sum()))
    h_aniso = exact.build_hamiltonian(prof, params_for(m_s=0.0))
    h_plain = exact.build_hamiltonian(plain, params_for(m_s=0.0))
    diff = (h_aniso - h_plain).toarray()
    assert np.max(np.abs(diff)) > 0.01
    assert np.allclose(diff, diff.conj().T)
