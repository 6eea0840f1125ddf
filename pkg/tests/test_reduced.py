import numpy as np
import pytest

from spinburst import exact, reduced
from spinburst.errors import CapacityError, ParameterError
from spinburst.model import (
    SystemParams,
    gamma_for_epsilon,
    homogeneous_couplings,
)
from spinburst.operators import dicke_projector_mixture


def test_capacity_guard():
    prof = homogeneous_couplings(4)
    with pytest.raises(CapacityError):
        reduced.evolve_reduced(prof, SystemParams(gamma_r=1.0), 1.0, n_max=3)


def test_rhs_shape_guard():
    prof = homogeneous_couplings(2)
    with pytest.raises(ParameterError):
        reduced.reduced_rhs(prof, SystemParams(gamma_r=1.0),
                            np.eye(3, dtype=complex))


def test_rhs_trace_free_and_hermitian():
    prof = homogeneous_couplings(3)
    params = SystemParams(gamma_r=1.2, omega_s=0.6, m_s=-1.0)
    rng = np.random.default_rng(1)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    out = reduced.reduced_rhs(prof, params, rho)
    assert abs(np.trace(out)) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


class TestDarkStates:
    def test_fully_down_is_stationary(self):
        # the "fully polarized" dark state: every nucleus in |down>
        prof = homogeneous_couplings(5)
        params = SystemParams(gamma_r=1.0, omega_s=0.5, m_s=-1.0,
                              polarization=-1.0)
        rho = reduced.initial_state(prof, params)
        assert reduced.is_stationary(prof, params, rho, tol=1e-10)

    def test_two_spin_singlet_is_stationary(self):
        prof = homogeneous_couplings(2)
        params = SystemParams(gamma_r=0.8, omega_s=0.5, m_s=-1.0)
        singlet = dicke_projector_mixture(2, 0.0)
        assert reduced.is_stationary(prof, params, singlet, tol=1e-10)

    def test_emitting_state_is_not_stationary(self):
        prof = homogeneous_couplings(2)
        params = SystemParams(gamma_r=0.8, omega_s=0.5, polarization=1.0)
        rho = reduced.initial_state(prof, params)
        assert not reduced.is_stationary(prof, params, rho, tol=1e-10)


def test_run_diagnostics_and_balance():
    prof = homogeneous_couplings(3)
    params = SystemParams(gamma_r=1.0, omega_s=0.5, polarization=1.0)
    series = reduced.evolve_reduced(prof, params, 400.0, n_samples=300)
    assert series.meta["solver"] == "reduced"
    assert series.meta["bookkeeping_max_residual"] < 1e-10
    assert series.meta["trace_deviation"] < 1e-8
    # eliminated equation emits immediately: I(0) = c_r <A+A->(0) > 0
    assert series.intensity[0] > 0
    # all three excitations eventually radiated
    photons = np.trapezoid(series.intensity, series.t)
    assert photons == pytest.approx(3.0, rel=2e-2)


def test_against_product_basis_small_epsilon():
    # electron elimination is accurate once the cycle is fast; compare
    # intensities after the electron charging transient
    prof = homogeneous_couplings(4)
    eps = 0.1
    params = SystemParams(gamma_r=gamma_for_epsilon(eps), omega_s=0.5,
                          m_s=-0.5, polarization=1.0)
    t_max = 60.0
    full = exact.evolve(prof, params, t_max, n_samples=300)
    elim = reduced.evolve_reduced(prof, params, t_max, n_samples=300)
    skip = full.t > 10.0 / params.gamma_r
    scale = np.max(full.intensity[skip])
    gap = np.max(np.abs(full.intensity[skip] - elim.intensity[skip]))
    assert gap < 0.05 * scale


def test_knight_term_changes_dynamics():
    # inhomogeneous profile, m_s != 0: the electron back-action rotates
    # nuclear coherences; on a coherent state the rhs must differ
    rng = np.random.default_rng(3)
    raw = rng.uniform(0.3, 1.0, 3)
    c = raw / np.linalg.norm(raw)
    from spinburst.model import CouplingProfile
    prof = CouplingProfile(couplings=c, g=1.0 / float(c.sum()))
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    base = SystemParams(gamma_r=1.0, omega_s=0.5, m_s=0.0)
    kicked = SystemParams(gamma_r=1.0, omega_s=0.5, m_s=-1.0)
    d0 = reduced.reduced_rhs(prof, base, rho)
    d1 = reduced.reduced_rhs(prof, kicked, rho)
    assert np.max(np.abs(d0 - d1)) > 1e-3
