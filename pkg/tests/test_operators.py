import numpy as np
import pytest

from spinburst.constants import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z
from spinburst.errors import ParameterError
from spinburst.model import homogeneous_couplings
from spinburst.operators import (
    NuclearSpace,
    ProductSpace,
    collective_operator,
    diagonal_expectation,
    dicke_projector_mixture,
    expectation,
    site_operator,
    total_spin_operator,
)


def test_site_operator_placement():
    # electron-first kron ordering: site 0 is the most significant bit
    left = site_operator(SIGMA_Z, 0, 2).toarray()
    right = site_operator(SIGMA_Z, 1, 2).toarray()
    assert np.allclose(left, np.kron(SIGMA_Z, np.eye(2)))
    assert np.allclose(right, np.kron(np.eye(2), SIGMA_Z))
    with pytest.raises(ValueError):
        site_operator(SIGMA_Z, 2, 2)


def test_single_site_commutator():
    sp = site_operator(SIGMA_PLUS, 1, 3)
    sm = site_operator(SIGMA_MINUS, 1, 3)
    sz = site_operator(SIGMA_Z, 1, 3)
    comm = (sp @ sm - sm @ sp).toarray()
    assert np.allclose(comm, 2.0 * sz.toarray())


def test_collective_commutator_homogeneous():
    prof = homogeneous_couplings(4)
    a_plus = collective_operator("+", prof, 4, 0)
    a_minus = collective_operator("-", prof, 4, 0)
    a_z = collective_operator("z", prof, 4, 0)
    comm = (a_plus @ a_minus - a_minus @ a_plus).toarray()
    # [A+, A-] = 2 sum g_i^2 sigma_i^z = (2/sqrt(n)) Az for g_i = 1/sqrt(n)
    assert np.allclose(comm, (2.0 / np.sqrt(4)) * a_z.toarray())


def test_product_space_layout():
    prof = homogeneous_couplings(2)
    space = ProductSpace(prof)
    assert space.dim == 8
    # |e, up, down> has electron number 1 and two excitations total
    idx = 0b110
    assert space.s_number_diag[idx] == pytest.approx(1.0)
    assert space.excitation_diag[idx] == pytest.approx(2.0)
    assert space.a_z_diag[idx] == pytest.approx(0.0, abs=1e-12)
    # nuclear_site addresses nuclei, not the electron
    num0 = space.nuclear_site("+", 0) @ space.nuclear_site("-", 0)
    assert num0.diagonal().real[idx] == pytest.approx(1.0)


def test_nuclear_space_excitations():
    prof = homogeneous_couplings(3)
    ns = NuclearSpace(prof)
    assert ns.dim == 8
    assert ns.excitation_diag[0b111] == pytest.approx(3.0)
    assert ns.excitation_diag[0b010] == pytest.approx(1.0)


def test_total_spin_commutator():
    jp = total_spin_operator("+", 3)
    jm = total_spin_operator("-", 3)
    jz = total_spin_operator("z", 3)
    assert np.allclose((jp @ jm - jm @ jp).toarray(), 2.0 * jz.toarray())


class TestDickeMixture:
    def test_full_polarization_is_pure(self):
        rho = dicke_projector_mixture(3, 1.0)
        assert rho[7, 7] == pytest.approx(1.0)
        assert np.trace(rho).real == pytest.approx(1.0)

    def test_two_spin_singlet(self):
        rho = dicke_projector_mixture(2, 0.0)
        psi = np.zeros(4, dtype=complex)
        psi[0b01] = 1.0 / np.sqrt(2)
        psi[0b10] = -1.0 / np.sqrt(2)
        expect = np.outer(psi, psi.conj())
        assert np.allclose(rho, expect, atol=1e-12)

    def test_mixture_matches_polarization_target(self):
        # <A+A-> over the j = p n / 2 highest-weight mixture equals p
        for n, p in ((4, 0.5), (6, 1.0 / 3.0), (10, 0.6)):
            rho = dicke_projector_mixture(n, p)
            assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
            assert np.allclose(rho, rho.conj().T)
            ns = NuclearSpace(homogeneous_couplings(n))
            apm = expectation(ns.a_plus @ ns.a_minus, rho).real
            assert apm == pytest.approx(p, abs=1e-9)
            jz = diagonal_expectation(
                total_spin_operator("z", n).diagonal().real, rho)
            assert jz == pytest.approx(0.5 * p * n, abs=1e-9)

    def test_unrepresentable_sector_raises(self):
        with pytest.raises(ParameterError):
            dicke_projector_mixture(3, 0.5)
        with pytest.raises(ParameterError):
            dicke_projector_mixture(4, -0.5)

    def test_commutes_with_dynamics_sector(self):
        # the mixture is block diagonal in total magnetization
        rho = dicke_projector_mixture(4, 0.5)
        ns = NuclearSpace(homogeneous_couplings(4))
        jz_diag = total_spin_operator("z", 4).diagonal().real
        for b in range(16):
            for c in range(16):
                if abs(rho[b, c]) > 1e-14:
                    assert jz_diag[b] == jz_diag[c]


def test_expectation_helpers():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    op = site_operator(SIGMA_Z, 0, 2)
    dense = complex(np.trace(op.toarray() @ rho))
    assert expectation(op, rho) == pytest.approx(dense)
    assert diagonal_expectation(op.diagonal().real, rho) == pytest.approx(
        dense.real)
