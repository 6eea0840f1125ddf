"""Sparse operator builders for product-basis spaces.

Spaces are ordered electron first (when present), then nuclei 0..N-1, with
plain kron ordering (first factor most significant).  All builders return
scipy CSR matrices; right-hand sides apply them to dense density matrices so
no superoperator is ever materialized.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .constants import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z
from .errors import ParameterError
from .model import CouplingProfile

_PAULI = {
    "+": SIGMA_PLUS,
    "-": SIGMA_MINUS,
    "z": SIGMA_Z,
    "x": 0.5 * (SIGMA_PLUS + SIGMA_MINUS),
    "y": -0.5j * (SIGMA_PLUS - SIGMA_MINUS),
}


def site_operator(op: np.ndarray, site: int, n_sites: int) -> sparse.csr_matrix:
    """Embed a 2x2 operator at `site` in an n_sites tensor product."""
    if not 0 <= site < n_sites:
        raise ValueError(f"site {site} outside 0..{n_sites - 1}")
    left = sparse.identity(2 ** site, format="csr", dtype=complex)
    right = sparse.identity(2 ** (n_sites - site - 1), format="csr", dtype=complex)
    return sparse.kron(sparse.kron(left, sparse.csr_matrix(op)), right, format="csr")


def collective_operator(flavor: str, profile: CouplingProfile,
                        n_sites: int, offset: int) -> sparse.csr_matrix:
    """A^flavor = sum_i g_i sigma_i^flavor over nuclei at sites offset..offset+N-1."""
    op = _PAULI[flavor]
    total = sparse.csr_matrix((2 ** n_sites, 2 ** n_sites), dtype=complex)
    for i, weight in enumerate(profile.couplings):
        total = total + weight * site_operator(op, offset + i, n_sites)
    return total.tocsr()


class ProductSpace:
    """Electron + N nuclei product space with cached collective operators."""

    def __init__(self, profile: CouplingProfile):
        self.profile = profile
        self.n = profile.n
        self.n_sites = self.n + 1          # electron at site 0
        self.dim = 2 ** self.n_sites
        self.s_plus = site_operator(SIGMA_PLUS, 0, self.n_sites)
        self.s_minus = site_operator(SIGMA_MINUS, 0, self.n_sites)
        self.s_z = site_operator(SIGMA_Z, 0, self.n_sites)
        self.a_plus = collective_operator("+", profile, self.n_sites, 1)
        self.a_minus = collective_operator("-", profile, self.n_sites, 1)
        self.a_z = collective_operator("z", profile, self.n_sites, 1)
        # Diagonals used by observable extraction (all z-type, diagonal).
        self.a_z_diag = self.a_z.diagonal().real
        self.s_number_diag = (self.s_plus @ self.s_minus).diagonal().real
        self.excitation_diag = self.s_number_diag.copy()
        for i in range(self.n):
            num_i = site_operator(SIGMA_PLUS @ SIGMA_MINUS, 1 + i, self.n_sites)
            self.excitation_diag += num_i.diagonal().real

    def nuclear_site(self, flavor: str, i: int) -> sparse.csr_matrix:
        return site_operator(_PAULI[flavor], 1 + i, self.n_sites)


class NuclearSpace:
    """Nuclei-only product space (for the electron-eliminated equation)."""

    def __init__(self, profile: CouplingProfile):
        self.profile = profile
        self.n = profile.n
        self.dim = 2 ** self.n
        self.a_plus = collective_operator("+", profile, self.n, 0)
        self.a_minus = collective_operator("-", profile, self.n, 0)
        self.a_z = collective_operator("z", profile, self.n, 0)
        self.a_z_diag = self.a_z.diagonal().real
        excitation = np.zeros(self.dim)
        for i in range(self.n):
            excitation += site_operator(
                SIGMA_PLUS @ SIGMA_MINUS, i, self.n).diagonal().real
        self.excitation_diag = excitation

    def site(self, flavor: str, i: int) -> sparse.csr_matrix:
        return site_operator(_PAULI[flavor], i, self.n)


def total_spin_operator(flavor: str, n: int) -> sparse.csr_matrix:
    """Unweighted total-spin component sum_i sigma_i^flavor on n nuclei."""
    op = _PAULI[flavor]
    total = sparse.csr_matrix((2 ** n, 2 ** n), dtype=complex)
    for i in range(n):
        total = total + site_operator(op, i, n)
    return total.tocsr()


def dicke_projector_mixture(n: int, polarization: float) -> np.ndarray:
    """Nuclear density matrix for the maximal-weight Dicke mixture.

    Uniform mixture over the joint eigenspace of (J^2, Jz) with
    J = m = j_bar = polarization * n / 2, i.e. every permutation copy of the
    highest-weight state of the spin-j_bar sector gets equal weight.
    Requires j_bar to be a representable sector label (n/2 - integer >= 0).
    """
    j_bar = 0.5 * polarization * n
    n_up_float = 0.5 * n + j_bar
    n_up = int(round(n_up_float))
    if abs(n_up - n_up_float) > 1e-9 or j_bar < 0:
        raise ParameterError(
            f"polarization {polarization} does not map to a Dicke sector for "
            f"n = {n} (need j = p*n/2 with n/2 - j a non-negative integer)")
    dim = 2 ** n
    sector = np.array([b for b in range(dim)
                       if bin(b).count("1") == n_up], dtype=int)
    if sector.size == 1:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[sector[0], sector[0]] = 1.0
        return rho
    j_plus = total_spin_operator("+", n)
    jpjm = (j_plus @ j_plus.conj().T).tocsc()[:, sector][sector, :].toarray()
    m = j_bar  # magnetization of the sector equals the target j
    j_squared = jpjm + (m * m - m) * np.eye(sector.size)
    evals, evecs = np.linalg.eigh(j_squared)
    target = j_bar * (j_bar + 1.0)
    keep = np.abs(evals - target) < 1e-8 * max(1.0, n * n)
    if not np.any(keep):
        raise ParameterError(
            f"no J = {j_bar} multiplet found in the m = {m} sector")
    vecs = evecs[:, keep]
    proj_sector = vecs @ vecs.conj().T
    rho = np.zeros((dim, dim), dtype=complex)
    rho[np.ix_(sector, sector)] = proj_sector / np.trace(proj_sector).real
    return rho


def expectation(operator: sparse.spmatrix, rho: np.ndarray) -> complex:
    """tr(O rho) without densifying O."""
    return complex((operator @ rho).diagonal().sum())


def diagonal_expectation(diag: np.ndarray, rho: np.ndarray) -> float:
    return float(np.real(np.sum(diag * rho.diagonal())))
