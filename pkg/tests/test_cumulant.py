import numpy as np
import pytest

from spinburst import closure_check, collective, cumulant, exact
from spinburst.errors import ClosureGapError, ParameterError
from spinburst.model import (
    CouplingProfile,
    SystemParams,
    gaussian_couplings,
    homogeneous_couplings,
)
from spinburst.operators import NuclearSpace, dicke_projector_mixture, expectation


def random_state(n, seed=0):
    rng = np.random.default_rng(seed)

    def cmat():
        m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return 0.5 * (m + m.conj().T)

    return cumulant.CumulantState(
        s_z=float(rng.uniform(-0.5, 0.5)),
        chi=rng.normal(size=n) + 1j * rng.normal(size=n),
        gamma_p=cmat(), gamma_m=cmat())


def random_profile(n, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.3, 1.0, n)
    c = raw / np.linalg.norm(raw)
    return CouplingProfile(couplings=c, g=1.0 / float(c.sum()), kind="custom")


class TestInitialStates:
    def test_product(self):
        prof = random_profile(4)
        st = cumulant.init_cumulant(prof, SystemParams(gamma_r=1.0,
                                                       polarization=0.4))
        assert st.s_z == -0.5
        assert np.all(st.chi == 0)
        assert np.allclose(np.diag(st.gamma_p), 0.7)
        assert np.allclose(st.gamma_p - np.diag(np.diag(st.gamma_p)), 0.0)
        assert np.allclose(st.gamma_m, -0.5 * st.gamma_p)

    def test_dicke_mixture_matches_density_matrix_oracle(self):
        # uniform off-diagonal coherence tuned so <A+A-> matches the
        # symmetric-sector mixture; check against the brute-force state
        n, pol = 10, 0.6
        prof = homogeneous_couplings(n)
        st = cumulant.init_cumulant(
            prof, SystemParams(gamma_r=1.0, polarization=pol,
                               initial_state="dicke_mixture"))
        gv = prof.couplings
        apm_moments = float(np.real(gv @ st.gamma_p @ gv))
        rho = dicke_projector_mixture(n, pol)
        ns = NuclearSpace(prof)
        apm_exact = expectation(ns.a_plus @ ns.a_minus, rho).real
        assert apm_moments == pytest.approx(apm_exact, abs=1e-6)

    def test_dicke_mixture_negative_polarization(self):
        prof = homogeneous_couplings(4)
        dark = cumulant.init_cumulant(
            prof, SystemParams(gamma_r=1.0, polarization=-1.0,
                               initial_state="dicke_mixture"))
        assert np.all(dark.gamma_p == 0)
        with pytest.raises(ParameterError):
            cumulant.init_cumulant(
                prof, SystemParams(gamma_r=1.0, polarization=-0.5,
                                   initial_state="dicke_mixture"))


class TestFactorizationRules:
    def test_exchange_with_z_spectator(self):
        # <sig_0^+ sig_1^z S^-> closes through the pair moment and chi
        got = cumulant.factorize_moment((("+", 0), ("z", 1), ("-", None)))
        assert got == {
            (("chi", 0), ("gp", 1, 1)): 1.0,
            (("chi", 1), ("gp", 0, 1)): -1.0,
            (("chi", 0),): -0.5,
        }

    def test_tracked_moment_is_identity(self):
        got = cumulant.factorize_moment((("+", 0), ("-", 1), ("z", None)))
        assert got == {(("gm", 0, 1),): 1.0}

    def test_same_site_collapses_exactly(self):
        # sigma^+ sigma^z = -1/2 sigma^+ on one site: no closure needed
        got = cumulant.factorize_moment((("+", 0), ("z", 0), ("-", None)))
        assert got == {(("chi", 0),): -0.5}

    def test_zz_pairing(self):
        got = cumulant.factorize_moment((("z", 0), ("z", 1)))
        assert got == {
            (("gp", 0, 0), ("gp", 1, 1)): 1.0,
            (("gp", 0, 1), ("gp", 1, 0)): 1.0,
            (("gp", 0, 0),): -0.5,
            (("gp", 1, 1),): -0.5,
            (): 0.25,
        }

    def test_fourth_order_wick(self):
        got = cumulant.wick_factorize_third_order(
            (("+", None), ("+", 0), ("-", 1), ("-", 2)))
        assert got == {
            (("chic", 1), ("gp", 0, 2)): 1.0,
            (("chic", 2), ("gp", 0, 1)): 1.0,
        }

    def test_distinct_site_order_invariance(self):
        a = cumulant.factorize_moment((("+", 0), ("z", 1), ("-", None)))
        b = cumulant.factorize_moment((("-", None), ("z", 1), ("+", 0)))
        c = cumulant.factorize_moment((("z", 1), ("+", 0), ("-", None)))
        assert a == b == c

    def test_charge_unbalanced_vanishes(self):
        assert cumulant.factorize_moment((("+", 0), ("+", 1),
                                          ("-", None))) == {}

    def test_closure_gap_raises(self):
        with pytest.raises(ClosureGapError):
            cumulant.wick_factorize_third_order(
                (("+", 0), ("-", 1), ("+", 2), ("-", 3), ("z", None)))

    def test_evaluate_expansion(self):
        st = random_state(3, seed=5)
        expansion = {(("chi", 0), ("gp", 1, 2)): 2.0, (("sz",),): 1.0, (): 4.0}
        want = 2.0 * st.chi[0] * st.gamma_p[1, 2] + st.s_z + 4.0
        assert cumulant.evaluate_expansion(expansion, st) == pytest.approx(want)


class TestRhs:
    @pytest.mark.parametrize("n,m_s", [(1, 0.0), (2, -0.5), (3, -1.0)])
    def test_matches_operator_algebra(self, n, m_s):
        # production right-hand side against the symbolic Pauli-string
        # derivation, random state and couplings
        prof = random_profile(n, seed=n)
        params = SystemParams(gamma_r=0.7, omega_s=0.4, m_s=m_s)
        st = random_state(n, seed=10 + n)
        got = cumulant.cumulant_rhs(prof, params, st)
        want = closure_check.derived_rhs(
            prof.couplings, prof.g, params.omega_s, m_s + 0.5,
            params.gamma_r, st)
        assert abs(got.s_z - want.s_z) < 1e-12
        assert np.max(np.abs(got.chi - want.chi)) < 1e-12
        assert np.max(np.abs(got.gamma_p - want.gamma_p)) < 1e-12
        assert np.max(np.abs(got.gamma_m - want.gamma_m)) < 1e-12

    def test_preserves_hermiticity(self):
        prof = random_profile(4, seed=2)
        params = SystemParams(gamma_r=0.5, omega_s=0.3, m_s=-0.5)
        d = cumulant.cumulant_rhs(prof, params, random_state(4, seed=3))
        assert d.hermiticity_defect() < 1e-12

    def test_size_mismatch(self):
        with pytest.raises(ParameterError):
            cumulant.cumulant_rhs(random_profile(3),
                                  SystemParams(gamma_r=1.0), random_state(2))

    def test_independent_mode_freezes_cross_moments(self):
        prof = random_profile(3, seed=4)
        params = SystemParams(gamma_r=0.5, omega_s=0.2)
        d = cumulant.cumulant_rhs(prof, params, random_state(3, seed=6),
                                  independent=True)
        off = ~np.eye(3, dtype=bool)
        assert np.all(d.gamma_p[off] == 0)
        assert np.all(d.gamma_m[off] == 0)

    def test_photon_balance_is_algebraic(self):
        # d<total excitation>/dt + gamma_r <S+S-> = 0 holds for any state,
        # not just integrated ones
        prof = random_profile(5, seed=7)
        params = SystemParams(gamma_r=0.9, omega_s=0.5, m_s=-0.5)
        st = random_state(5, seed=8)
        d = cumulant.cumulant_rhs(prof, params, st)
        resid = d.s_z + float(np.sum(np.diag(d.gamma_p).real)) \
            + params.gamma_r * (0.5 + st.s_z)
        assert abs(resid) < 1e-12


class TestSingleNucleusExactness:
    def test_against_product_basis(self):
        prof = homogeneous_couplings(1)
        params = SystemParams(gamma_r=0.8, omega_s=0.5, m_s=-0.5)
        t_max = 30.0
        full = exact.evolve(prof, params, t_max, n_samples=200)
        mom = cumulant.evolve_cumulant(prof, params, t_max, n_samples=200)
        assert np.max(np.abs(full.intensity - mom.intensity)) < 1e-7
        assert np.max(np.abs(full.excitation - mom.excitation)) < 1e-7


class TestClosureQuality:
    def test_small_ensemble_peak_error_band(self):
        # against the symmetric-sector solver at N = 4 the pair closure
        # misses the burst peak by roughly 14 percent
        prof = homogeneous_couplings(4)
        params = SystemParams(gamma_r=0.5, omega_s=0.0, m_s=-1.0)
        ref = collective.collective_evolve(prof, params, 60.0, n_samples=300)
        mom = cumulant.evolve_cumulant(prof, params, 60.0, n_samples=300)
        err = abs(np.max(mom.intensity) - np.max(ref.intensity)) \
            / np.max(ref.intensity)
        assert 0.05 < err < 0.25


class TestBlockedEngine:
    def test_init_expand_round_trip(self):
        for kind, pol in (("product", 0.3), ("dicke_mixture", 0.6)):
            prof = gaussian_couplings(4)
            params = SystemParams(gamma_r=1.0, polarization=pol,
                                  initial_state=kind)
            full = cumulant.init_cumulant(prof, params)
            blocked = cumulant.expand_blocked(
                prof, cumulant.init_blocked(prof, params))
            assert blocked.s_z == full.s_z
            assert np.allclose(blocked.chi, full.chi)
            assert np.allclose(blocked.gamma_p, full.gamma_p, atol=1e-14)
            assert np.allclose(blocked.gamma_m, full.gamma_m, atol=1e-14)

    @pytest.mark.parametrize("independent", [False, True])
    def test_rhs_matches_generic_on_shell_symmetric_states(self, independent):
        prof = gaussian_couplings(5)
        params = SystemParams(gamma_r=0.6, omega_s=0.5, compensate=True,
                              m_s=-0.5, polarization=0.8)
        st_b = cumulant.init_blocked(prof, params)
        # push the blocked state off the initial manifold, symmetrically
        rng = np.random.default_rng(11)
        s = st_b.shells
        st_b.chi = rng.normal(size=s) + 1j * rng.normal(size=s)
        m = rng.normal(size=(s, s)) + 1j * rng.normal(size=(s, s))
        st_b.off_p = 0.5 * (m + m.conj().T)
        m = rng.normal(size=(s, s)) + 1j * rng.normal(size=(s, s))
        st_b.off_m = 0.5 * (m + m.conj().T)
        st_b.diag_p = rng.uniform(0.0, 1.0, s)
        st_b.diag_m = rng.normal(size=s)

        d_blocked = cumulant.blocked_rhs(prof, params, st_b,
                                         independent=independent)
        d_full = cumulant.cumulant_rhs(prof, params,
                                       cumulant.expand_blocked(prof, st_b),
                                       independent=independent)
        want = cumulant.expand_blocked(prof, d_blocked)
        assert abs(want.s_z - d_full.s_z) < 1e-13
        assert np.max(np.abs(want.chi - d_full.chi)) < 1e-13
        assert np.max(np.abs(want.gamma_p - d_full.gamma_p)) < 1e-13
        assert np.max(np.abs(want.gamma_m - d_full.gamma_m)) < 1e-13

    def test_trajectories_agree(self):
        prof = gaussian_couplings(5)
        params = SystemParams(gamma_r=0.5, omega_s=0.5, compensate=True,
                              m_s=-0.5)
        t_max = 150.0
        fast = cumulant.evolve_blocked(prof, params, t_max, n_samples=150)
        slow = cumulant.evolve_cumulant(prof, params, t_max, n_samples=150)
        assert fast.meta["shells"] < prof.n
        scale = np.max(slow.intensity)
        assert np.max(np.abs(fast.intensity - slow.intensity)) < 1e-6 * scale
        assert np.max(np.abs(fast.excitation - slow.excitation)) < 1e-6

    def test_shell_count(self):
        values, counts, inverse = cumulant.coupling_shells(
            gaussian_couplings(5))
        assert counts.sum() == 25
        assert len(values) == len(counts)
        assert np.all(np.diff(values) > 0)
        # dihedral symmetry of the 5x5 grid: center site is unique
        assert counts[-1] == 1.0


def test_evolve_meta_and_balance():
    prof = random_profile(4, seed=9)
    params = SystemParams(gamma_r=0.8, omega_s=0.5, m_s=-0.5)
    series = cumulant.evolve_cumulant(prof, params, 40.0, n_samples=150)
    assert series.meta["solver"] == "cumulant"
    assert series.meta["bookkeeping_max_residual"] < 1e-12
    assert series.meta["state_drift"] < 1e-6
    assert series.meta["plateau_time"] == pytest.approx(5.0 / 0.8)
    assert series.intensity[0] == pytest.approx(0.0, abs=1e-12)
