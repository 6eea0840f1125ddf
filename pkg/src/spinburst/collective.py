"""Solvers restricted to the fully symmetric (maximum total spin) sector.

Homogeneous couplings conserve total nuclear spin, so a run started from
the fully polarized state never leaves the ladder |J=n/2, m>, m = -J..J.
Two levels of description live here:

* `collective_evolve` keeps the electron and integrates the full Lindblad
  equation on the 2(n+1)-dimensional product of the electron doublet with
  the ladder.  It is the cheap exact reference for homogeneous runs at
  sizes where the 2^(n+1) solver is hopeless.

* `dicke_ladder_evolve` integrates the classical rate equations for the
  ladder populations p_m,

      dp_m/dt = c [ (J-m)(J+m+1) p_{m+1} - (J+m)(J-m+1) p_m ],

  the eliminated-electron dynamics after nuclear coherences have been
  dropped.  Rates follow the unit-coupling convention, so one unit of
  ladder time equals n units of the normalized-coupling clock used
  everywhere else; `ladder_rate_from_regime` does the bookkeeping.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from . import integrate
from .constants import electron_z_shift, SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z
from .control import compensated_omega
from .errors import ParameterError
from .model import CouplingProfile, SystemParams, homogeneous_couplings, regime
from .series import TimeSeries

PLATEAU_UNITS = 5.0


def ladder_weight(n: int, m) -> np.ndarray:
    """Matrix element <J,m|A+A-|J,m> = (J+m)(J-m+1)/n on the top ladder.

    Uses the normalized couplings g_i = 1/sqrt(n), hence the 1/n; J = n/2.
    """
    if n < 1:
        raise ParameterError("need at least one nucleus")
    j = 0.5 * n
    m = np.asarray(m, dtype=float)
    if np.any(np.abs(m) > j + 1e-12):
        raise ParameterError(f"|m| must not exceed J = {j}")
    if np.any(np.abs((m - j) - np.round(m - j)) > 1e-12):
        raise ParameterError("m must step from J by integers")
    return (j + m) * (j - m + 1.0) / n


def _ladder_m(n: int) -> np.ndarray:
    # index k <-> m = k - J, k = 0..n
    return np.arange(n + 1, dtype=float) - 0.5 * n


def _j_plus(n: int) -> sparse.csr_matrix:
    j = 0.5 * n
    m = _ladder_m(n)[:-1]
    amp = np.sqrt((j - m) * (j + m + 1.0))
    return sparse.diags(amp, offsets=-1, format="csr")


def ladder_rate_from_regime(profile: CouplingProfile,
                            params: SystemParams) -> float:
    """Unit-coupling ladder rate matching the normalized-coupling c_r.

    With g_i = 1/sqrt(n) the collective operators shrink by sqrt(n), so
    the eliminated-equation rate c_r maps onto a unit-coupling ladder rate
    c_r / n.
    """
    return regime(profile, params).c_r / profile.n


def dicke_ladder_evolve(n: int, c: float = 1.0, t_max: float = 10.0,
                        n_samples: int = 400, m0: float | None = None,
                        rtol: float = integrate.DEFAULT_RTOL,
                        atol: float = integrate.DEFAULT_ATOL,
                        method: str = integrate.DEFAULT_METHOD) -> TimeSeries:
    """Rate-equation cascade down the ladder from m0 (default the top).

    Populations see the unit-coupling rates (J+m)(J-m+1); intensity is
    reported in the same convention, I = c * sum_m (J+m)(J-m+1) p_m.
    The a_plus_minus column carries the normalized-coupling expectation
    <A+A-> = sum (J+m)(J-m+1) p_m / n so it can be compared directly with
    the other solvers; a_z likewise carries <Az> = <Jz>/sqrt(n).
    """
    if n < 1:
        raise ParameterError("need at least one nucleus")
    if c <= 0:
        raise ParameterError("ladder rate must be positive")
    j = 0.5 * n
    m = _ladder_m(n)
    if m0 is None:
        m0 = j
    k0 = int(round(m0 + j))
    if abs((m0 + j) - k0) > 1e-9 or not 0 <= k0 <= n:
        raise ParameterError(f"m0 must lie on the ladder of J = {j}")
    p0 = np.zeros(n + 1)
    p0[k0] = 1.0

    down = (j + m) * (j - m + 1.0)      # rate out of m (towards m-1)
    gen = sparse.diags([-c * down, c * down[1:]], offsets=[0, 1],
                       format="csr")

    def rhs(t, p):
        return gen @ p

    t_grid = integrate.sample_grid(t_max, n_samples)
    p_t = integrate.integrate_sampled(rhs, p0, t_grid, rtol=rtol, atol=atol,
                                      method=method)
    weight = p_t @ down
    intensity = c * weight
    m_mean = p_t @ m
    # d<excitation>/dt telescopes to -I exactly; record the rounding floor
    d_exc = (gen @ p_t.T).T @ (m + j)
    meta = {
        "solver": "ladder",
        "n": n,
        "c": c,
        "ladder_units": True,
        "norm_deviation": float(np.max(np.abs(p_t.sum(axis=1) - 1.0))),
        "min_population": float(p_t.min()),
        "bookkeeping_max_residual": float(np.max(np.abs(d_exc + intensity))),
    }
    return TimeSeries(t=t_grid, intensity=intensity,
                      a_z=m_mean / np.sqrt(n),
                      a_plus_minus=weight / n,
                      excitation=m_mean + j,
                      omega_s=np.zeros_like(t_grid), meta=meta)


class _CollectiveEngine:
    """Electron doublet x symmetric ladder, electron index most significant."""

    def __init__(self, profile: CouplingProfile, params: SystemParams):
        if not profile.is_homogeneous():
            raise ParameterError(
                "collective solver requires homogeneous couplings")
        n = profile.n
        self.n = n
        self.params = params
        self.dim_nuc = n + 1
        self.dim = 2 * self.dim_nuc
        g = profile.g
        scale = 1.0 / np.sqrt(n)
        jp = _j_plus(n)
        eye_n = sparse.identity(self.dim_nuc, format="csr")
        a_plus = scale * jp
        a_z_nuc = scale * _ladder_m(n)

        s_plus = sparse.kron(sparse.csr_matrix(SIGMA_PLUS), eye_n,
                             format="csr")
        s_minus = sparse.kron(sparse.csr_matrix(SIGMA_MINUS), eye_n,
                              format="csr")
        self.s_minus = s_minus.tocsr()
        flip = sparse.kron(sparse.csr_matrix(SIGMA_MINUS), a_plus,
                           format="csr")
        ham = 0.5 * g * (flip + flip.conj().T)
        sz_nuc = sparse.kron(sparse.csr_matrix(SIGMA_Z),
                             sparse.diags(a_z_nuc), format="csr")
        shift = electron_z_shift(params.m_s)
        ham = ham + g * sz_nuc
        ham = ham + g * shift * sparse.kron(
            sparse.identity(2), sparse.diags(a_z_nuc), format="csr")
        self.h_static = ham.tocsr()

        sz_col = np.concatenate([np.full(self.dim_nuc, -0.5),
                                 np.full(self.dim_nuc, 0.5)])
        self.sz_diag = sz_col
        self.p1_diag = sz_col + 0.5
        self.az_diag = np.tile(a_z_nuc, 2)
        m_vals = _ladder_m(n)
        self.exc_diag = np.tile(m_vals + 0.5 * n, 2) + self.p1_diag
        self.apm_diag = np.tile(ladder_weight(n, m_vals), 2)
        self.gamma_r = params.gamma_r
        self.g = g

    def omega_at(self, rho: np.ndarray) -> float:
        if not self.params.compensate:
            return self.params.omega_s
        az = float(np.real(np.sum(self.az_diag * rho.diagonal())))
        return compensated_omega(self.params.omega_s, self.g, az)

    def rhs_matrix(self, rho: np.ndarray) -> np.ndarray:
        omega = self.omega_at(rho)
        h_rho = self.h_static @ rho
        h_rho += (omega * self.sz_diag)[:, None] * rho
        out = -1j * (h_rho - h_rho.conj().T)
        m = self.dim_nuc
        gamma = self.gamma_r
        # D[S-]: jump repopulates the lower electron block from the upper
        out[:m, :m] += gamma * rho[m:, m:]
        out -= (0.5 * gamma) * self.p1_diag[:, None] * rho
        out -= (0.5 * gamma) * self.p1_diag[None, :] * rho
        return out

    def rhs_flat(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.rhs_matrix(y.reshape(self.dim, self.dim)).ravel()

    def bookkeeping_residual(self, rho: np.ndarray) -> float:
        rhs_diag = self.rhs_matrix(rho).diagonal().real
        leak = self.gamma_r * float(np.sum(self.p1_diag *
                                           rho.diagonal().real))
        return float(np.sum(self.exc_diag * rhs_diag)) + leak


def collective_initial_state(profile: CouplingProfile,
                             params: SystemParams) -> np.ndarray:
    """Electron in the pumped level, nuclei at the ladder rung m = P*J.

    Only polarizations that land exactly on a rung are representable in
    this sector; anything else needs the product-space or moment solvers.
    """
    n = profile.n
    j = 0.5 * n
    m0 = params.polarization * j
    k0 = round(m0 + j)
    if abs((m0 + j) - k0) > 1e-9:
        raise ParameterError(
            f"polarization {params.polarization} does not sit on a rung of "
            f"the J = {j} ladder")
    dim_nuc = n + 1
    rho = np.zeros((2 * dim_nuc, 2 * dim_nuc), dtype=complex)
    rho[int(k0), int(k0)] = 1.0
    return rho


def collective_evolve(profile: CouplingProfile, params: SystemParams,
                      t_max: float, n_samples: int = 400,
                      rtol: float = integrate.DEFAULT_RTOL,
                      atol: float = integrate.DEFAULT_ATOL,
                      method: str = integrate.DEFAULT_METHOD,
                      store_states: bool = False,
                      rho0: np.ndarray | None = None) -> TimeSeries:
    """Full Lindblad dynamics restricted to the symmetric sector."""
    engine = _CollectiveEngine(profile, params)
    if rho0 is None:
        rho0 = collective_initial_state(profile, params)
    else:
        rho0 = np.asarray(rho0, dtype=complex)
        if rho0.shape != (engine.dim, engine.dim):
            raise ParameterError(
                f"rho0 must have shape {(engine.dim, engine.dim)}")
    t_grid = integrate.sample_grid(t_max, n_samples)
    flat = integrate.integrate_sampled(engine.rhs_flat, rho0.ravel(), t_grid,
                                       rtol=rtol, atol=atol, method=method)
    n_t = len(t_grid)
    intensity = np.empty(n_t)
    a_z = np.empty(n_t)
    a_pm = np.empty(n_t)
    excitation = np.empty(n_t)
    omega_col = np.empty(n_t)
    residuals = np.empty(n_t)
    trace_dev = 0.0
    states = [] if store_states else None
    for k in range(n_t):
        rho = flat[k].reshape(engine.dim, engine.dim)
        diag = rho.diagonal().real
        intensity[k] = engine.gamma_r * float(np.sum(engine.p1_diag * diag))
        a_z[k] = float(np.sum(engine.az_diag * diag))
        a_pm[k] = float(np.sum(engine.apm_diag * diag))
        excitation[k] = float(np.sum(engine.exc_diag * diag))
        omega_col[k] = engine.omega_at(rho)
        residuals[k] = engine.bookkeeping_residual(rho)
        trace_dev = max(trace_dev, abs(float(diag.sum()) - 1.0))
        if store_states:
            states.append(rho.copy())
    meta = {
        "solver": "collective",
        "n": profile.n,
        "gamma_r": engine.gamma_r,
        "bookkeeping_max_residual": float(np.max(np.abs(residuals))),
        "trace_deviation": trace_dev,
    }
    t_ref = PLATEAU_UNITS / engine.gamma_r
    if t_ref <= t_grid[-1]:
        meta["plateau_time"] = t_ref
        meta["plateau_intensity"] = float(np.interp(t_ref, t_grid, intensity))
    if store_states:
        meta["states"] = states
    return TimeSeries(t=t_grid, intensity=intensity, a_z=a_z,
                      a_plus_minus=a_pm, excitation=excitation,
                      omega_s=omega_col, meta=meta)


def homogeneous_profile(n: int) -> CouplingProfile:
    """Convenience alias used by callers that only know a size."""
    return homogeneous_couplings(n)
