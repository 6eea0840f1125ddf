"""Nuclear-only master equation after adiabatic elimination of the electron.

For a fast electron cycle the electron degrees of freedom can be traced
out, leaving

    d rho / dt = c_r (A- rho A+ - 1/2 {A+ A-, rho})
                 - i c_i [A+ A-, rho]
                 - i g m_s [Az, rho]

with c_r = g^2 gamma_r / (2 delta)^2 and c_i = g^2 omega_s / (2 delta)^2,
delta = |gamma_r/2 + i omega_s|.  The emitted intensity is c_r <A+ A->.
The last term is the electron back-action on the nuclei, proportional to
the z projection m_s of the level the electron is parked in; it vanishes
for the default m_s = 0.

Validity shrinks as the cooperation parameter epsilon = a_total/(2 delta)
grows; the solver integrates whatever it is given and leaves regime
judgement to `model.regime`.
"""

from __future__ import annotations

import numpy as np

from . import integrate
from .constants import up_population
from .errors import CapacityError, ParameterError
from .model import CouplingProfile, RegimeSummary, SystemParams, regime
from .operators import NuclearSpace, dicke_projector_mixture
from .series import TimeSeries

N_MAX_DEFAULT = 12


def _require_capacity(n: int, n_max: int):
    if n > n_max:
        raise CapacityError(
            f"nuclear-only solver handles at most {n_max} nuclei (got {n}); "
            "use the moment-closure solver for larger systems")


def initial_state(profile: CouplingProfile, params: SystemParams,
                  n_max: int = N_MAX_DEFAULT) -> np.ndarray:
    _require_capacity(profile.n, n_max)
    if params.initial_state == "product":
        up = up_population(params.polarization)
        probs = np.array([1.0])
        for _ in range(profile.n):
            probs = np.kron(probs, np.array([1.0 - up, up]))
        return np.diag(probs).astype(complex)
    if not profile.is_homogeneous():
        raise ParameterError(
            "dicke_mixture initial state is defined for homogeneous "
            "profiles only")
    return dicke_projector_mixture(profile.n, params.polarization)


class _Engine:
    def __init__(self, profile: CouplingProfile, params: SystemParams):
        self.space = NuclearSpace(profile)
        self.params = params
        self.summary: RegimeSummary = regime(profile, params)
        self.g = profile.g
        self.a_minus = self.space.a_minus
        self.a_pm = (self.space.a_plus @ self.space.a_minus).tocsr()
        self.az_diag = self.space.a_z_diag
        self.exc_diag = self.space.excitation_diag
        self.dim = self.space.dim

    def rhs_matrix(self, rho: np.ndarray) -> np.ndarray:
        c_r = self.summary.c_r
        c_i = self.summary.c_i
        jump = self.a_minus @ rho @ self.a_minus.conj().T
        pm_rho = self.a_pm @ rho
        out = c_r * (jump - 0.5 * (pm_rho + pm_rho.conj().T))
        out += -1j * c_i * (pm_rho - pm_rho.conj().T)
        knight = self.g * self.params.m_s
        if knight != 0.0:
            out += -1j * knight * (self.az_diag[:, None] * rho -
                                   rho * self.az_diag[None, :])
        return out

    def rhs_flat(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.rhs_matrix(y.reshape(self.dim, self.dim)).ravel()

    def intensity(self, rho: np.ndarray) -> float:
        return self.summary.c_r * float(
            np.real((self.a_pm @ rho).diagonal().sum()))

    def bookkeeping_residual(self, rho: np.ndarray) -> float:
        rhs_diag = self.rhs_matrix(rho).diagonal().real
        return float(np.sum(self.exc_diag * rhs_diag)) + self.intensity(rho)


def reduced_rhs(profile: CouplingProfile, params: SystemParams,
                rho: np.ndarray, n_max: int = N_MAX_DEFAULT) -> np.ndarray:
    """One right-hand-side evaluation of the nuclear-only equation."""
    _require_capacity(profile.n, n_max)
    rho = np.asarray(rho, dtype=complex)
    engine = _Engine(profile, params)
    if rho.shape != (engine.dim, engine.dim):
        raise ParameterError(
            f"rho must have shape {(engine.dim, engine.dim)}, got {rho.shape}")
    return engine.rhs_matrix(rho)


def is_stationary(profile: CouplingProfile, params: SystemParams,
                  rho: np.ndarray, tol: float = 1e-10,
                  n_max: int = N_MAX_DEFAULT) -> bool:
    """True when the entrywise 1-norm of the right-hand side is below tol."""
    residual = reduced_rhs(profile, params, rho, n_max=n_max)
    return float(np.sum(np.abs(residual))) < tol


def evolve_reduced(profile: CouplingProfile, params: SystemParams,
                   t_max: float, n_samples: int = 400,
                   rtol: float = integrate.DEFAULT_RTOL,
                   atol: float = integrate.DEFAULT_ATOL,
                   method: str = integrate.DEFAULT_METHOD,
                   n_max: int = N_MAX_DEFAULT,
                   store_states: bool = False,
                   rho0: np.ndarray | None = None) -> TimeSeries:
    """Integrate the nuclear-only equation and sample observables.

    The intensity column holds c_r <A+ A->, the eliminated-equation photon
    flux; excitation is the nuclear excitation sum_i <sigma_i^+ sigma_i^->.
    """
    _require_capacity(profile.n, n_max)
    engine = _Engine(profile, params)
    if rho0 is None:
        rho0 = initial_state(profile, params, n_max=n_max)
    else:
        rho0 = np.asarray(rho0, dtype=complex)
    t_grid = integrate.sample_grid(t_max, n_samples)
    flat = integrate.integrate_sampled(engine.rhs_flat, rho0.ravel(), t_grid,
                                       rtol=rtol, atol=atol, method=method)
    n_t = len(t_grid)
    intensity = np.empty(n_t)
    a_z = np.empty(n_t)
    a_pm = np.empty(n_t)
    excitation = np.empty(n_t)
    residuals = np.empty(n_t)
    trace_dev = 0.0
    states = [] if store_states else None
    for k in range(n_t):
        rho = flat[k].reshape(engine.dim, engine.dim)
        diag = rho.diagonal().real
        a_pm[k] = float(np.real((engine.a_pm @ rho).diagonal().sum()))
        intensity[k] = engine.summary.c_r * a_pm[k]
        a_z[k] = float(np.sum(engine.az_diag * diag))
        excitation[k] = float(np.sum(engine.exc_diag * diag))
        residuals[k] = engine.bookkeeping_residual(rho)
        trace_dev = max(trace_dev, abs(float(np.real(np.trace(rho))) - 1.0))
        if store_states:
            states.append(rho.copy())
    meta = {
        "solver": "reduced",
        "n": profile.n,
        "c_r": engine.summary.c_r,
        "c_i": engine.summary.c_i,
        "bookkeeping_max_residual": float(np.max(np.abs(residuals))),
        "trace_deviation": trace_dev,
    }
    if store_states:
        meta["states"] = states
    return TimeSeries(t=t_grid, intensity=intensity, a_z=a_z,
                      a_plus_minus=a_pm, excitation=excitation,
                      omega_s=np.full(n_t, params.omega_s), meta=meta)
