"""Mean-field dynamics and steady-state scans for the driven ensemble.

Every nucleus is treated as an identical classical Bloch vector a (spin
length 1/2) and the electron as a damped Bloch vector s.  With
homogeneous normalized couplings the pair rate is g^2 = 1/n, giving

    ds/dt = (sqrt(n) g a + omega_s z + omega_xe x) x s  - relaxation
    da/dt = (g/sqrt(n) s' + omega_x x) x a

where relaxation is the pump (gamma_r/2, gamma_r/2, gamma_r on the
z-offset) and s' carries the level shift kappa on its z component.  A
transverse nuclear drive omega_x competes with the pump-induced
polarization; scanning it (or any other knob) with continuation from the
previous converged point exposes bistable branches, which the
up-then-down scan comparison reports as hysteresis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .constants import electron_z_shift
from .errors import IntegrationError, InvariantViolation, ParameterError

DEFAULT_RELAX_TIME = 200.0
DEFAULT_CONVERGENCE_TOL = 1e-9
BLOCH_TOL = 1e-6


@dataclass
class MeanFieldParams:
    n: int
    gamma_r: float
    omega_s: float = 0.0
    omega_x: float = 0.0           # transverse drive on the nuclei
    omega_x_electron: float = 0.0  # transverse drive on the electron
    m_s: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("need at least one nucleus")
        if self.gamma_r < 0:
            raise ParameterError("pump rate must be nonnegative")


@dataclass
class MeanFieldState:
    s: np.ndarray  # electron Bloch vector, |s| <= 1/2
    a: np.ndarray  # per-nucleus Bloch vector, |a| = 1/2

    @classmethod
    def polarized(cls, nuclear_up: bool = True) -> "MeanFieldState":
        sign = 1.0 if nuclear_up else -1.0
        return cls(s=np.array([0.0, 0.0, -0.5]),
                   a=np.array([0.0, 0.0, sign * 0.5]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.s, self.a])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        y = np.asarray(y, dtype=float)
        return cls(s=y[:3].copy(), a=y[3:].copy())


def mean_field_rhs(params: MeanFieldParams, y: np.ndarray) -> np.ndarray:
    """Right-hand side on the packed vector (s, a)."""
    s = y[:3]
    a = y[3:]
    kappa = electron_z_shift(params.m_s)
    # homogeneous couplings: g <A> = (1/sqrt(n)) * sqrt(n) a = a, and the
    # per-pair backaction on one nucleus is g^2 = 1/n
    b_e = np.array([
        a[0] + params.omega_x_electron,
        a[1],
        a[2] + params.omega_s,
    ])
    b_n = np.array([
        s[0] / params.n + params.omega_x,
        s[1] / params.n,
        (s[2] + kappa) / params.n,
    ])
    ds = np.cross(b_e, s)
    ds[0] -= 0.5 * params.gamma_r * s[0]
    ds[1] -= 0.5 * params.gamma_r * s[1]
    ds[2] -= params.gamma_r * (s[2] + 0.5)
    da = np.cross(b_n, a)
    return np.concatenate([ds, da])


def order_parameter(state: MeanFieldState) -> float:
    """Transverse nuclear polarization; zero on the dark branch."""
    return float(np.hypot(state.a[0], state.a[1]))


def _check_bloch(y: np.ndarray, where: str):
    s_norm = float(np.linalg.norm(y[:3]))
    a_norm = float(np.linalg.norm(y[3:]))
    if s_norm > 0.5 + BLOCH_TOL or a_norm > 0.5 + BLOCH_TOL:
        raise InvariantViolation(
            f"Bloch vector left the physical ball during {where}: "
            f"|s| = {s_norm:.6f}, |a| = {a_norm:.6f}",
            snapshot={"s": y[:3].tolist(), "a": y[3:].tolist()})


def relax_to_steady_state(params: MeanFieldParams, state0: MeanFieldState,
                          relax_time: float = DEFAULT_RELAX_TIME,
                          tol: float = DEFAULT_CONVERGENCE_TOL,
                          max_rounds: int = 6):
    """Integrate until the right-hand side is below tol in max norm.

    Returns (state, converged flag, final residual).  Keeps doubling the
    horizon up to max_rounds; a run that never settles is reported, not
    raised, so scans can flag individual points.
    """
    y = state0.to_vector()
    horizon = relax_time
    converged = False
    residual = float(np.max(np.abs(mean_field_rhs(params, y))))
    for _ in range(max_rounds):
        if residual < tol:
            converged = True
            break
        sol = solve_ivp(lambda t, v: mean_field_rhs(params, v),
                        (0.0, horizon), y, method="DOP853",
                        rtol=1e-10, atol=1e-12, dense_output=False)
        if not sol.success:
            raise IntegrationError(
                f"mean-field relaxation failed: {sol.message}")
        y = sol.y[:, -1]
        _check_bloch(y, "relaxation")
        residual = float(np.max(np.abs(mean_field_rhs(params, y))))
        horizon *= 2.0
    else:
        converged = residual < tol
    return MeanFieldState.from_vector(y), converged, residual


@dataclass
class ScanResult:
    param: str
    values: np.ndarray
    states: list
    converged: np.ndarray
    residuals: np.ndarray
    direction: str
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        self.order = np.array([order_parameter(s) for s in self.states])

    def rows(self):
        for k, v in enumerate(self.values):
            st = self.states[k]
            yield {
                "param": self.param, "value": float(v),
                "s_x": float(st.s[0]), "s_y": float(st.s[1]),
                "s_z": float(st.s[2]),
                "a_x": float(st.a[0]), "a_y": float(st.a[1]),
                "a_z": float(st.a[2]),
                "order": float(self.order[k]),
                "converged": bool(self.converged[k]),
                "direction": self.direction,
            }


_SCANNABLE = ("omega_x", "omega_s", "gamma_r", "omega_x_electron")


def steady_state_scan(params: MeanFieldParams, scan_param: str,
                      values, state0: MeanFieldState | None = None,
                      relax_time: float = DEFAULT_RELAX_TIME,
                      tol: float = DEFAULT_CONVERGENCE_TOL) -> ScanResult:
    """Continuation scan: each point starts from the previous fixed point.

    A small transverse kick is added to the seed so the scan can fall off
    an unstable branch instead of riding it.
    """
    if scan_param not in _SCANNABLE:
        raise ParameterError(
            f"scan parameter must be one of {_SCANNABLE}, got {scan_param}")
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ParameterError("scan needs a 1d sequence of values")
    if state0 is None:
        state0 = MeanFieldState.polarized()
    direction = "up" if values[-1] >= values[0] else "down"
    states = []
    converged = np.zeros(len(values), dtype=bool)
    residuals = np.zeros(len(values))
    seed = state0
    base = {"n": params.n, "gamma_r": params.gamma_r,
            "omega_s": params.omega_s, "omega_x": params.omega_x,
            "omega_x_electron": params.omega_x_electron, "m_s": params.m_s}
    for k, v in enumerate(values):
        base[scan_param] = float(v)
        p = MeanFieldParams(**base)
        kicked = MeanFieldState(s=seed.s.copy(), a=seed.a.copy())
        if abs(kicked.a[0]) + abs(kicked.a[1]) < 1e-12:
            # renormalize so the kick rotates rather than grows the spin
            kicked.a = kicked.a + np.array([1e-6, 0.0, 0.0])
            kicked.a *= 0.5 / np.linalg.norm(kicked.a)
        st, ok, res = relax_to_steady_state(p, kicked,
                                            relax_time=relax_time, tol=tol)
        states.append(st)
        converged[k] = ok
        residuals[k] = res
        seed = st
    return ScanResult(param=scan_param, values=values, states=states,
                      converged=converged, residuals=residuals,
                      direction=direction)


def hysteresis_gap(up: ScanResult, down: ScanResult,
                   threshold: float = 1e-3):
    """Largest order-parameter mismatch between up and down sweeps.

    Returns (gap, value at the gap, hysteretic flag).  The comparison is
    symmetric in the two sweeps; the down result is re-indexed onto the
    up grid.
    """
    if up.param != down.param:
        raise ParameterError("scans vary different parameters")
    grid_up = up.values
    grid_down = down.values[::-1]
    if len(grid_up) != len(grid_down) or not np.allclose(grid_up, grid_down):
        raise ParameterError("scans must cover the same grid")
    diff = np.abs(up.order - down.order[::-1])
    k = int(np.argmax(diff))
    return float(diff[k]), float(grid_up[k]), bool(diff[k] > threshold)
