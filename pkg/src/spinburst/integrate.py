"""Shared adaptive integration wrapper.

All solvers integrate with an embedded Runge-Kutta pair under per-step error
control (scipy's solve_ivp machinery).  If the explicit method stalls, i.e.
fails with a collapsing step, the run is retried once with a semi-implicit
multistep scheme before giving up; failures carry the last good time.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_METHOD = "DOP853"
STIFF_FALLBACK = "BDF"


def integrate_sampled(rhs, y0: np.ndarray, t_grid: np.ndarray,
                      rtol: float = DEFAULT_RTOL,
                      atol: float = DEFAULT_ATOL,
                      method: str = DEFAULT_METHOD) -> np.ndarray:
    """Integrate dy/dt = rhs(t, y) and return y at the sample times
    (shape (len(t_grid), len(y0))); t_grid must start at the initial time."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2:
        raise IntegrationError("need at least two sample times")
    if np.any(np.diff(t_grid) <= 0):
        raise IntegrationError("sample times must increase strictly")

    def attempt(chosen_method):
        return solve_ivp(rhs, (t_grid[0], t_grid[-1]), y0, method=chosen_method,
                         t_eval=t_grid, rtol=rtol, atol=atol)

    sol = attempt(method)
    if not sol.success and method != STIFF_FALLBACK:
        retry = attempt(STIFF_FALLBACK)
        if retry.success:
            sol = retry
    if not sol.success:
        last = float(sol.t[-1]) if sol.t.size else float(t_grid[0])
        raise IntegrationError(
            f"integration failed at t = {last:g}: {sol.message}",
            last_good_time=last)
    return np.ascontiguousarray(sol.y.T)


def sample_grid(t_max: float, n_samples: int) -> np.ndarray:
    if t_max <= 0:
        raise IntegrationError(f"t_max must be positive, got {t_max}")
    if n_samples < 2:
        raise IntegrationError(f"need >= 2 samples, got {n_samples}")
    return np.linspace(0.0, t_max, n_samples)
