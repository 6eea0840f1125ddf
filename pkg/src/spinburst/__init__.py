"""Simulators for collective optical emission through a pumped central spin.

A single electron (quantum dot or color center) is optically cycled while
exchanging excitation with a bath of nuclear spins through hyperfine
flip-flops.  The bath drains its polarization through the electron; for
strong enough cooperation the photon rate leaving the electron grows into
a burst that scales superextensively with the bath size.

Solvers, from most expensive to cheapest:

    exact        full density matrix, any couplings, n <= 14
    collective   symmetric sector only, homogeneous couplings
    reduced      nuclear-only master equation, fast electron limit
    cumulant     second-order moment closure, hundreds of nuclei
    semiclassical  mean-field Bloch vectors and steady-state scans

All rates are quoted in units of the total hyperfine coupling; see
`model.CouplingProfile` for the normalization contract.
"""

from .constants import A_TOTAL
from .errors import (CapacityError, ClosureGapError, ConfigError,
                     IntegrationError, InvariantViolation, ParameterError,
                     SpinburstError)
from .model import (CouplingProfile, SystemParams, RegimeSummary,
                    gamma_for_epsilon, gaussian_couplings,
                    homogeneous_couplings, load_coupling_table,
                    nv_sample_environment, regime)
from .series import TimeSeries, first_local_maximum, peak, relative_peak

__all__ = [
    "A_TOTAL",
    "CapacityError",
    "ClosureGapError",
    "ConfigError",
    "CouplingProfile",
    "IntegrationError",
    "InvariantViolation",
    "ParameterError",
    "RegimeSummary",
    "SpinburstError",
    "SystemParams",
    "TimeSeries",
    "first_local_maximum",
    "gamma_for_epsilon",
    "gaussian_couplings",
    "homogeneous_couplings",
    "load_coupling_table",
    "nv_sample_environment",
    "peak",
    "regime",
    "relative_peak",
]

__version__ = "0.1.0"
