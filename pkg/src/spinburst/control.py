"""Dynamical compensation of the collective nuclear (Overhauser) field.

As the ensemble depolarizes, the longitudinal field g <Az>(t) it exerts on
the electron drifts by order a_total, detuning the flip-flop channel.  The
controller retargets the bare splitting every right-hand-side evaluation
(continuous feedback, which every accepted integrator step inherits) so the
*effective* splitting

    omega_eff(t) = omega_s(t) + g <Az>(t)

stays pinned at the configured target.  Solvers record the applied
omega_s(t) so runs expose what the controller did.
"""

from __future__ import annotations


def compensated_omega(omega_target: float, g: float, a_z_mean: float) -> float:
    """Bare splitting to apply so the effective splitting equals the target."""
    return omega_target - g * a_z_mean


def effective_splitting(omega_s: float, g: float, a_z_mean: float) -> float:
    """Splitting the electron actually sees, bare plus collective field."""
    return omega_s + g * a_z_mean
