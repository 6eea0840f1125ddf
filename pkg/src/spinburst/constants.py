"""Shared conventions for the whole package.

Everything downstream (operator builders, solvers, moment equations) imports
its sign and ordering conventions from here, so there is exactly one place
where they can disagree with each other.

Units
-----
All solver-facing quantities are expressed in natural units where the total
hyperfine coupling ``A = g * sum_i g_i`` is 1 and time is measured in 1/A.
Physical inputs (MHz tables for defect-center environments) are converted at
the model/CLI boundary, never inside a solver.

Two-level conventions
---------------------
Every two-level constituent (the electron pseudo-spin and each nucleus) uses
basis index 0 for the lower state and index 1 for the upper state, so the
basis index counts excitations:

* nucleus: ``0 = |down>``, ``1 = |up>``; ``sigma_plus |down> = |up>``.
* electron: ``0 = |g>`` (the optically pumped, non-emitting level),
  ``1 = |e>`` (the level whose decay emits the detected photon);
  ``s_minus |e> = |g>`` at rate ``gamma_r``.

"Fully polarized" initial conditions for an emission run mean every nucleus
in ``|up>`` (polarization +1), i.e. the state the collective lowering
operator does *not* annihilate.  The dark "fully polarized" stationary state
of the nuclear-only equation is the opposite end, every nucleus in ``|down>``
(polarization -1), which is in the kernel of the collective lowering
operator.

The electron number operator ``s_plus s_minus`` projects on ``|e>``; photon
flux is ``gamma_r * <s_plus s_minus>``.  The z operator used in Hamiltonians
is ``diag(m_lower, m_lower + 1)``: the spin-1/2 ``diag(-1/2, +1/2)`` shifted
so the pumped level carries the physical z projection ``m_lower`` (0 for a
defect-center {m_s=0, m_s=1} pair).  With ``m_lower = 0`` an electron parked
in ``|g>`` exerts no mean field on the nuclei, which is what makes the
nuclear-only equation free of a first-order electron back-action term there.

Tensor ordering
---------------
Product-basis spaces order factors electron first, then nuclei 0..N-1, with
the electron index most significant (plain ``kron`` chains).
"""

from __future__ import annotations

import numpy as np

# Basis indices for every two-level factor.
LOWER = 0
UPPER = 1

# Single two-level-system operators, basis (|lower>, |upper>).
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[-0.5, 0.0], [0.0, 0.5]], dtype=complex)
SIGMA_X = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, 0.5j], [-0.5j, 0.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# Natural-unit value of the total hyperfine coupling.
A_TOTAL = 1.0

# Default z projection of the pumped electron level (m_s = 0 for a
# defect-center {0, 1} pair; the upper level then carries m_s + 1).
M_S_DEFAULT = 0.0

# Polarization bookkeeping: per-nucleus upper-state population for a product
# state of polarization p is (1 + p) / 2.
def up_population(polarization: float) -> float:
    if not -1.0 <= polarization <= 1.0:
        raise ValueError(f"polarization must lie in [-1, 1], got {polarization}")
    return 0.5 * (1.0 + polarization)


def electron_z_shift(m_s: float) -> float:
    """Identity shift taking the spin-1/2 z operator to diag(m_s, m_s + 1)."""
    return m_s + 0.5
