"""System definition: coupling profiles, run parameters, regime diagnostics.

A simulated system is a single pumped electron spin exchanging excitation
with N nuclear spins through flip-flop couplings ``(g/2)(A+ S- + A- S+)``
plus the longitudinal term ``g Az Sz`` and an electron splitting
``omega_s Sz``, where ``A_mu = sum_i g_i sigma_i^mu``.  Couplings are kept
normalized to ``sum_i g_i^2 = 1`` and the overall scale g is chosen so the
total coupling ``A = g * sum_i g_i`` is 1 (natural units).  Physical inputs
in 2*pi*MHz are converted here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import A_TOTAL, M_S_DEFAULT
from .errors import ParameterError

INITIAL_STATE_KINDS = ("product", "dicke_mixture")


@dataclass(frozen=True)
class CouplingProfile:
    """Normalized hyperfine couplings plus the overall interaction scale.

    couplings: per-nucleus weights g_i with sum(g_i^2) == 1.
    g: overall scale; the physical coupling of nucleus i is g * g_i and the
        total coupling is a_total = g * sum(g_i).
    kind: provenance label ("homogeneous", "gaussian", "nv", "custom").
    positions: optional site coordinates, one row per nucleus.
    tensors: optional per-nucleus 3x3 anisotropic corrections in the same
        natural units as g; only the product-basis solver consumes these.
    scale_mhz: value of a_total in 2*pi*MHz when built from physical data.
    """

    couplings: np.ndarray
    g: float
    kind: str = "custom"
    positions: np.ndarray | None = None
    tensors: np.ndarray | None = None
    scale_mhz: float | None = None

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ParameterError("couplings must be a non-empty 1-d array")
        norm = float(np.sum(c * c))
        if not math.isclose(norm, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ParameterError(
                f"couplings must satisfy sum(g_i^2) = 1, got {norm!r}"
            )
        if self.g <= 0:
            raise ParameterError("overall coupling scale g must be positive")
        if self.tensors is not None:
            t = np.asarray(self.tensors, dtype=float)
            if t.shape != (c.size, 3, 3):
                raise ParameterError(
                    f"tensors must have shape ({c.size}, 3, 3), got {t.shape}"
                )
        object.__setattr__(self, "couplings", c)

    @property
    def n(self) -> int:
        return int(self.couplings.size)

    @property
    def a_total(self) -> float:
        """Total coupling A = g * sum_i g_i."""
        return float(self.g * np.sum(self.couplings))

    @property
    def n_effective(self) -> float:
        """Participation count (sum g_i)^2; equals n for homogeneous profiles."""
        return float(np.sum(self.couplings) ** 2)

    def is_homogeneous(self, tol: float = 1e-12) -> bool:
        c = self.couplings
        return bool(np.all(np.abs(c - c[0]) <= tol * max(1.0, abs(c[0]))))


def _normalized_profile(raw: np.ndarray, kind: str,
                        positions: np.ndarray | None = None,
                        tensors: np.ndarray | None = None,
                        raw_is_mhz: bool = False) -> CouplingProfile:
    """Build a natural-unit profile from raw non-negative coupling weights."""
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise ParameterError("raw couplings must be non-negative")
    quad = float(np.sqrt(np.sum(raw * raw)))
    if quad == 0.0:
        raise ParameterError("all couplings vanish; nothing to simulate")
    couplings = raw / quad
    # Fix the natural units A = g * sum(g_i) = 1.
    g = 1.0 / float(np.sum(couplings))
    # When raw weights are physical couplings, a_total in table units is
    # their plain sum; recorded so outputs can be rescaled to lab units.
    scale = float(np.sum(raw)) if raw_is_mhz else None
    return CouplingProfile(couplings=couplings, g=g, kind=kind,
                           positions=positions, tensors=tensors,
                           scale_mhz=scale)


def homogeneous_couplings(n: int) -> CouplingProfile:
    """n identical couplings: g_i = 1/sqrt(n), a_total = 1."""
    if n < 1:
        raise ParameterError(f"need at least one nucleus, got n={n}")
    return _normalized_profile(np.ones(n), "homogeneous")


def gaussian_couplings(lattice_side: int, width: float | None = None) -> CouplingProfile:
    """Couplings from a Gaussian envelope on an L x L lattice.

    Site (x, y) at integer offsets from the lattice center gets raw weight
    exp(-r^2 / (2 w^2)); the default width is L/4.  The profile inherits the
    full dihedral symmetry of the centered grid.
    """
    lattice = int(lattice_side)
    if lattice < 1:
        raise ParameterError(f"lattice side must be >= 1, got {lattice_side}")
    if width is None:
        width = lattice / 4.0
    if not (width > 0):
        raise ParameterError(f"width must be positive, got {width}")
    center = (lattice - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(lattice), np.arange(lattice), indexing="ij")
    dx = xs.ravel() - center
    dy = ys.ravel() - center
    r2 = dx * dx + dy * dy
    raw = np.exp(-r2 / (2.0 * width * width))
    positions = np.column_stack([dx, dy])
    return _normalized_profile(raw, "gaussian", positions=positions)


@dataclass(frozen=True)
class CouplingShell:
    """One shell of lattice sites sharing a coupling strength."""

    coupling_mhz: float      # in 2*pi*MHz
    multiplicity: int
    first_shell: bool = False


def load_coupling_table(path) -> list[CouplingShell]:
    """Read a shell table: whitespace columns coupling_2pi_MHz, multiplicity,
    first_shell(0/1).  Lines starting with '#' are comments."""
    shells = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParameterError(
                    f"{path}:{lineno}: expected 3 columns "
                    f"(coupling_mhz multiplicity first_shell), got {len(parts)}"
                )
            coupling = float(parts[0])
            mult = int(parts[1])
            first = bool(int(parts[2]))
            if coupling < 0 or mult < 1:
                raise ParameterError(f"{path}:{lineno}: bad shell entry {text!r}")
            shells.append(CouplingShell(coupling, mult, first))
    if not shells:
        raise ParameterError(f"{path}: empty coupling table")
    return shells


DEFAULT_NV_CUTOFF_MHZ = 0.5  # couplings below 2*pi*0.5 MHz are dropped


def nv_sample_environment(concentration: float,
                          table: list[CouplingShell],
                          cutoff_mhz: float = DEFAULT_NV_CUTOFF_MHZ,
                          seed: int = 0) -> CouplingProfile:
    """Sample one random nuclear environment around a defect center.

    Each non-first-shell lattice site in the table is occupied by an active
    nucleus with probability `concentration`.  First-shell sites are excluded
    (taken spinless), and occupied sites whose coupling falls below the
    cutoff are dropped.  Raises ParameterError when no nucleus survives.
    """
    if not 0.0 < concentration <= 1.0:
        raise ParameterError(
            f"concentration must lie in (0, 1], got {concentration}")
    rng = np.random.default_rng(seed)
    picked = []
    for shell in table:
        occupancy = rng.random(shell.multiplicity) < concentration
        if shell.first_shell or shell.coupling_mhz < cutoff_mhz:
            continue
        picked.extend([shell.coupling_mhz] * int(np.count_nonzero(occupancy)))
    if not picked:
        raise ParameterError(
            "sampled environment has no active nucleus above the cutoff")
    raw = np.array(picked, dtype=float)
    return _normalized_profile(raw, "nv", raw_is_mhz=True)


def sample_environment_with_count(concentration: float,
                                  table: list[CouplingShell],
                                  n_target: int,
                                  cutoff_mhz: float = DEFAULT_NV_CUTOFF_MHZ,
                                  seed: int = 0,
                                  max_tries: int = 100000) -> tuple[CouplingProfile, int]:
    """Rejection-sample environments until one has exactly n_target nuclei.

    Returns (profile, seed_used); seeds are tried in order starting at
    `seed`, so results are reproducible.
    """
    for trial_seed in range(seed, seed + max_tries):
        try:
            profile = nv_sample_environment(concentration, table,
                                            cutoff_mhz=cutoff_mhz,
                                            seed=trial_seed)
        except ParameterError:
            continue
        if profile.n == n_target:
            return profile, trial_seed
    raise ParameterError(
        f"no environment with {n_target} nuclei found in {max_tries} seeds")


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of one run, in natural units (a_total of the
    profile sets the scale).

    gamma_r: electron decay rate.
    omega_s: electron splitting; with compensate=True this is the target
        effective splitting the controller holds by absorbing the collective
        nuclear field.
    m_s: z projection of the pumped electron level (enters the longitudinal
        coupling and the nuclear-only equation's electron back-action term).
    polarization: initial nuclear polarization in [-1, 1].
    initial_state: "product" or "dicke_mixture".
    """

    gamma_r: float
    omega_s: float = 0.5 * A_TOTAL
    compensate: bool = False
    m_s: float = M_S_DEFAULT
    polarization: float = 1.0
    initial_state: str = "product"

    def __post_init__(self):
        if self.gamma_r < 0:
            raise ParameterError(f"gamma_r must be >= 0, got {self.gamma_r}")
        if not -1.0 <= self.polarization <= 1.0:
            raise ParameterError(
                f"polarization must lie in [-1, 1], got {self.polarization}")
        if self.initial_state not in INITIAL_STATE_KINDS:
            raise ParameterError(
                f"initial_state must be one of {INITIAL_STATE_KINDS}, "
                f"got {self.initial_state!r}")


@dataclass(frozen=True)
class RegimeSummary:
    """Derived regime quantities for a (profile, params) pair.

    epsilon: cooperation parameter a_total / (2 delta).
    delta: |gamma_r/2 + i omega_s|.
    c_r, c_i: dissipative and coherent rates of the nuclear-only equation.
    cooperative_rate: n_effective * c_r, the collective early-time rate.
    bottleneck: True when the cooperative rate exceeds the emission cap
        gamma_r / 2, so the electron throughput limits the burst.
    """

    epsilon: float
    delta: float
    c_r: float
    c_i: float
    a_total: float
    n_effective: float
    cooperative_rate: float
    bottleneck: bool


def regime(profile: CouplingProfile, params: SystemParams) -> RegimeSummary:
    """Regime diagnostics; with compensation on, omega_s is the constant
    effective splitting so the same formulas hold for the whole run."""
    a = profile.a_total
    delta = math.hypot(0.5 * params.gamma_r, params.omega_s)
    if delta == 0.0:
        raise ParameterError(
            "gamma_r and omega_s cannot both vanish (delta = 0)")
    eps = a / (2.0 * delta)
    scale = (profile.g / (2.0 * delta)) ** 2
    c_r = scale * params.gamma_r
    c_i = scale * params.omega_s
    coop = profile.n_effective * c_r
    return RegimeSummary(
        epsilon=eps,
        delta=delta,
        c_r=c_r,
        c_i=c_i,
        a_total=a,
        n_effective=profile.n_effective,
        cooperative_rate=coop,
        bottleneck=bool(coop > 0.5 * params.gamma_r),
    )


def gamma_for_epsilon(epsilon: float, a_total: float = A_TOTAL) -> float:
    """Decay rate realizing a given epsilon at the splitting omega_s = A/2.

    There epsilon = A / sqrt(gamma_r^2 + A^2), inverted to
    gamma_r = A sqrt(1 - epsilon^2) / epsilon.  epsilon = 1 is rejected as
    degenerate (zero pump rate), epsilon > 1 is unreachable at this
    detuning.
    """
    if a_total <= 0:
        raise ParameterError(f"a_total must be positive, got {a_total}")
    if not 0.0 < epsilon <= 1.0:
        raise ParameterError(
            f"epsilon must lie in (0, 1) at omega_s = A/2, got {epsilon}")
    if epsilon == 1.0:
        raise ParameterError("degenerate: zero pump rate at epsilon = 1")
    return a_total * math.sqrt(1.0 - epsilon * epsilon) / epsilon
