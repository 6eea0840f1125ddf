"""Sampled observable traces shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Column order of the on-disk CSV representation.
SERIES_COLUMNS = ("t", "intensity", "a_z", "a_plus_minus", "excitation", "omega_s")


@dataclass
class TimeSeries:
    """Observables on a sampling grid.

    t: sample times.
    intensity: photon flux gamma_r <S+ S-> (or its eliminated-equation
        counterpart c_r <A+ A->).
    a_z: collective longitudinal nuclear field <Az>.
    a_plus_minus: <A+ A->.
    excitation: total excitation number (electron + nuclei).
    omega_s: instantaneous electron splitting (constant unless compensated).
    meta: free-form run annotations (solver name, parameters, diagnostics).
    """

    t: np.ndarray
    intensity: np.ndarray
    a_z: np.ndarray
    a_plus_minus: np.ndarray
    excitation: np.ndarray
    omega_s: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(getattr(self, name)) for name in SERIES_COLUMNS}
        if len(lengths) != 1:
            raise ParameterError(f"column lengths differ: {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        if name not in SERIES_COLUMNS:
            raise ParameterError(f"unknown series column {name!r}")
        return getattr(self, name)

    def intensity_at(self, t_ref: float) -> float:
        """Linear interpolation of the intensity trace."""
        if not (self.t[0] <= t_ref <= self.t[-1]):
            raise ParameterError(
                f"reference time {t_ref} outside sampled range "
                f"[{self.t[0]}, {self.t[-1]}]")
        return float(np.interp(t_ref, self.t, self.intensity))


def peak(series: TimeSeries) -> tuple[float, float]:
    """(peak intensity, peak time) over the sampled grid."""
    k = int(np.argmax(series.intensity))
    return float(series.intensity[k]), float(series.t[k])


def first_local_maximum(series: TimeSeries) -> tuple[float, float]:
    """First interior sample that beats both neighbors; falls back to the
    global maximum for monotone traces."""
    y = series.intensity
    for k in range(1, len(y) - 1):
        if y[k] >= y[k - 1] and y[k] >= y[k + 1] and y[k] > 0:
            return float(y[k]), float(series.t[k])
    return peak(series)


def relative_peak(series: TimeSeries,
                  t_ref: float | None = None,
                  reference_intensity: float | None = None) -> float:
    """Peak intensity over a reference intensity.

    The reference is, in order of precedence: an explicit
    `reference_intensity` (e.g. the first local maximum of an
    independent-emitter run), the interpolated intensity at `t_ref`
    (the quasi-steady plateau convention, t_ref = 5/gamma_r by default in
    the solvers), or the first strictly positive sample (rate-equation
    traces that start emitting at t = 0).
    """
    top, _ = peak(series)
    if reference_intensity is None:
        if t_ref is not None:
            reference_intensity = series.intensity_at(t_ref)
        else:
            positive = np.nonzero(series.intensity > 0)[0]
            if positive.size == 0:
                raise ParameterError("series never emits; no reference point")
            reference_intensity = float(series.intensity[positive[0]])
    if reference_intensity <= 0:
        raise ParameterError(
            f"reference intensity must be positive, got {reference_intensity}")
    return top / reference_intensity
