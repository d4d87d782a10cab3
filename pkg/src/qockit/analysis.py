"""Post-processing: spectra, band surgery, population traces, landscapes.

All operations are pure functions of their inputs. Spectra are computed on
the raw field without an extra window; optimized pulses already vanish at
both grid ends, so windowing would only bias the peak heights.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericsError
from .model import LevelSystem, PulseParametrization, TargetSpec, parametrized_field
from .propagation import Pulse, StateTrajectory, TimeGrid, propagate
from .units import CM1_PER_AU

__all__ = [
    "Spectrum",
    "LandscapeGrid",
    "pulse_spectrum",
    "band_filter_pulse",
    "landscape_scan",
    "population_trace",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Discrete Fourier transform of a sampled field.

    ``amplitude`` holds dt * DFT, the Riemann approximation of the
    continuous transform, on the signed frequency axis in ascending order;
    ``power`` its squared magnitude. The frequency resolution is exactly
    2 pi / T because the last grid sample (which duplicates t = 0 after
    periodic extension) is excluded from the transform.
    """

    omega_au: np.ndarray
    omega_cm1: np.ndarray
    amplitude: np.ndarray
    power: np.ndarray
    window: str = "none"

    @property
    def resolution(self) -> float:
        return float(self.omega_au[1] - self.omega_au[0])

    def band_power(self, lo: float, hi: float) -> float:
        """Integrated power over lo <= |omega| <= hi (trapezoid-free sum,
        bins are uniform)."""
        if not hi >= lo >= 0.0:
            raise ConfigError("band edges must satisfy 0 <= lo <= hi")
        mask = (np.abs(self.omega_au) >= lo) & (np.abs(self.omega_au) <= hi)
        return float(self.power[mask].sum() * self.resolution)


@dataclass(frozen=True, eq=False)
class LandscapeGrid:
    """Figure of merit on a two-parameter field grid.

    ``values[i, j]`` belongs to (e1_axis[i], e2_axis[j]).
    """

    e1_axis: np.ndarray
    e2_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.e1_axis.size, self.e2_axis.size):
            raise ConfigError("landscape matrix shape does not match the axes")
        if not np.all(np.isfinite(self.values)):
            raise NumericsError("landscape contains non-finite entries")


def pulse_spectrum(pulse: Pulse, grid: Optional[TimeGrid] = None) -> Spectrum:
    """Transform of a real pulse; both signed-frequency amplitudes and power."""
    if grid is None:
        grid = pulse.grid
    m = grid.n_points - 1
    dt = grid.dt
    transform = np.fft.fft(pulse.values[:m]) * dt
    omega = 2.0 * np.pi * np.fft.fftfreq(m, d=dt)
    order = np.fft.fftshift(np.arange(m))
    omega = omega[order]
    transform = transform[order]
    return Spectrum(
        omega_au=omega,
        omega_cm1=omega * CM1_PER_AU,
        amplitude=transform,
        power=np.abs(transform) ** 2,
    )


def band_filter_pulse(pulse: Pulse, keep_intervals) -> Pulse:
    """Remove all spectral amplitude outside the kept frequency intervals.

    Intervals are (lo, hi) pairs in angular frequency (a.u.), applied to
    |omega| so the mirrored negative-frequency components stay consistent
    and the output stays real. An empty list removes everything.
    """
    grid = pulse.grid
    m = grid.n_points - 1
    nyquist = np.pi / grid.dt
    intervals = [(float(lo), float(hi)) for lo, hi in keep_intervals]
    for lo, hi in intervals:
        if not 0.0 <= lo <= hi:
            raise ConfigError(
                "keep interval (%g, %g) is not ordered and nonnegative"
                % (lo, hi)
            )
        if lo > nyquist * (1.0 + 1e-12):
            raise ConfigError(
                "keep interval (%g, %g) lies beyond the Nyquist frequency %g"
                % (lo, hi, nyquist)
            )
    transform = np.fft.fft(pulse.values[:m])
    omega = np.abs(2.0 * np.pi * np.fft.fftfreq(m, d=grid.dt))
    mask = np.zeros(m, dtype=bool)
    for lo, hi in intervals:
        mask |= (omega >= lo) & (omega <= hi)
    filtered = np.fft.ifft(transform * mask)
    scale = max(float(np.abs(filtered.real).max()), 1.0)
    residue = float(np.abs(filtered.imag).max())
    if residue > 1e-12 * scale:
        raise NumericsError(
            "band filter produced imaginary residue %.3e" % residue
        )
    values = np.empty(grid.n_points)
    values[:m] = filtered.real
    values[m] = filtered.real[0]
    return Pulse(grid, values)


def _merit_function(system: LevelSystem, merit):
    if isinstance(merit, TargetSpec):
        return merit.merit
    if isinstance(merit, (tuple, list)) and len(merit) == 3 \
            and merit[0] == "coherence":
        ia = system.index(merit[1])
        ib = system.index(merit[2])
        return lambda psi: 2.0 * float(np.real(psi[ia] * np.conj(psi[ib])))
    raise ConfigError(
        "merit must be a TargetSpec or ('coherence', label_a, label_b)"
    )


def landscape_scan(system: LevelSystem, base: PulseParametrization,
                   e1_axis, e2_axis, grid: TimeGrid, merit) -> LandscapeGrid:
    """Scan the figure of merit over the two field-amplitude axes.

    Every grid point propagates the ground state under the parametrized
    field with the given (E1, E2) amplitudes and records the merit of the
    final state.
    """
    import dataclasses

    e1_axis = np.asarray(e1_axis, dtype=np.float64)
    e2_axis = np.asarray(e2_axis, dtype=np.float64)
    for name, axis in (("E1", e1_axis), ("E2", e2_axis)):
        if axis.ndim != 1 or axis.size < 1:
            raise ConfigError("%s axis must be a nonempty 1d array" % name)
        if axis.size > 1 and not np.all(np.diff(axis) > 0.0):
            raise ConfigError("%s axis must be strictly increasing" % name)

    figure = _merit_function(system, merit)
    values = np.empty((e1_axis.size, e2_axis.size))
    for i, e1 in enumerate(e1_axis):
        for j, e2 in enumerate(e2_axis):
            params = dataclasses.replace(base, e1=float(e1), e2=float(e2))
            pulse = parametrized_field(params, grid)
            final = propagate(system, pulse).final_state
            values[i, j] = figure(final)
    return LandscapeGrid(e1_axis=e1_axis, e2_axis=e2_axis, values=values)


def population_trace(trajectory: StateTrajectory,
                     levels: Optional[Sequence[int]] = None) -> np.ndarray:
    """Populations of the selected levels at every grid time, shape (n, k)."""
    pops = trajectory.populations()
    if levels is None:
        return pops
    idx = np.asarray(levels, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("level selection must be a nonempty sequence")
    if idx.min() < 0 or idx.max() >= pops.shape[1]:
        raise ConfigError("level selection outside the system dimension")
    return pops[:, idx]
