"""Time grids, pulses, and Schrodinger propagation on a level system.

The propagators here treat Hamiltonians of the form

    H(t) = H0 + eps(t) * mu

with H0 diagonal (level energies) and mu a real symmetric dipole matrix,
everything in atomic units. A pulse is sampled on a uniform grid of n
points spanning [0, T]; a propagation step holds the field constant across
each interval, using the midpoint average of the two bracketing samples.

Two backends are available: a Chebyshev expansion of the step propagator
(default, cost per step is a handful of matrix-vector products) and dense
per-step diagonalization ("eigh", simpler and preferable only for very
small systems or cross-checks).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from . import _kernels
from .errors import ConfigError, PropagationError

# per-step series truncation; keeps the tail below ~1e-16 of the step norm
_BESSEL_TAIL = 1e-18
_RADIUS_PAD = 1.05


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_points samples covering [0, duration] (a.u.)."""

    duration: float
    n_points: int

    def __post_init__(self):
        if not (self.duration > 0.0 and np.isfinite(self.duration)):
            raise ConfigError("grid duration must be positive and finite")
        if self.n_points < 2:
            raise ConfigError("grid needs at least two points")

    @property
    def dt(self) -> float:
        return self.duration / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, self.n_points)


@dataclass(frozen=True)
class Pulse:
    """Real control field sampled on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n_points,):
            raise ConfigError(
                "pulse has %d samples but the grid has %d points"
                % (vals.size, self.grid.n_points)
            )
        object.__setattr__(self, "values", vals)

    def fluence(self) -> float:
        """Time integral of the squared field (trapezoid rule)."""
        return float(np.trapezoid(self.values**2, dx=self.grid.dt))

    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class StateTrajectory:
    """States at every grid point; states[j] is the state at times[j]."""

    grid: TimeGrid
    states: np.ndarray

    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.states) ** 2, axis=1))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def midpoint_steps(values: np.ndarray) -> np.ndarray:
    """Per-interval field values from point samples (midpoint average)."""
    return 0.5 * (values[:-1] + values[1:])


class ChebyshevEngine:
    """Precomputed step-propagator data for a fixed grid and field cap.

    The expansion window covers every Hamiltonian H0 + e * mu with
    |e| <= eps_cap, so one coefficient set serves a whole optimization run;
    exceeding the cap invalidates the expansion and must be caught by the
    caller.
    """

    def __init__(self, energies, mu, dt, eps_cap):
        energies = np.ascontiguousarray(energies, dtype=np.float64)
        mu = np.ascontiguousarray(mu, dtype=np.float64)
        if eps_cap <= 0.0 or not np.isfinite(eps_cap):
            raise ConfigError("field cap must be positive and finite")
        self.energies = energies
        self.mu = mu
        self.dt = float(dt)
        self.eps_cap = float(eps_cap)
        # Weyl bound on the spectral range of H0 + e*mu over |e| <= cap
        mu_norm = float(np.linalg.norm(mu, 2)) if mu.any() else 0.0
        lo = float(energies.min()) - eps_cap * mu_norm
        hi = float(energies.max()) + eps_cap * mu_norm
        self.center = 0.5 * (hi + lo)
        radius = max(0.5 * (hi - lo) * _RADIUS_PAD, 1e-12)
        self.inv_radius = 1.0 / radius
        x = radius * self.dt
        # the Bessel tail turns over within ~x^(1/3) orders of k = x; the
        # constant covers small windows, the cube-root term large ones
        kmax = int(x + 40 + 14.0 * max(x, 1.0) ** (1.0 / 3.0))
        orders = np.arange(kmax + 1)
        bess = jv(orders, x)
        if abs(bess[kmax]) > 1e-14 or np.isnan(bess[kmax]):
            raise PropagationError(
                "propagator series did not converge (step too large)"
            )
        keep = kmax
        while keep > 1 and abs(bess[keep]) < _BESSEL_TAIL:
            keep -= 1
        bess = bess[: keep + 1]
        pref = np.full(bess.shape, 2.0)
        pref[0] = 1.0
        self.coeffs_f = pref * (-1j) ** orders[: keep + 1] * bess
        self.coeffs_b = np.conj(self.coeffs_f)
        self.phase_f = np.exp(-1j * self.center * self.dt)
        self.phase_b = np.conj(self.phase_f)

    def forward_grid(self, eps_steps, psi0):
        return _kernels.cheb_evolve_grid(
            self.energies, self.mu, np.ascontiguousarray(eps_steps),
            self.coeffs_f, self.center, self.inv_radius, self.phase_f,
            np.ascontiguousarray(psi0, dtype=np.complex128), True,
        )

    def backward_grid(self, eps_steps, chi_final):
        return _kernels.cheb_evolve_grid(
            self.energies, self.mu, np.ascontiguousarray(eps_steps),
            self.coeffs_b, self.center, self.inv_radius, self.phase_b,
            np.ascontiguousarray(chi_final, dtype=np.complex128), False,
        )


def _system_arrays(system):
    energies = np.ascontiguousarray(system.energies, dtype=np.float64)
    mu = np.ascontiguousarray(system.dipole, dtype=np.float64)
    if mu.shape != (energies.size, energies.size):
        raise ConfigError("dipole matrix shape does not match level count")
    return energies, mu


def propagate(system, pulse: Pulse, psi0=None, backend: str = "chebyshev",
              direction: str = "forward") -> StateTrajectory:
    """Solve i d/dt psi = (H0 + eps(t) mu) psi across the pulse grid.

    psi0 defaults to the lowest level. direction="backward" starts from the
    final grid point and applies the inverse steps, returning states indexed
    the same way (states[j] still belongs to times[j]).
    """
    energies, mu = _system_arrays(system)
    if psi0 is None:
        psi0 = np.zeros(energies.size, dtype=np.complex128)
        psi0[0] = 1.0
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (energies.size,):
        raise ConfigError("initial state dimension does not match the system")
    if not np.all(np.isfinite(pulse.values)):
        raise PropagationError("pulse contains non-finite samples")
    forward = {"forward": True, "backward": False}.get(direction)
    if forward is None:
        raise ConfigError("direction must be 'forward' or 'backward'")
    steps = midpoint_steps(pulse.values)
    if backend == "chebyshev":
        cap = max(float(np.max(np.abs(steps))), 1e-12) * _RADIUS_PAD
        eng = ChebyshevEngine(energies, mu, pulse.grid.dt, cap)
        if forward:
            states = eng.forward_grid(steps, psi0)
        else:
            states = eng.backward_grid(steps, psi0)
    elif backend == "eigh":
        sign = -1.0 if forward else 1.0
        states = _kernels.eigh_evolve_grid(
            energies, mu, np.ascontiguousarray(steps), pulse.grid.dt, sign,
            psi0, forward,
        )
    else:
        raise ConfigError("unknown propagation backend %r" % (backend,))
    return StateTrajectory(pulse.grid, states)


def propagate_inhomogeneous(system, pulse: Pulse, chi_final, source_states,
                            source_coeff: float,
                            projector_diag) -> StateTrajectory:
    """Backward solve of d/dt chi = -i H(t) chi + c P psi(t).

    source_states holds psi at every grid point (shape (n, d)); the
    projector P is diagonal with the 0/1 entries projector_diag. Within a
    step the Hamiltonian is frozen at the field value of the earlier grid
    point, mirroring the forward map so each backward step is its exact
    adjoint, and the source enters by the trapezoid rule per step; the
    scheme is second order in the step size.
    """
    energies, mu = _system_arrays(system)
    n = pulse.grid.n_points
    source_states = np.ascontiguousarray(source_states, dtype=np.complex128)
    if source_states.shape != (n, energies.size):
        raise ConfigError("source trajectory shape does not match the grid")
    proj = np.ascontiguousarray(projector_diag, dtype=np.float64)
    if proj.shape != (energies.size,):
        raise ConfigError("projector diagonal does not match the system")
    chi_final = np.asarray(chi_final, dtype=np.complex128)
    states = _kernels.inhom_backward(
        energies, mu, pulse.values, pulse.grid.dt, float(source_coeff), proj,
        source_states, chi_final, False,
    )
    return StateTrajectory(pulse.grid, states)
