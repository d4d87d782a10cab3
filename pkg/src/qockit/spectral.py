"""Frequency-selective update kernels and the degenerate-kernel Fredholm solver.

The optimizer can be asked to keep chosen frequency windows out of (or
confined to) the control field.  That wish enters the update equation as a
convolution kernel, and the field correction at each iteration then solves a
Fredholm integral equation of the second kind.  This module owns both halves:
the kernel algebra (spectrum, time representation, admissibility) and the
hat-basis degenerate-kernel solver that turns the integral equation into a
small dense linear system factored once per optimization run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve
from scipy.signal import fftconvolve

from .errors import ConfigError, NumericsError
from .propagation import TimeGrid

__all__ = [
    "GaussianFilter",
    "FilterBank",
    "AdmissibilityReport",
    "FredholmSystem",
    "FredholmSolver",
    "kernel_spectrum",
    "kernel_time",
    "check_admissibility",
    "mass_matrix",
    "assemble",
    "solve",
    "kernel_penalty",
]

# Sampled kernel spectrum may dip this far below zero before we call the
# bank inadmissible; pure roundoff from the Gaussian sums stays well under it.
_SPECTRUM_FLOOR = -1e-12

_ROLES = ("filter", "pass")


@dataclass(frozen=True)
class GaussianFilter:
    """One Gaussian frequency window the optimizer should avoid or favor.

    ``role="filter"`` penalizes field amplitude inside the window,
    ``role="pass"`` rewards it.  ``omega`` and ``sigma`` are angular
    frequencies in atomic units; ``weight`` is the nonnegative strength.
    """

    omega: float
    sigma: float
    weight: float
    role: str = "filter"

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ConfigError(
                f"filter role must be one of {_ROLES}, got {self.role!r}"
            )
        if not self.sigma > 0.0:
            raise ConfigError(f"filter width must be positive, got {self.sigma}")
        if self.omega < 0.0:
            raise ConfigError(
                f"filter center frequency must be nonnegative, got {self.omega}"
            )
        if self.weight < 0.0:
            raise ConfigError(
                f"filter weight must be nonnegative, got {self.weight}"
            )

    @property
    def signed_weight(self) -> float:
        # Sign convention: a suppressing window carries negative weight in
        # the spectrum sum, a transmitting window positive.
        return -self.weight if self.role == "filter" else self.weight


@dataclass(frozen=True)
class FilterBank:
    """Complete spectral-constraint specification for one optimization.

    ``lambda0_a`` is the frequency-independent (delta kernel) part,
    ``lambda0`` the amplitude-constraint weight of the hosting optimization,
    and ``shape`` the update-shape samples S(t) on the optimization grid.
    ``shape`` may be None for pure frequency-domain work (kernel evaluation,
    admissibility checks); solving the update equation requires it.
    """

    lambda0_a: float
    filters: tuple
    lambda0: float
    shape: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.lambda0_a < 0.0:
            raise ConfigError(
                f"delta-kernel weight must be nonnegative, got {self.lambda0_a}"
            )
        if not self.lambda0 > 0.0:
            raise ConfigError(
                f"amplitude-constraint weight must be positive, got {self.lambda0}"
            )
        object.__setattr__(self, "filters", tuple(self.filters))
        for f in self.filters:
            if not isinstance(f, GaussianFilter):
                raise ConfigError(
                    f"filter bank entries must be GaussianFilter, got {type(f).__name__}"
                )
        if self.shape is not None:
            shape = np.asarray(self.shape, dtype=np.float64)
            if shape.ndim != 1 or shape.size < 2:
                raise ConfigError("shape samples must form a 1d array of length >= 2")
            if shape.min() < 0.0 or shape.max() > 1.0:
                raise ConfigError("shape samples must lie in [0, 1]")
            if shape[0] != 0.0 or shape[-1] != 0.0:
                raise ConfigError("shape must vanish at both ends of the grid")
            shape = shape.copy()
            shape.setflags(write=False)
            object.__setattr__(self, "shape", shape)

    @property
    def n_filters(self) -> int:
        return len(self.filters)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the kernel nonnegativity check."""

    ok: bool
    violations: tuple
    sampled_min: float
    sampled_min_omega: float

    def __str__(self):
        if self.ok:
            return "filter bank admissible"
        return "; ".join(self.violations)


def kernel_spectrum(bank: FilterBank, omega) -> np.ndarray:
    """Kernel spectrum at angular frequency ``omega`` (scalar or array).

    The spectrum is the delta-kernel weight minus, for each window, half the
    weighted Gaussian at +/- the center frequency, so a real even kernel in
    the time domain comes out.
    """
    w = np.asarray(omega, dtype=np.float64)
    total = np.full(w.shape, bank.lambda0_a, dtype=np.float64)
    for f in bank.filters:
        g = np.exp(-((w - f.omega) ** 2) / (2.0 * f.sigma**2))
        g += np.exp(-((w + f.omega) ** 2) / (2.0 * f.sigma**2))
        total -= 0.5 * f.signed_weight * g
    return total if total.ndim else float(total)


def kernel_time(bank: FilterBank, delta) -> np.ndarray:
    """Smooth part of the time-domain kernel at lag ``delta``.

    This is the inverse transform of ``kernel_spectrum`` minus its constant
    (delta kernel) part.  It is even in the lag and decays as a Gaussian with
    the reciprocal window widths.
    """
    d = np.asarray(delta, dtype=np.float64)
    total = np.zeros(d.shape, dtype=np.float64)
    for f in bank.filters:
        amp = f.signed_weight * np.sqrt(2.0 * np.pi * f.sigma**2)
        total -= amp * np.cos(f.omega * d) * np.exp(-(f.sigma**2) * d**2 / 2.0)
    return total if total.ndim else float(total)


def check_admissibility(bank: FilterBank) -> AdmissibilityReport:
    """Verify the kernel spectrum never goes negative.

    A negative spectrum would reward unbounded field amplitude in that
    window and destroy monotonic convergence.  Two checks: each transmitting
    window's weight must not exceed twice the delta-kernel weight (its
    Gaussian peak eats at most that much), and the sampled spectrum over the
    populated frequency range must stay above a roundoff floor.
    """
    violations = []
    for k, f in enumerate(bank.filters):
        if f.role == "pass" and f.weight > 2.0 * bank.lambda0_a:
            violations.append(
                f"pass window {k} (center {f.omega:.6g} au) has weight "
                f"{f.weight:.6g} exceeding twice the delta-kernel weight "
                f"({2.0 * bank.lambda0_a:.6g})"
            )

    if bank.filters:
        top = max(f.omega + 8.0 * f.sigma for f in bank.filters)
        step = min(f.sigma for f in bank.filters) / 8.0
        omegas = np.arange(0.0, top + step, step)
    else:
        omegas = np.array([0.0])
    values = np.atleast_1d(kernel_spectrum(bank, omegas))
    at = int(np.argmin(values))
    sampled_min = float(values[at])
    sampled_min_omega = float(omegas[at])
    if sampled_min < _SPECTRUM_FLOOR:
        violations.append(
            f"kernel spectrum reaches {sampled_min:.6g} at omega = "
            f"{sampled_min_omega:.6g} au; it must stay nonnegative"
        )

    return AdmissibilityReport(
        ok=not violations,
        violations=tuple(violations),
        sampled_min=sampled_min,
        sampled_min_omega=sampled_min_omega,
    )


def mass_matrix(n_basis: int) -> np.ndarray:
    """Overlap matrix of the hat basis on the unit interval.

    Tridiagonal: 2/(3n) on the interior diagonal, 1/(3n) at the two corners,
    1/(6n) off the diagonal.
    """
    if n_basis < 1:
        raise ConfigError(f"hat basis needs at least one interval, got {n_basis}")
    n = n_basis
    a = np.zeros((n + 1, n + 1))
    idx = np.arange(n + 1)
    a[idx, idx] = 2.0 / (3.0 * n)
    a[0, 0] = a[n, n] = 1.0 / (3.0 * n)
    a[idx[:-1], idx[:-1] + 1] = 1.0 / (6.0 * n)
    a[idx[:-1] + 1, idx[:-1]] = 1.0 / (6.0 * n)
    return a


class FredholmSolver:
    """Degenerate-kernel solver for the constrained update equation.

    The update correction solves, on the unit interval,

        x(s) = i(s) + gamma * int_0^1 K(s, s') x(s') ds'

    where K carries the shape function, the smooth kernel, and the weights.
    Projecting the kernel onto hat functions at ``n_basis + 1`` equidistant
    nodes turns this into a dense linear system whose matrix is independent
    of the inhomogeneity, so it is assembled and LU-factored exactly once
    per optimization run and reused every iteration.
    """

    def __init__(self, bank: FilterBank, grid: TimeGrid,
                 n_basis: Optional[int] = None, gamma: float = 1.0):
        if bank.shape is None:
            raise ConfigError("solving the update equation requires shape samples")
        n_points = grid.n_points
        if bank.shape.size != n_points:
            raise ConfigError(
                f"shape has {bank.shape.size} samples but the grid has {n_points}"
            )
        if n_basis is None:
            # The hat spacing T/n_basis must resolve the kernel's carrier
            # oscillations, so track the grid up to a dense-LU-friendly cap.
            n_basis = max(1, min(n_points - 1, 4096))
        if n_basis < 1:
            raise ConfigError(f"hat basis needs at least one interval, got {n_basis}")
        if n_basis > n_points - 1:
            raise ConfigError(
                f"hat basis with {n_basis} intervals exceeds the grid resolution "
                f"({n_points} points allow at most {n_points - 1})"
            )

        self.bank = bank
        self.grid = grid
        self.n_basis = int(n_basis)
        self.gamma = float(gamma)

        duration = grid.duration
        n = self.n_basis
        nodes = np.arange(n + 1) / n
        node_shape = np.interp(nodes * duration, grid.times, bank.shape)
        # Dividing by D(t) absorbs the delta part of the kernel into the
        # update bracket; D == 1 whenever lambda0_a == 0.
        d_nodes = 1.0 + node_shape * (bank.lambda0_a / bank.lambda0)
        prefactor = -duration * node_shape / (2.0 * np.pi * bank.lambda0 * d_nodes)

        lags = (np.arange(-n, n + 1) * (duration / n))
        kt = np.atleast_1d(kernel_time(bank, lags))
        # K(s_j, s_i) = prefactor(s_j) * kt(s_j - s_i) on the node lattice.
        j = np.arange(n + 1)
        self._kernel_nodes = prefactor[:, None] * kt[n + (j[:, None] - j[None, :])]

        # C = K A with tridiagonal A applied column by column.
        corner, main, off = 1.0 / (3.0 * n), 2.0 / (3.0 * n), 1.0 / (6.0 * n)
        diag = np.full(n + 1, main)
        diag[0] = diag[-1] = corner
        c = self._kernel_nodes * diag[None, :]
        c[:, 1:] += self._kernel_nodes[:, :-1] * off
        c[:, :-1] += self._kernel_nodes[:, 1:] * off
        self.c_matrix = c

        system = np.eye(n + 1) - self.gamma * c
        anorm = np.linalg.norm(system, 1)
        self._lu = lu_factor(system)
        rcond, info = lapack.dgecon(self._lu[0], anorm, norm="1")
        if info != 0 or rcond < 1e-14:
            raise NumericsError(
                f"update-equation system is numerically singular "
                f"(condition estimate rcond = {rcond:.3e})"
            )

        # Fine-grid quadrature for the hat moments of the inhomogeneity:
        # each sample scatters onto its two bracketing hats with trapezoid
        # weight, accumulated with bincount.
        s_fine = grid.times / duration
        ds = 1.0 / (n_points - 1)
        weights = np.full(n_points, ds)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        u = np.clip(s_fine * n, 0.0, float(n))
        left = np.minimum(u.astype(np.int64), n - 1)
        frac = u - left
        self._scatter_left = left
        self._scatter_weight_left = weights * (1.0 - frac)
        self._scatter_weight_right = weights * frac
        self._s_fine = s_fine
        self._nodes = nodes
        self._node_d = d_nodes

    def hat_moments(self, samples: np.ndarray) -> np.ndarray:
        """Integrals of the inhomogeneity against each hat function."""
        n = self.n_basis
        e = np.bincount(self._scatter_left,
                        weights=samples * self._scatter_weight_left,
                        minlength=n + 1)
        e += np.bincount(self._scatter_left + 1,
                         weights=samples * self._scatter_weight_right,
                         minlength=n + 1)
        return e

    def node_coefficients(self, inhom: np.ndarray) -> np.ndarray:
        """Solve for the hat coefficients of the correction term."""
        b = self._kernel_nodes @ self.hat_moments(inhom)
        return lu_solve(self._lu, self.gamma * b)

    def correction(self, inhom: np.ndarray) -> np.ndarray:
        """Correction term on the fine grid: the hat interpolant of the
        node coefficients.  Zero filters or gamma = 0 give exactly zero."""
        inhom = np.asarray(inhom, dtype=np.float64)
        if inhom.shape != (self.grid.n_points,):
            raise ConfigError(
                f"inhomogeneity must have {self.grid.n_points} samples, "
                f"got shape {inhom.shape}"
            )
        x = self.node_coefficients(inhom)
        if not np.any(x):
            return np.zeros(self.grid.n_points)
        return np.interp(self._s_fine, self._nodes, x)

    def solve(self, inhom: np.ndarray) -> np.ndarray:
        """Full solution of the update equation: inhomogeneity plus correction."""
        return inhom + self.correction(inhom)


@dataclass(frozen=True, eq=False)
class FredholmSystem:
    """Assembled degenerate-kernel system for one inhomogeneity.

    Holds the projected kernel matrix, the right-hand side for the given
    inhomogeneity, and the solver carrying the LU factorization.
    """

    n_basis: int
    gamma: float
    c_matrix: np.ndarray
    rhs: np.ndarray
    inhomogeneity: np.ndarray
    solver: FredholmSolver

    @property
    def a_matrix(self) -> np.ndarray:
        return mass_matrix(self.n_basis)


def assemble(bank: FilterBank, inhom, grid: TimeGrid,
             n_basis: Optional[int] = None, gamma: float = 1.0) -> FredholmSystem:
    """Build the degenerate-kernel system for one update equation."""
    inhom = np.asarray(inhom, dtype=np.float64)
    if inhom.shape != (grid.n_points,):
        raise ConfigError(
            f"inhomogeneity must have {grid.n_points} samples, got shape {inhom.shape}"
        )
    solver = FredholmSolver(bank, grid, n_basis=n_basis, gamma=gamma)
    rhs = solver._kernel_nodes @ solver.hat_moments(inhom)
    return FredholmSystem(
        n_basis=solver.n_basis,
        gamma=solver.gamma,
        c_matrix=solver.c_matrix,
        rhs=rhs,
        inhomogeneity=inhom,
        solver=solver,
    )


def solve(system: FredholmSystem) -> np.ndarray:
    """Solve an assembled system for the field correction on the fine grid."""
    return system.solver.solve(system.inhomogeneity)


def kernel_penalty(bank: FilterBank, delta_values, grid: TimeGrid) -> float:
    """Spectral penalty of a field change: the double time integral of the
    change against the kernel.

    The delta part contributes ``lambda0_a * int delta^2 dt``; the smooth
    part is evaluated by discrete convolution.  Positive for admissible
    banks with suppressing windows acting on in-band changes.
    """
    delta = np.asarray(delta_values, dtype=np.float64)
    if delta.shape != (grid.n_points,):
        raise ConfigError(
            f"field change must have {grid.n_points} samples, got shape {delta.shape}"
        )
    dt = grid.dt
    total = bank.lambda0_a * float(np.trapezoid(delta * delta, dx=dt))
    if bank.filters:
        n = grid.n_points
        lags = np.arange(1 - n, n) * dt
        kt = np.atleast_1d(kernel_time(bank, lags))
        conv = fftconvolve(delta, kt, mode="valid")
        total += dt * dt / (2.0 * np.pi) * float(np.dot(delta, conv))
    return total
