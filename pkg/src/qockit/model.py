"""Level systems, projectors, target functionals, and analytic pulse shapes.

Energies are stored in atomic units as offsets from the lowest level;
dipole matrices are real, exactly symmetric, with zero diagonal. Loaders
accept cm^-1 for energies and femtoseconds for times and convert on entry.
"""

from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ConfigError
from .propagation import Pulse, TimeGrid
from .units import cm1_to_au


@dataclass(frozen=True)
class LevelSystem:
    """Bare Hamiltonian diag(energies) plus linear coupling eps(t) * dipole."""

    labels: tuple
    energies: np.ndarray
    dipole: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        en = np.asarray(self.energies, dtype=np.float64)
        mu = np.asarray(self.dipole, dtype=np.float64)
        d = len(labels)
        if len(set(labels)) != d:
            raise ConfigError("level labels must be unique")
        if en.shape != (d,):
            raise ConfigError("energy vector length does not match labels")
        if mu.shape != (d, d):
            raise ConfigError("dipole matrix shape does not match labels")
        if not np.array_equal(mu, mu.T):
            raise ConfigError("dipole matrix must be exactly symmetric")
        if np.any(np.diag(mu) != 0.0):
            raise ConfigError("dipole matrix must have zero diagonal")
        if en.min() != 0.0:
            raise ConfigError("lowest level must sit at energy zero")
        en = en.copy()
        mu = mu.copy()
        en.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "energies", en)
        object.__setattr__(self, "dipole", mu)

    @property
    def n_levels(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConfigError("unknown level label %r" % (label,)) from None

    def basis_state(self, label: str) -> np.ndarray:
        psi = np.zeros(self.n_levels, dtype=np.complex128)
        psi[self.index(label)] = 1.0
        return psi

    def transition_frequency(self, lower: str, upper: str) -> float:
        """Signed energy difference E(upper) - E(lower) in a.u."""
        return float(self.energies[self.index(upper)]
                     - self.energies[self.index(lower)])


@dataclass(frozen=True)
class SubspaceProjector:
    """Orthogonal projector onto a set of levels, kept as an index set."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ConfigError("projector needs at least one level")
        if len(set(idx)) != len(idx) or min(idx) < 0:
            raise ConfigError("projector indices must be unique and >= 0")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_labels(cls, system: LevelSystem, labels):
        return cls(tuple(system.index(lb) for lb in labels))

    def diagonal(self, n_levels: int) -> np.ndarray:
        if max(self.indices) >= n_levels:
            raise ConfigError("projector index beyond system dimension")
        diag = np.zeros(n_levels, dtype=np.float64)
        diag[list(self.indices)] = 1.0
        return diag

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.diagonal(psi.shape[-1]) * psi


@dataclass(frozen=True)
class TargetSpec:
    """Final-time objective: overlap with a state or population of a level.

    The loss is J_T = 1 - |<target|psi(T)>|^2 for kind "overlap" and
    J_T = 1 - <psi(T)|P|psi(T)> for kind "population"; both lie in [0, 1]
    for normalized states.
    """

    kind: str
    vector: Optional[np.ndarray] = None
    level: Optional[int] = None

    def __post_init__(self):
        if self.kind == "overlap":
            if self.vector is None:
                raise ConfigError("overlap target needs a state vector")
            vec = np.asarray(self.vector, dtype=np.complex128)
            nrm = np.linalg.norm(vec)
            if not np.isclose(nrm, 1.0, atol=1e-10):
                raise ConfigError("target state must have unit norm")
            vec = vec.copy()
            vec.setflags(write=False)
            object.__setattr__(self, "vector", vec)
        elif self.kind == "population":
            if self.level is None or int(self.level) < 0:
                raise ConfigError("population target needs a level index")
            object.__setattr__(self, "level", int(self.level))
        else:
            raise ConfigError("unknown target kind %r" % (self.kind,))

    @classmethod
    def overlap_with(cls, vector) -> "TargetSpec":
        return cls(kind="overlap", vector=vector)

    @classmethod
    def population_of(cls, system: LevelSystem, label: str) -> "TargetSpec":
        return cls(kind="population", level=system.index(label))

    def merit(self, psi_final: np.ndarray) -> float:
        """Success measure in [0, 1]; J_T = 1 - merit.

        Propagation keeps norms at 1 only to roundoff, so the value is
        clipped at 1 to keep the loss from dipping below zero.
        """
        if self.kind == "overlap":
            value = float(np.abs(np.vdot(self.vector, psi_final)) ** 2)
        else:
            value = float(np.abs(psi_final[self.level]) ** 2)
        return min(value, 1.0)


def target_adjoint_seed(target: TargetSpec, finals):
    """Adjoint boundary states chi(T), one per forward final state.

    For the overlap loss the seed is <phi|psi(T)> phi, for the population
    loss P psi(T); both are the gradients of the merit with respect to
    <psi(T)| up to the conventional factor absorbed in the update equation.
    """
    seeds = []
    for psi in finals:
        psi = np.asarray(psi, dtype=np.complex128)
        if not np.isclose(np.linalg.norm(psi), 1.0, atol=1e-10):
            raise ConfigError("final state is not normalized")
        if target.kind == "overlap":
            seeds.append(np.vdot(target.vector, psi) * target.vector)
        else:
            seed = np.zeros_like(psi)
            seed[target.level] = psi[target.level]
            seeds.append(seed)
    return seeds


def _parse_level_file(text, name):
    labels = []
    energies = []
    dipoles = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) == 2:
                labels.append(parts[0])
                energies.append(float(parts[1]))
            elif len(parts) == 3:
                dipoles.append((parts[0], parts[1], float(parts[2])))
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(
                "%s line %d: expected 'label energy' or "
                "'label label dipole'" % (name, ln)
            ) from None
    if len(labels) != len(set(labels)):
        raise ConfigError("%s: duplicate level label" % (name,))
    if not labels:
        raise ConfigError("%s: no levels defined" % (name,))
    en = cm1_to_au(np.array(energies))
    en = en - en.min()
    d = len(labels)
    mu = np.zeros((d, d))
    index = {lb: i for i, lb in enumerate(labels)}
    seen = set()
    for la, lb, val in dipoles:
        if la not in index or lb not in index:
            raise ConfigError("%s: dipole row references unknown level"
                              % (name,))
        i, j = index[la], index[lb]
        if i == j:
            raise ConfigError("%s: dipole diagonal must stay zero" % (name,))
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ConfigError("%s: duplicate dipole pair %s %s"
                              % (name, la, lb))
        seen.add(key)
        mu[i, j] = mu[j, i] = val
    return LevelSystem(tuple(labels), en, mu)


def load_level_system(path) -> LevelSystem:
    """Read a columnar level/dipole text file (energies in cm^-1)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read level file %s: %s" % (path, exc))
    return _parse_level_file(text, str(path))


def build_sodium_system() -> LevelSystem:
    """The bundled 8-level sodium model (3s, 4s, 3p..8p)."""
    ref = resources.files("qockit").joinpath("data/na_levels.txt")
    try:
        text = ref.read_text(encoding="utf-8")
    except (OSError, FileNotFoundError) as exc:
        raise ConfigError("bundled level data data/na_levels.txt missing: %s"
                          % (exc,))
    return _parse_level_file(text, "data/na_levels.txt")


def build_two_manifold_system(n_ground: int, n_excited: int,
                              table) -> LevelSystem:
    """Two electronic manifolds with cross couplings only.

    table is a mapping with keys "ground_energies_cm1" (length n_ground),
    "excited_energies_cm1" (length n_excited) and "dipoles_au" with shape
    (n_ground, n_excited). Levels are labeled g0.., e0.. in table order.
    """
    try:
        eg = np.asarray(table["ground_energies_cm1"], dtype=np.float64)
        ee = np.asarray(table["excited_energies_cm1"], dtype=np.float64)
        mu_ge = np.asarray(table["dipoles_au"], dtype=np.float64)
    except (KeyError, TypeError) as exc:
        raise ConfigError("two-manifold table missing entry: %s" % (exc,))
    if eg.shape != (n_ground,) or ee.shape != (n_excited,):
        raise ConfigError("two-manifold table sizes do not match the counts")
    if mu_ge.shape != (n_ground, n_excited):
        raise ConfigError("two-manifold dipole block must be "
                          "(n_ground, n_excited)")
    labels = tuple("g%d" % v for v in range(n_ground)) + \
        tuple("e%d" % v for v in range(n_excited))
    en = cm1_to_au(np.concatenate([eg, ee]))
    en = en - en.min()
    d = n_ground + n_excited
    mu = np.zeros((d, d))
    mu[:n_ground, n_ground:] = mu_ge
    mu[n_ground:, :n_ground] = mu_ge.T
    return LevelSystem(labels, en, mu)


def anharmonic_ladder_table(n_ground: int, n_excited: int,
                            omega_g_cm1: float = 57.8,
                            anharm_g_cm1: float = 0.16,
                            origin_cm1: float = 10700.79,
                            omega_e_cm1: float = 44.6,
                            anharm_e_cm1: float = 0.12,
                            band_center: float = 0.0,
                            band_width: float = 4.0,
                            mu0_au: float = 1.0):
    """Synthetic spectroscopic table for two anharmonic vibrational ladders.

    Level energies follow omega (v + 1/2) - anharm (v + 1/2)^2 in each
    manifold, the excited one shifted by origin_cm1. Cross dipoles form a
    Gaussian band centered on transitions with v' - v = band_center, a crude
    stand-in for a Franck-Condon window.
    """
    vg = np.arange(n_ground) + 0.5
    ve = np.arange(n_excited) + 0.5
    eg = omega_g_cm1 * vg - anharm_g_cm1 * vg**2
    ee = origin_cm1 + omega_e_cm1 * ve - anharm_e_cm1 * ve**2
    dv = ve[None, :] - vg[:, None] - band_center
    mu = mu0_au * np.exp(-(dv**2) / (2.0 * band_width**2))
    return {
        "ground_energies_cm1": eg,
        "excited_energies_cm1": ee,
        "dipoles_au": mu,
    }


@dataclass(frozen=True)
class PulseParametrization:
    """Two-amplitude analytic field for landscape scans.

    E(t) = exp(-(t - T/2)^2 / 2 tau^2) * (e1 [cos(w1 t) + cos(w2 t)]
                                          + e2 cos(wl t))

    with w1, w2 the sequential one-photon carriers and wl the two-photon
    carrier (half the total transition frequency).
    """

    e1: float
    e2: float
    tau: float
    omega1: float
    omega2: float
    omega_l: float

    def __post_init__(self):
        if not (self.tau > 0.0):
            raise ConfigError("parametrization width tau must be positive")

    @classmethod
    def for_ladder(cls, system: LevelSystem, e1: float, e2: float,
                   tau: float, ground: str = "3s", middle: str = "3p",
                   final: str = "4s") -> "PulseParametrization":
        w1 = system.transition_frequency(ground, middle)
        w2 = system.transition_frequency(middle, final)
        return cls(e1=e1, e2=e2, tau=tau, omega1=w1, omega2=w2,
                   omega_l=0.5 * (w1 + w2))


def parametrized_field(p: PulseParametrization, grid: TimeGrid) -> Pulse:
    t = grid.times
    env = np.exp(-((t - 0.5 * grid.duration) ** 2) / (2.0 * p.tau**2))
    vals = env * (p.e1 * (np.cos(p.omega1 * t) + np.cos(p.omega2 * t))
                  + p.e2 * np.cos(p.omega_l * t))
    return Pulse(grid, vals)


def gaussian_guess_pulse(center_frequency: float, amplitude: float,
                         duration: float, grid: TimeGrid) -> Pulse:
    """Cosine carrier under a Gaussian envelope centered at T/2.

    duration is the Gaussian width parameter tau of the field envelope
    exp(-(t - T/2)^2 / 2 tau^2), in a.u. of time.
    """
    if amplitude < 0.0:
        raise ConfigError("pulse amplitude must be non-negative")
    if not (0.0 < duration < grid.duration):
        raise ConfigError("pulse duration must lie inside the time window")
    t = grid.times
    env = np.exp(-((t - 0.5 * grid.duration) ** 2) / (2.0 * duration**2))
    return Pulse(grid, amplitude * env * np.cos(center_frequency * t))
