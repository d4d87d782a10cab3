"""Run-configuration parsing.

Configs are hierarchical YAML mappings. Every physical quantity carries its
unit in the key suffix (``_au``, ``_fs``, ``_cm1``) and is converted to
atomic units here, so no other module ever sees a unit-tagged name. Unknown
keys anywhere in the tree are rejected with their dotted path; YAML syntax
errors surface with the parser's line context.
"""

import hashlib
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .krotov import (
    OptimizationProblem,
    SpectralConstraint,
    StateConstraint,
    StopRule,
)
from .model import (
    LevelSystem,
    PulseParametrization,
    SubspaceProjector,
    TargetSpec,
    anharmonic_ladder_table,
    build_sodium_system,
    build_two_manifold_system,
    gaussian_guess_pulse,
    load_level_system,
    parametrized_field,
)
from .propagation import Pulse, TimeGrid
from .spectral import FilterBank, GaussianFilter
from .units import CM1_PER_AU, FS_PER_AU

__all__ = ["RunConfig", "load_run_config", "build_problem", "build_source_pulse",
           "build_landscape_request", "build_initial_state", "keep_intervals"]

# unit-suffix conversion factors into atomic units, by quantity kind
_UNIT_FACTORS = {
    "time": {"au": 1.0, "fs": 1.0 / FS_PER_AU},
    "frequency": {"au": 1.0, "cm1": 1.0 / CM1_PER_AU},
    "field": {"au": 1.0},
}


def _as_float(value, path):
    if isinstance(value, bool) or value is None:
        raise ConfigError("key '%s' must be a number" % path)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(
            "key '%s' must be a number, got %r" % (path, value)
        ) from None


class _Block:
    """One mapping of the config tree with consumed-key accounting."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError("section '%s' must be a mapping" % path)
        self._data = data
        self._path = path
        self._used = set()

    def _key_path(self, name):
        return name if not self._path else self._path + "." + name

    def has(self, name) -> bool:
        return name in self._data

    def raw(self, name, required=True, default=None):
        if name not in self._data:
            if required:
                raise ConfigError("missing key '%s'" % self._key_path(name))
            return default
        self._used.add(name)
        return self._data[name]

    def child(self, name, required=True) -> Optional["_Block"]:
        value = self.raw(name, required=required)
        if value is None:
            return None
        return _Block(value, self._key_path(name))

    def string(self, name, required=True, default=None, choices=None) -> str:
        value = self.raw(name, required=required, default=default)
        if value is default and not required:
            return default
        if not isinstance(value, str):
            raise ConfigError(
                "key '%s' must be a string" % self._key_path(name)
            )
        if choices is not None and value not in choices:
            raise ConfigError(
                "key '%s' must be one of %s, got %r"
                % (self._key_path(name), sorted(choices), value)
            )
        return value

    def integer(self, name, required=True, default=None) -> Optional[int]:
        value = self.raw(name, required=required, default=default)
        if value is default and not required:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(
                "key '%s' must be an integer" % self._key_path(name)
            )
        return value

    def number(self, name, required=True, default=None) -> Optional[float]:
        value = self.raw(name, required=required, default=default)
        if value is default and not required:
            return default
        return _as_float(value, self._key_path(name))

    def quantity(self, name, kind, required=True,
                 default=None) -> Optional[float]:
        """Read ``name`` with a unit suffix and convert to atomic units."""
        factors = _UNIT_FACTORS[kind]
        present = [u for u in factors if name + "_" + u in self._data]
        if len(present) > 1:
            raise ConfigError(
                "key '%s' given in multiple units (%s)"
                % (self._key_path(name), ", ".join(sorted(present)))
            )
        if not present:
            if required:
                raise ConfigError(
                    "missing key '%s' (expected one of: %s)"
                    % (self._key_path(name),
                       ", ".join(name + "_" + u for u in factors))
                )
            return default
        unit = present[0]
        value = self.number(name + "_" + unit)
        return value * factors[unit]

    def finish(self):
        """Reject any key that no reader consumed."""
        unknown = sorted(set(self._data) - self._used)
        if unknown:
            raise ConfigError(
                "unknown key '%s' in config"
                % (self._key_path(unknown[0]))
            )


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Parsed, unit-normalized run configuration for one subcommand."""

    command: str
    path: str
    sha256: str
    root: _Block
    base_dir: str
    system: Optional[LevelSystem]
    grid: TimeGrid
    output_dir: str
    seed: int


def _load_yaml(path):
    try:
        with open(path, "r") as handle:
            text = handle.read()
    except OSError as err:
        raise ConfigError("cannot read config %s: %s" % (path, err)) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("config %s is not valid YAML: %s"
                          % (path, err)) from None
    if not isinstance(data, dict):
        raise ConfigError("config %s must be a mapping at top level" % path)
    digest = hashlib.sha256(text.encode()).hexdigest()
    return data, digest


def _build_system(block: _Block, base_dir: str) -> LevelSystem:
    preset = block.string("preset", required=False, default=None)
    source = block.string("file", required=False, default=None)
    if (preset is None) == (source is None):
        raise ConfigError(
            "system block needs exactly one of 'preset' or 'file'"
        )
    if preset is not None:
        if preset in ("sodium", "na"):
            system = build_sodium_system()
        elif preset == "raman":
            system = build_two_manifold_system(
                11, 11, anharmonic_ladder_table(11, 11))
        else:
            raise ConfigError("unknown system preset %r" % preset)
    else:
        system = load_level_system(os.path.join(base_dir, source))
    block.finish()
    return system


def _build_grid(block: _Block) -> TimeGrid:
    duration = block.quantity("duration", "time")
    n_points = block.integer("n_points")
    block.finish()
    return TimeGrid(duration=duration, n_points=n_points)


def load_run_config(path: str, command: str) -> RunConfig:
    data, digest = _load_yaml(path)
    root = _Block(data, "")
    base_dir = os.path.dirname(os.path.abspath(path))

    grid = _build_grid(root.child("grid"))
    needs_system = command != "spectrum"
    system = None
    if needs_system:
        system = _build_system(root.child("system"), base_dir)

    output = root.child("output")
    out_dir = output.string("directory")
    output.finish()

    seed = root.integer("seed", required=False, default=0)
    if seed < 0:
        raise ConfigError("seed must be nonnegative")

    return RunConfig(
        command=command,
        path=os.path.abspath(path),
        sha256=digest,
        root=root,
        base_dir=base_dir,
        system=system,
        grid=grid,
        output_dir=out_dir,
        seed=seed,
    )


def _load_pulse_file(path: str, grid: TimeGrid) -> Pulse:
    try:
        table = np.loadtxt(path, ndmin=2)
    except OSError as err:
        raise ConfigError("cannot read pulse file %s: %s"
                          % (path, err)) from None
    except ValueError as err:
        raise ConfigError("pulse file %s is not a numeric table: %s"
                          % (path, err)) from None
    if table.shape[0] != grid.n_points or table.shape[1] < 2:
        raise ConfigError(
            "pulse file %s has shape %s; expected %d rows of time and field"
            % (path, table.shape, grid.n_points)
        )
    times = table[:, 0]
    if not np.allclose(times, grid.times, rtol=0.0,
                       atol=1e-6 * grid.dt + 1e-12):
        raise ConfigError(
            "pulse file %s times do not match the configured grid" % path
        )
    return Pulse(grid, table[:, -1])


def _build_pulse(block: _Block, grid: TimeGrid, base_dir: str) -> Pulse:
    kind = block.string("kind",
                        choices={"gaussian", "parametrized", "file", "zero"})
    if kind == "zero":
        pulse = Pulse(grid, np.zeros(grid.n_points))
    elif kind == "gaussian":
        pulse = gaussian_guess_pulse(
            center_frequency=block.quantity("carrier", "frequency"),
            amplitude=block.quantity("amplitude", "field"),
            duration=block.quantity("duration", "time"),
            grid=grid,
        )
    elif kind == "parametrized":
        params = PulseParametrization(
            e1=block.quantity("e1", "field"),
            e2=block.quantity("e2", "field"),
            tau=block.quantity("duration", "time"),
            omega1=block.quantity("omega1", "frequency"),
            omega2=block.quantity("omega2", "frequency"),
            omega_l=block.quantity("carrier", "frequency"),
        )
        pulse = parametrized_field(params, grid)
    else:
        pulse = _load_pulse_file(
            os.path.join(base_dir, block.string("path")), grid)
    block.finish()
    return pulse


def _build_target(block: _Block, system: LevelSystem) -> TargetSpec:
    kind = block.string("kind", choices={"population", "overlap"})
    if kind == "population":
        target = TargetSpec.population_of(system, block.string("level"))
    elif block.has("levels"):
        # equal-weight superposition of the named basis states
        names = block.raw("levels")
        if not isinstance(names, list) or len(names) < 2:
            raise ConfigError("target.levels must list at least two levels")
        vector = np.zeros(system.n_levels, dtype=np.complex128)
        for name in names:
            vector += system.basis_state(str(name))
        norm = np.linalg.norm(vector)
        if norm == 0.0 or abs(norm**2 - len(names)) > 1e-12:
            raise ConfigError("target.levels must name distinct levels")
        target = TargetSpec.overlap_with(vector / norm)
    else:
        target = TargetSpec.overlap_with(
            system.basis_state(block.string("level")))
    block.finish()
    return target


def build_initial_state(config: RunConfig) -> np.ndarray:
    """Initial state from the optional ``initial`` block (default: the
    zero-energy level)."""
    system = config.system
    block = config.root.child("initial", required=False)
    if block is None:
        index = int(np.argmin(system.energies))
        psi = np.zeros(system.n_levels, dtype=np.complex128)
        psi[index] = 1.0
        return psi
    psi = system.basis_state(block.string("level"))
    block.finish()
    return psi


def _build_constraint(block: Optional[_Block], system: LevelSystem,
                      lambda0: float):
    if block is None:
        return None
    mode = block.string("mode", choices={"none", "spectral", "state"})
    if mode == "none":
        block.finish()
        return None
    if mode == "state":
        allowed = block.raw("allowed")
        if not isinstance(allowed, list) or not allowed:
            raise ConfigError("constraint.allowed must be a list of levels")
        projector = SubspaceProjector.from_labels(system, allowed)
        weight = block.number("weight")
        block.finish()
        return StateConstraint(projector=projector, weight=weight)

    lambda0_a = block.number("lambda0_a", required=False, default=0.0)
    n_basis = block.integer("n_basis", required=False, default=None)
    entries = block.raw("filters", required=False, default=[])
    if not isinstance(entries, list):
        raise ConfigError("constraint.filters must be a list")
    filters = []
    for k, entry in enumerate(entries):
        sub = _Block(entry, "constraint.filters[%d]" % k)
        filters.append(GaussianFilter(
            omega=sub.quantity("omega", "frequency"),
            sigma=sub.quantity("sigma", "frequency"),
            weight=sub.number("weight"),
            role=sub.string("role", required=False, default="filter",
                            choices={"filter", "pass"}),
        ))
        sub.finish()
    block.finish()
    bank = FilterBank(lambda0_a=lambda0_a, filters=tuple(filters),
                      lambda0=lambda0)
    return SpectralConstraint(bank=bank, n_basis=n_basis)


def build_problem(config: RunConfig,
                  max_iter: Optional[int] = None) -> OptimizationProblem:
    """Optimization problem from an ``optimize`` config."""
    system = config.system
    opt = config.root.child("optimizer")
    lambda0 = opt.number("lambda0")
    max_iterations = opt.integer("max_iterations", required=False,
                                 default=5000)
    threshold = opt.number("threshold", required=False, default=1e-4)
    opt.finish()
    if max_iter is not None:
        max_iterations = max_iter

    guess = _build_pulse(config.root.child("guess"), config.grid,
                         config.base_dir)
    target = _build_target(config.root.child("target"), system)
    constraint = _build_constraint(
        config.root.child("constraint", required=False), system, lambda0)
    initial = build_initial_state(config)
    config.root.finish()

    return OptimizationProblem(
        system=system,
        grid=config.grid,
        initial_states=initial,
        target=target,
        guess=guess,
        lambda0=lambda0,
        constraint=constraint,
        stop=StopRule(max_iterations=max_iterations, threshold=threshold),
    )


def keep_intervals(config: RunConfig):
    """Band-filter keep intervals in a.u., or None when the block is absent."""
    block = config.root.child("band_filter", required=False)
    if block is None:
        return None
    pairs = None
    for unit, factor in (("cm1", 1.0 / CM1_PER_AU), ("au", 1.0)):
        key = "keep_" + unit
        if block.has(key):
            if pairs is not None:
                raise ConfigError(
                    "band_filter given in multiple units"
                )
            raw = block.raw(key)
            if not isinstance(raw, list):
                raise ConfigError("band_filter.%s must be a list of pairs"
                                  % key)
            pairs = []
            for entry in raw:
                if not isinstance(entry, list) or len(entry) != 2:
                    raise ConfigError(
                        "band_filter.%s entries must be [lo, hi] pairs" % key
                    )
                lo = _as_float(entry[0], "band_filter." + key)
                hi = _as_float(entry[1], "band_filter." + key)
                pairs.append((lo * factor, hi * factor))
    if pairs is None:
        raise ConfigError(
            "band_filter block needs keep_cm1 or keep_au"
        )
    block.finish()
    return pairs


def build_source_pulse(config: RunConfig) -> Pulse:
    """Pulse for the propagate/spectrum subcommands, band filter applied."""
    from .analysis import band_filter_pulse

    pulse = _build_pulse(config.root.child("pulse"), config.grid,
                         config.base_dir)
    intervals = keep_intervals(config)
    if intervals is not None:
        pulse = band_filter_pulse(pulse, intervals)
    return pulse


@dataclass(frozen=True, eq=False)
class LandscapeRequest:
    base: PulseParametrization
    e1_axis: np.ndarray
    e2_axis: np.ndarray
    merit: object
    merit_label: str


def _build_axis(block: _Block) -> np.ndarray:
    start = block.quantity("start", "field")
    stop = block.quantity("stop", "field")
    points = block.integer("points")
    block.finish()
    if points < 1:
        raise ConfigError("axis needs at least one point")
    if points == 1:
        if stop != start:
            raise ConfigError("single-point axis must have start == stop")
        return np.array([start])
    return np.linspace(start, stop, points)


def build_landscape_request(config: RunConfig) -> LandscapeRequest:
    system = config.system
    field = config.root.child("field")
    base = PulseParametrization(
        e1=0.0,
        e2=0.0,
        tau=field.quantity("duration", "time"),
        omega1=field.quantity("omega1", "frequency"),
        omega2=field.quantity("omega2", "frequency"),
        omega_l=field.quantity("carrier", "frequency"),
    )
    field.finish()
    e1_axis = _build_axis(config.root.child("e1_axis"))
    e2_axis = _build_axis(config.root.child("e2_axis"))

    merit_block = config.root.child("merit")
    kind = merit_block.string("kind",
                              choices={"population", "overlap", "coherence"})
    if kind == "coherence":
        levels = merit_block.raw("levels")
        if not isinstance(levels, list) or len(levels) != 2:
            raise ConfigError("merit.levels must name two levels")
        merit = ("coherence", str(levels[0]), str(levels[1]))
        label = "coherence %s %s" % tuple(merit[1:])
    else:
        level = merit_block.string("level")
        if kind == "population":
            merit = TargetSpec.population_of(system, level)
        else:
            merit = TargetSpec.overlap_with(system.basis_state(level))
        label = "%s %s" % (kind, level)
    merit_block.finish()
    config.root.finish()
    return LandscapeRequest(base=base, e1_axis=e1_axis, e2_axis=e2_axis,
                            merit=merit, merit_label=label)


def finish_propagate_config(config: RunConfig):
    """Consume-check for propagate/spectrum configs after their builders."""
    config.root.finish()
