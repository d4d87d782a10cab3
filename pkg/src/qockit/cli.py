"""Command-line front end.

Four subcommands cover the batch workflows: ``optimize`` runs the iterative
field update and writes its full paper trail, ``propagate`` replays a pulse
through the model, ``spectrum`` transforms a pulse without touching any
dynamics, and ``landscape`` scans the two-amplitude merit surface. Every
run writes plain-text tables plus a manifest.json keyed by the config hash,
with no timestamps, so repeating a command reproduces its output ex byte.

Exit codes: 0 success, 2 configuration, 3 monotonicity failure, 4 linear
algebra breakdown, 5 propagation breakdown, 6 filesystem.
"""

import argparse
import json
import os
import platform
import sys

import numba
import numpy as np
import scipy

from . import __version__
from .analysis import landscape_scan, population_trace, pulse_spectrum
from .config import (
    RunConfig,
    build_initial_state,
    build_landscape_request,
    build_problem,
    build_source_pulse,
    finish_propagate_config,
    load_run_config,
)
from .errors import (
    ConfigError,
    MonotonicityError,
    NumericsError,
    PropagationError,
)
from .krotov import optimize
from .propagation import Pulse, propagate
from .units import CM1_PER_AU, FS_PER_AU


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qockit",
        description="Quantum optimal control toolkit for few-level systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="path to the YAML run configuration")
    common.add_argument("--out", default=None,
                        help="output directory (overrides output.directory)")
    common.add_argument("--quiet", action="store_true",
                        help="suppress the summary printed on success")

    p_opt = sub.add_parser("optimize", parents=[common],
                           help="run the iterative field optimization")
    p_opt.add_argument("--max-iter", type=int, default=None,
                       help="override optimizer.max_iterations")

    sub.add_parser("propagate", parents=[common],
                   help="propagate a pulse and record level populations")
    sub.add_parser("spectrum", parents=[common],
                   help="write the Fourier transform of a pulse")
    sub.add_parser("landscape", parents=[common],
                   help="scan the merit over the two field amplitudes")
    return parser


def _prepare_out_dir(args, config: RunConfig) -> str:
    out_dir = args.out if args.out is not None else config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_lines(path, lines):
    with open(path, "w") as handle:
        handle.write("\n".join(lines))
        handle.write("\n")


def _write_records(path, records):
    lines = ["# iter          J_T             J_a             J_b"
             "             J               max_eps_au"]
    for rec in records:
        lines.append("%6d  %.12e  %.12e  %.12e  %.12e  %.12e"
                     % (rec.index, rec.j_t, rec.j_a, rec.j_b, rec.j_total,
                        rec.max_amplitude))
    _write_lines(path, lines)


def _write_pulse(path, pulse: Pulse):
    # %.17e round-trips float64 exactly, so a written pulse reloaded through
    # a kind: file block reproduces the field bit for bit
    lines = ["# t_au                     t_fs                      eps_au"]
    for t, value in zip(pulse.grid.times, pulse.values):
        lines.append("%.17e  %.17e  %.17e" % (t, t * FS_PER_AU, value))
    _write_lines(path, lines)


def _write_spectrum(path, spec):
    lines = ["# omega_au        omega_cm1           re_amplitude"
             "      im_amplitude      power"]
    for k in range(spec.omega_au.size):
        amp = spec.amplitude[k]
        lines.append("%.9e  %.9e  %.9e  %.9e  %.9e"
                     % (spec.omega_au[k], spec.omega_cm1[k],
                        amp.real, amp.imag, spec.power[k]))
    _write_lines(path, lines)


def _write_populations(path, grid, pops, labels):
    lines = ["# t_au  " + "  ".join(labels)]
    for j in range(grid.n_points):
        row = "  ".join("%.12e" % p for p in pops[j])
        lines.append("%.9e  %s" % (grid.times[j], row))
    _write_lines(path, lines)


def _write_landscape(path, scan, label):
    lines = [
        "# merit: " + label,
        "# e1_au: " + "  ".join("%.9e" % v for v in scan.e1_axis),
        "# e2_au: " + "  ".join("%.9e" % v for v in scan.e2_axis),
        "# values[i, j] pairs e1_axis[i] (rows) with e2_axis[j] (columns)",
    ]
    for row in scan.values:
        lines.append("  ".join("%.12e" % v for v in row))
    _write_lines(path, lines)


def _write_manifest(out_dir, command, config: RunConfig, outputs):
    manifest = {
        "command": command,
        "config_sha256": config.sha256,
        "outputs": sorted(outputs),
        "versions": {
            "numba": numba.__version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "qockit": __version__,
            "scipy": scipy.__version__,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _run_optimize(args) -> None:
    config = load_run_config(args.config, "optimize")
    problem = build_problem(config, max_iter=args.max_iter)
    result = optimize(problem)

    out_dir = _prepare_out_dir(args, config)
    outputs = ["records.txt", "pulse.txt", "spectrum.txt"]
    _write_records(os.path.join(out_dir, "records.txt"), result.records)
    _write_pulse(os.path.join(out_dir, "pulse.txt"), result.pulse)
    _write_spectrum(os.path.join(out_dir, "spectrum.txt"),
                    pulse_spectrum(result.pulse))
    labels = config.system.labels
    for k, traj in enumerate(result.trajectories):
        name = "populations.txt" if k == 0 else "populations_%d.txt" % (k + 1)
        _write_populations(os.path.join(out_dir, name), config.grid,
                           population_trace(traj), labels)
        outputs.append(name)
    _write_manifest(out_dir, "optimize", config, outputs)

    if not args.quiet:
        rec = result.final_record
        print("optimize: %d iterations, J_T = %.6e, J = %.6e"
              % (result.iterations, rec.j_t, rec.j_total))
        print("wrote %d files to %s" % (len(outputs) + 1, out_dir))


def _run_propagate(args) -> None:
    config = load_run_config(args.config, "propagate")
    pulse = build_source_pulse(config)
    psi0 = build_initial_state(config)
    finish_propagate_config(config)
    trajectory = propagate(config.system, pulse, psi0=psi0)

    out_dir = _prepare_out_dir(args, config)
    outputs = ["populations.txt", "pulse.txt"]
    _write_populations(os.path.join(out_dir, "populations.txt"), config.grid,
                       population_trace(trajectory), config.system.labels)
    _write_pulse(os.path.join(out_dir, "pulse.txt"), pulse)
    _write_manifest(out_dir, "propagate", config, outputs)

    if not args.quiet:
        final = population_trace(trajectory)[-1]
        peak = config.system.labels[int(np.argmax(final))]
        print("propagate: final state led by %s at %.6f" % (peak, max(final)))
        print("wrote %d files to %s" % (len(outputs) + 1, out_dir))


def _run_spectrum(args) -> None:
    config = load_run_config(args.config, "spectrum")
    pulse = build_source_pulse(config)
    finish_propagate_config(config)
    spec = pulse_spectrum(pulse)

    out_dir = _prepare_out_dir(args, config)
    _write_spectrum(os.path.join(out_dir, "spectrum.txt"), spec)
    _write_manifest(out_dir, "spectrum", config, ["spectrum.txt"])

    if not args.quiet:
        peak = abs(spec.omega_cm1[int(np.argmax(spec.power))])
        print("spectrum: power peaks at %.1f cm^-1" % peak)
        print("wrote 2 files to %s" % out_dir)


def _run_landscape(args) -> None:
    config = load_run_config(args.config, "landscape")
    request = build_landscape_request(config)
    scan = landscape_scan(config.system, request.base, request.e1_axis,
                          request.e2_axis, config.grid, request.merit)

    out_dir = _prepare_out_dir(args, config)
    _write_landscape(os.path.join(out_dir, "landscape.txt"), scan,
                     request.merit_label)
    _write_manifest(out_dir, "landscape", config, ["landscape.txt"])

    if not args.quiet:
        best = np.unravel_index(int(np.argmax(scan.values)),
                                scan.values.shape)
        print("landscape: %d x %d scan, best %.6f at E1 = %.5e, E2 = %.5e"
              % (scan.values.shape[0], scan.values.shape[1],
                 scan.values[best], scan.e1_axis[best[0]],
                 scan.e2_axis[best[1]]))
        print("wrote 2 files to %s" % out_dir)


_HANDLERS = {
    "optimize": _run_optimize,
    "propagate": _run_propagate,
    "spectrum": _run_spectrum,
    "landscape": _run_landscape,
}

_EXIT_CODES = (
    (ConfigError, 2),
    (MonotonicityError, 3),
    (NumericsError, 4),
    (PropagationError, 5),
    (OSError, 6),
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _HANDLERS[args.command](args)
    except (ConfigError, MonotonicityError, NumericsError,
            PropagationError, OSError) as err:
        for kind, code in _EXIT_CODES:
            if isinstance(err, kind):
                print("error: %s" % err, file=sys.stderr)
                return code
        raise  # pragma: no cover - the tuple above is exhaustive
    return 0


if __name__ == "__main__":
    sys.exit(main())
