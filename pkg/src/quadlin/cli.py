"""Command-line interface.

Exit codes: 0 success (solvable), 1 verification above tolerance,
2 input error, 3 not solvable, 4 unsupported dimension.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .closedform import ClosedFormSolution, solve, uniform_times
from .detector import run_detection
from .model import InvalidSystemError, QdeSystem, load_system, negated
from .oracle import IntegrationConfig, IntegrationError, compare, find_fixed_points, integrate
from .report import candidate_table, surface_lines, write_rows
from .synth import MAX_SYNTH_DIM, synthesize
from .trajectory import Trajectory

log = logging.getLogger("quadlin")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT = 2
EXIT_UNSOLVABLE = 3
EXIT_DIMENSION = 4

VERIFY_TOL = 1e-6
SEED_ENV = "QUADLIN_SEED"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not all(np.isfinite(values)):
        raise argparse.ArgumentTypeError("values must be finite")
    return values


def _box(text: str) -> tuple[float, float]:
    values = _floats(text)
    if len(values) != 2 or not values[0] < values[1]:
        raise argparse.ArgumentTypeError("box must be 'a,b' with a < b")
    return values[0], values[1]


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


@contextmanager
def _sink(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}")


def _x0(args, system: QdeSystem) -> np.ndarray:
    x0 = np.array(args.x0, dtype=float)
    if x0.shape != (system.n,):
        raise UsageError(f"--x0 needs {system.n} components, got {len(args.x0)}")
    return x0


def _detect_or_exit(system, seed):
    detection = run_detection(system, seed=seed)
    if not detection.solvable:
        log.error("system is not solvable by a B-transformation to a linear system")
    return detection


# --- subcommands ----------------------------------------------------------------

def cmd_check(args) -> int:
    system = load_system(args.input)
    detection = run_detection(system, seed=_seed(args))
    if args.verbose:
        sys.stderr.write(candidate_table(detection))
    with _sink(args.output) as fh:
        json.dump(detection.to_dict(), fh, indent=2)
        fh.write("\n")
    return EXIT_OK if detection.solvable else EXIT_UNSOLVABLE


def cmd_solve(args) -> int:
    system = load_system(args.input)
    x0 = _x0(args, system)
    detection = _detect_or_exit(system, _seed(args))
    if not detection.solvable:
        return EXIT_UNSOLVABLE
    traj = solve(detection.reductions[0], x0, args.t_end, args.dt)
    with _sink(args.output) as fh:
        traj.write_csv(fh)
    return EXIT_OK


def cmd_verify(args) -> int:
    system = load_system(args.input)
    x0 = _x0(args, system)
    detection = _detect_or_exit(system, _seed(args))
    if not detection.solvable:
        return EXIT_UNSOLVABLE
    report = compare(system, detection.reductions[0], x0, args.t_end)
    doc = {k: v for k, v in report.to_dict().items() if k != "nodes"}
    with _sink(args.output) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return EXIT_OK if report.max_rel_error <= VERIFY_TOL else EXIT_VERIFY_FAILED


def _seeds(box, grid):
    lo, hi = box
    axis = np.linspace(lo, hi, grid) if grid > 1 else np.array([0.5 * (lo + hi)])
    return [np.array([a, b]) for a in axis for b in axis]


def _numeric_piece(system, x0, t_end, dt):
    try:
        traj = integrate(system, x0, IntegrationConfig(t_end=t_end, max_step=dt))
    except IntegrationError as exc:
        log.warning("integration stopped: %s", exc)
        return np.array([0.0]), np.array([x0])
    return traj.times, traj.states


def _portrait_trajectory(system, reduction, x0, t_end, dt, bound) -> Trajectory:
    if reduction is not None:
        exact = ClosedFormSolution.from_initial(reduction, x0)
        fwd = exact.trajectory(uniform_times(t_end, dt))
        bwd = exact.trajectory(uniform_times(-t_end, dt))
        times = np.concatenate([bwd.times[:-1], fwd.times])
        states = np.concatenate([bwd.states[:-1], fwd.states])
    else:
        tf, xf = _numeric_piece(system, x0, t_end, dt)
        tb, xb = _numeric_piece(negated(system), x0, t_end, dt)
        times = np.concatenate([-tb[:0:-1], tf])
        states = np.concatenate([xb[:0:-1], xf])
    # keep the connected stretch around t = 0 that stays inside the view bound
    inside = np.all(np.abs(states) <= bound, axis=1)
    zero = int(np.argmin(np.abs(times)))
    lo = zero
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = zero
    while hi < len(times) - 1 and inside[hi + 1]:
        hi += 1
    return Trajectory(times[lo:hi + 1], states[lo:hi + 1])


def cmd_portrait(args) -> int:
    system = load_system(args.input)
    if system.n != 2:
        log.error("portrait needs a two-dimensional system, got n=%d", system.n)
        return EXIT_DIMENSION
    detection = run_detection(system, seed=_seed(args))
    reduction = detection.reductions[0] if detection.solvable else None
    out = Path(args.output or "portrait")
    out.mkdir(parents=True, exist_ok=True)
    lo, hi = args.box
    bound = 10.0 * max(abs(lo), abs(hi))

    rows = []
    for k, seed in enumerate(_seeds(args.box, args.grid)):
        traj = _portrait_trajectory(system, reduction, seed, args.t_end, args.dt, bound)
        rows.extend([k, repr(float(t)), repr(float(x[0])), repr(float(x[1]))]
                    for t, x in zip(traj.times, traj.states))
    write_rows(out / "trajectories.csv", ["trajectory", "t", "x1", "x2"], rows)

    points = find_fixed_points(system, args.box, max(args.grid, 2))
    write_rows(out / "fixed_points.csv", ["x1", "x2"], [[repr(float(p[0])), repr(float(p[1]))] for p in points])

    surface = []
    if reduction is not None and not system.is_linear:
        for k, pts in enumerate(surface_lines(reduction.B, args.box)):
            surface.extend([k, repr(float(p[0])), repr(float(p[1]))] for p in pts)
    write_rows(out / "surface.csv", ["line", "x1", "x2"], surface)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    seed = _seed(args)
    if not 1 <= args.dim <= MAX_SYNTH_DIM:
        raise UsageError(f"--dim must lie in [1, {MAX_SYNTH_DIM}]")
    system, _ = synthesize(seed, args.dim)
    with _sink(args.output) as fh:
        json.dump(system.to_dict(), fh, indent=2)
        fh.write("\n")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadlin",
        description="Detect and solve quadratic ODE systems that become linear "
                    "under the inversion y = x / (x^T B x).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help="output file (directory for portrait); default stdout")
    common.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV})")
    common.add_argument("--verbose", action="store_true")

    p = sub.add_parser("check", parents=[common], help="decide solvability and report candidates")
    p.add_argument("input")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", parents=[common], help="closed-form trajectory as CSV")
    p.add_argument("input")
    p.add_argument("--x0", type=_floats, required=True)
    p.add_argument("--t-end", type=_positive(float), required=True)
    p.add_argument("--dt", type=_positive(float), default=0.01)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[common], help="compare the closed form with the integrator")
    p.add_argument("input")
    p.add_argument("--x0", type=_floats, required=True)
    p.add_argument("--t-end", type=_positive(float), required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("portrait", parents=[common], help="phase-portrait data bundle (n = 2)")
    p.add_argument("input")
    p.add_argument("--box", type=_box, default=(-3.0, 3.0))
    p.add_argument("--grid", type=_positive(int), default=9)
    p.add_argument("--t-end", type=_positive(float), default=1.0)
    p.add_argument("--dt", type=_positive(float), default=0.01)
    p.set_defaults(func=cmd_portrait)

    p = sub.add_parser("synthesize", parents=[common], help="random solvable system as JSON")
    p.add_argument("--dim", type=int, required=True)
    p.set_defaults(func=cmd_synthesize)
    return parser


# options whose values may start with a minus sign, e.g. --x0 -0.5,1
_VECTOR_OPTIONS = ("--x0", "--box")


def _attach_vector_values(argv: list[str]) -> list[str]:
    out, k = [], 0
    while k < len(argv):
        if argv[k] in _VECTOR_OPTIONS and k + 1 < len(argv):
            out.append(f"{argv[k]}={argv[k + 1]}")
            k += 2
        else:
            out.append(argv[k])
            k += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_vector_values(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="quadlin: %(message)s")
    try:
        return args.func(args)
    except (InvalidSystemError, UsageError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
