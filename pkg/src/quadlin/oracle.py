"""Independent numerical reference: an embedded Runge-Kutta 5(4) integrator
(Dormand-Prince coefficients, PI step control) for the raw quadratic system,
comparison against the closed form, and Newton search for fixed points."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .closedform import TOL_SURFACE, BlowupError, ClosedFormSolution
from .detector import LinearReduction
from .model import QdeSystem, jacobian, rhs
from .trajectory import Trajectory

DIVERGENCE_NORM = 1e12
MAX_STEPS = 1_000_000

# Dormand & Prince (1980), Hairer-Norsett-Wanner vol. I, table 5.2
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class IntegrationError(RuntimeError):
    """Step size underflow away from any blow-up."""

    def __init__(self, message, t, x):
        super().__init__(f"{message} at t={t:.12g}")
        self.t = t
        self.x = x


@dataclass(frozen=True)
class IntegrationConfig:
    t_end: float = 1.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    surface_guard: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


def _initial_step(f, x, f0, order, rtol, atol):
    scale = atol + rtol * np.abs(x)
    d0 = np.sqrt(np.mean((x / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = f(x + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1)


def integrate(system: QdeSystem, x0, config: IntegrationConfig = IntegrationConfig(),
              B=None) -> Trajectory:
    """Adaptive integration of ``system`` from ``x0`` over ``[0, config.t_end]``.

    The run stops early with ``diverged=True`` once ``||x||`` exceeds
    ``DIVERGENCE_NORM``. With ``config.surface_guard`` and a matrix ``B``, it
    also stops when ``x^T B x`` reaches zero or changes sign.

    Raises
    ------
    IntegrationError
        On step-size underflow while the state is still moderate.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (system.n,) or not np.all(np.isfinite(x)):
        raise ValueError(f"x0 must be a finite vector of length {system.n}")
    rtol, atol = config.rel_tol, config.abs_tol
    t_end = config.t_end
    guard = config.surface_guard and B is not None
    if guard:
        B = np.asarray(B, dtype=float)
        b_start = float(x @ B @ x)
        guard = abs(b_start) > TOL_SURFACE * np.linalg.norm(B) * (x @ x)

    def f(y):
        return rhs(system, y)

    times, states = [0.0], [x.copy()]
    t = 0.0
    k1 = f(x)
    h = min(_initial_step(f, x, k1, 5, rtol, atol), config.max_step, t_end)
    err_old = 1e-4
    beta = 0.04
    alpha = 0.2 - 0.75 * beta
    rejected = False
    status, diverged = "ok", False
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(MAX_STEPS):
            if t >= t_end:
                break
            if t + h > t_end:
                h = t_end - t
            K = [k1]
            for stage in range(1, 7):
                xs = x + h * sum(a * k for a, k in zip(_A[stage], K))
                K.append(f(xs))
            x_new = xs  # the seventh stage point is the 5th-order solution (FSAL)
            err_vec = h * sum(e * k for e, k in zip(_E, K))
            scale = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
            err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

            if np.isfinite(err) and err <= 1.0:
                t = t + h if t + h < t_end else t_end
                x, k1 = x_new, K[6]
                times.append(t)
                states.append(x.copy())
                norm = np.linalg.norm(x)
                if norm > DIVERGENCE_NORM:
                    status, diverged = "diverged", True
                    break
                if guard:
                    b = float(x @ B @ x)
                    if b * b_start <= 0 or abs(b) <= TOL_SURFACE * np.linalg.norm(B) * (x @ x):
                        status = "surface"
                        break
                fac = 0.9 * err ** -alpha * err_old ** beta if err > 0 else 10.0
                fac = min(10.0, max(0.2, fac))
                if rejected:
                    fac = min(1.0, fac)
                err_old = max(err, 1e-4)
                h = min(h * fac, config.max_step)
                rejected = False
            else:
                fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -alpha)
                h *= fac
                rejected = True

            if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
                if np.linalg.norm(x) > 1e6:
                    status, diverged = "diverged", True
                    break
                raise IntegrationError("step size underflow", t, x.copy())
        else:
            raise IntegrationError("step limit reached", t, x.copy())

    return Trajectory(np.array(times), np.array(states),
                      blowup_time=times[-1] if diverged else None,
                      diverged=diverged, status=status)


@dataclass(frozen=True)
class ErrorReport:
    max_rel_error: float
    t_window: tuple[float, float]
    diverged: bool
    blowup_time: float | None
    nodes: int = 0

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["t_window"] = list(self.t_window)
        return doc


# Closed-form values whose denominator has fallen below this fraction are
# treated as inside the blow-up neighbourhood and left out of the comparison.
CLIP_DENOMINATOR = 1e-3


def compare(system: QdeSystem, reduction: LinearReduction, x0, t_end: float,
            config: IntegrationConfig | None = None) -> ErrorReport:
    """Largest relative deviation between integrator and closed form.

    The closed form is evaluated at the integrator's accepted nodes, so no
    interpolation enters the error. The window ends before any blow-up.
    """
    x0 = np.asarray(x0, dtype=float)
    if t_end == 0:
        return ErrorReport(0.0, (0.0, 0.0), False, None, 1)
    cfg = config or IntegrationConfig(t_end=t_end)
    if cfg.t_end != t_end:
        cfg = IntegrationConfig(t_end, cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.surface_guard)
    traj = integrate(system, x0, cfg)
    exact = ClosedFormSolution.from_initial(reduction, x0)

    worst, t_last = 0.0, 0.0
    blowup = traj.blowup_time
    for t, x in zip(traj.times, traj.states):
        num, den, _ = exact.parts(t)
        if den < CLIP_DENOMINATOR:
            try:
                exact(t)
            except BlowupError as exc:
                blowup = exc.time
            else:
                if den <= 0:
                    blowup = t
            break
        ref = num / den
        worst = max(worst, float(np.linalg.norm(x - ref) / max(np.linalg.norm(ref), 1e-300)))
        t_last = float(t)
    return ErrorReport(worst, (0.0, t_last), traj.diverged, blowup, len(traj.times))


def find_fixed_points(system: QdeSystem, box, grid: int, tol: float = 1e-10,
                      max_iter: int = 50, merge: float = 1e-6) -> list[np.ndarray]:
    """Roots of the right-hand side reached by Newton from a lattice of starts.

    ``box`` is either one ``(lo, hi)`` interval for every axis or one per
    axis. Roots outside the box are dropped; the origin is always included.
    """
    n = system.n
    box = np.asarray(box, dtype=float)
    if box.shape == (2,):
        box = np.tile(box, (n, 1))
    if box.shape != (n, 2):
        raise ValueError(f"box must be one interval or {n} intervals")
    if grid < 1:
        raise ValueError("grid must be positive")
    axes = [np.linspace(lo, hi, grid) if grid > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in box]

    roots = [np.zeros(n)]
    span = box[:, 1] - box[:, 0]
    for start in itertools.product(*axes):
        x = np.array(start, dtype=float)
        for _ in range(max_iter):
            fx = rhs(system, x)
            if np.linalg.norm(fx) <= tol:
                break
            try:
                x = x - np.linalg.solve(jacobian(system, x), fx)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(x)):
                break
        if not np.all(np.isfinite(x)) or np.linalg.norm(rhs(system, x)) > tol:
            continue
        if np.any(x < box[:, 0] - 1e-9 * span) or np.any(x > box[:, 1] + 1e-9 * span):
            continue
        if all(np.linalg.norm(x - r) > merge for r in roots):
            roots.append(x + 0.0)
    return sorted(roots, key=lambda r: tuple(r))
