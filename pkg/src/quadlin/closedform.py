"""Exact trajectories of linearizable quadratic systems.

With ``dy/dt = M y + w`` solved as ``y(t) = e^{Mt} y0 + y_p(t)``, mapping back
through the inversion gives

    x(t) = (e^{Mt} x0 + b0 y_p) / (e^{-lam t} + 2 y_p^T B e^{Mt} x0 + b0 y_p^T B y_p)

where ``b0 = x0^T B x0``. The same expression with ``b0 = 0`` holds on the
invariant hypersurface ``x^T B x = 0`` where the inversion itself is undefined.
A vanishing denominator is a finite-time blow-up.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import LinearReduction
from .expm import expm
from .trajectory import Trajectory

TOL_SURFACE = 1e-12
TOL_BLOWUP = 1e-12
BISECTIONS = 20


class OnHypersurfaceError(ValueError):
    """The point satisfies ``x^T B x = 0``; the inversion is undefined there."""


class BlowupError(ArithmeticError):
    """The closed form has a pole between ``t_lo`` and ``t_hi``."""

    def __init__(self, t_lo: float, t_hi: float):
        super().__init__(f"finite-time blow-up in [{t_lo:.12g}, {t_hi:.12g}]")
        self.t_lo = t_lo
        self.t_hi = t_hi

    @property
    def time(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi)


def on_hypersurface(x, B, tol: float = TOL_SURFACE) -> bool:
    x = np.asarray(x, dtype=float)
    return abs(x @ B @ x) <= tol * np.linalg.norm(B) * (x @ x)


def b_transform(x, B) -> np.ndarray:
    """``y = x / (x^T B x)``."""
    x = np.asarray(x, dtype=float)
    B = np.asarray(B, dtype=float)
    if on_hypersurface(x, B):
        raise OnHypersurfaceError("x^T B x vanishes")
    return x / (x @ B @ x)


def inverse_b_transform(y, B) -> np.ndarray:
    """``x = y / (y^T B y)``; the inversion is its own inverse."""
    return b_transform(y, B)


def matrix_exponential(M, t: float = 1.0) -> np.ndarray:
    return expm(np.asarray(M, dtype=float) * t)


def propagators(M, w, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``(e^{Mt}, y_p(t))`` from a single augmented exponential.

    ``exp(t [[M, w], [0, 0]]) = [[e^{Mt}, int_0^t e^{Ms} w ds], [0, 1]]``,
    which is exact whether or not ``M`` is invertible.
    """
    M = np.asarray(M, dtype=float)
    w = np.asarray(w, dtype=float)
    n = M.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = M
    aug[:n, n] = w
    E = expm(aug * t)
    return E[:n, :n], E[:n, n]


def particular_solution(M, w, t: float) -> np.ndarray:
    """``y_p(t) = int_0^t e^{Ms} w ds``."""
    return propagators(M, w, t)[1]


def lde_solution(reduction: LinearReduction, y0, t: float) -> np.ndarray:
    """Solution of ``dy/dt = M y + w`` with ``y(0) = y0``."""
    E, yp = propagators(reduction.M, reduction.w, t)
    return E @ np.asarray(y0, dtype=float) + yp


@dataclass(frozen=True)
class ClosedFormSolution:
    """Evaluator of the exact trajectory through ``x0``.

    ``y0`` is ``None`` on the hypersurface branch.
    """

    reduction: LinearReduction
    x0: np.ndarray
    b0: float
    y0: np.ndarray | None

    @classmethod
    def from_initial(cls, reduction: LinearReduction, x0) -> "ClosedFormSolution":
        x0 = np.array(x0, dtype=float)
        if x0.shape != (reduction.n,) or not np.all(np.isfinite(x0)):
            raise ValueError(f"x0 must be a finite vector of length {reduction.n}")
        B = reduction.B
        if on_hypersurface(x0, B):
            return cls(reduction, x0, 0.0, None)
        b0 = float(x0 @ B @ x0)
        return cls(reduction, x0, b0, x0 / b0)

    @property
    def on_surface(self) -> bool:
        return self.y0 is None

    def parts(self, t: float) -> tuple[np.ndarray, float, float]:
        """Numerator, denominator and the denominator's magnitude scale."""
        red = self.reduction
        E, yp = propagators(red.M, red.w, t)
        Ex0 = E @ self.x0
        decay = np.exp(-red.lam * t)
        cross = 2.0 * yp @ red.B @ Ex0
        quad = self.b0 * (yp @ red.B @ yp)
        num = Ex0 + self.b0 * yp
        return num, float(decay + cross + quad), float(abs(decay) + abs(cross) + abs(quad))

    def denominator(self, t: float) -> float:
        return self.parts(t)[1]

    def _bisect(self, t_good: float, t_bad: float) -> tuple[float, float]:
        for _ in range(BISECTIONS):
            mid = 0.5 * (t_good + t_bad)
            if self._admissible(mid):
                t_good = mid
            else:
                t_bad = mid
        return t_good, t_bad

    def _admissible(self, t):
        _, den, scale = self.parts(t)
        return den > TOL_BLOWUP * scale

    def __call__(self, t: float) -> np.ndarray:
        num, den, scale = self.parts(t)
        if den > TOL_BLOWUP * scale:
            return num / den
        if abs(den) <= TOL_BLOWUP * scale:
            raise BlowupError(t, t)
        # the denominator starts at 1, so a negative value means a pole was crossed
        lo, hi = self._bisect(0.0, t)
        raise BlowupError(min(lo, hi), max(lo, hi))

    def trajectory(self, times) -> Trajectory:
        """Samples on ``times`` (monotone, starting at or near zero).

        Sampling stops before the first pole; its location is refined by
        bisection on the denominator and stored as ``blowup_time``.
        """
        times = np.asarray(times, dtype=float)
        order = np.argsort(np.abs(times), kind="stable")
        kept_t, kept_x = [], []
        blowup = None
        prev = 0.0
        for t in times[order]:
            if self._admissible(t):
                kept_t.append(t)
                kept_x.append(self(t))
                prev = t
                continue
            lo, hi = self._bisect(prev, t)
            blowup = 0.5 * (lo + hi)
            break
        kept_t = np.array(kept_t)
        kept_x = np.array(kept_x).reshape(len(kept_t), self.reduction.n)
        idx = np.argsort(kept_t)
        return Trajectory(kept_t[idx], kept_x[idx], blowup_time=blowup,
                          status="ok" if blowup is None else "blowup")


def evaluate_solution(reduction: LinearReduction, x0, t: float) -> np.ndarray:
    """Exact state at time ``t`` starting from ``x0`` at time zero."""
    return ClosedFormSolution.from_initial(reduction, x0)(t)


def uniform_times(t_end: float, dt: float) -> np.ndarray:
    """``0, dt, 2 dt, ...`` up to ``t_end`` inclusive (``t_end`` may be negative)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(np.floor(abs(t_end) / dt + 1e-9))
    times = np.arange(steps + 1) * dt * np.sign(t_end if t_end else 1.0)
    if abs(abs(times[-1]) - abs(t_end)) > 1e-9 * max(1.0, abs(t_end)):
        times = np.append(times, t_end)
    return times


def solve(reduction: LinearReduction, x0, t_end: float, dt: float) -> Trajectory:
    return ClosedFormSolution.from_initial(reduction, x0).trajectory(uniform_times(t_end, dt))
