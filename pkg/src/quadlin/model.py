"""Quadratic ODE systems without constant term.

A system of dimension ``n`` reads

    dx_i/dt = x^T A_i x + v_i^T x,      i = 1..n

with symmetric kernels ``A_i`` and linear rows ``v_i`` stacked into ``V``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

MAX_DIM = 32


class InvalidSystemError(ValueError):
    """Raised when a system document or array is malformed."""


@dataclass(frozen=True)
class QdeSystem:
    """Immutable quadratic system.

    Parameters
    ----------
    A : ndarray, shape (n, n, n)
        ``A[i]`` is the symmetric kernel of the i-th equation.
    V : ndarray, shape (n, n)
        Row ``i`` holds the linear coefficients ``v_i``.
    name : str, optional
    """

    A: np.ndarray
    V: np.ndarray
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        V = np.array(self.V, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise InvalidSystemError(f"V must be square, got shape {V.shape}")
        n = V.shape[0]
        if n == 0:
            raise InvalidSystemError("dimension must be positive")
        if n > MAX_DIM:
            raise InvalidSystemError(f"dimension {n} exceeds the supported maximum {MAX_DIM}")
        if A.shape != (n, n, n):
            raise InvalidSystemError(f"A must have shape {(n, n, n)}, got {A.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(V))):
            raise InvalidSystemError("entries must be finite")
        if not np.array_equal(A, np.swapaxes(A, 1, 2)):
            raise InvalidSystemError("quadratic kernels must be symmetric")
        A.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "V", V)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def v(self) -> list[np.ndarray]:
        return [row for row in self.V]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.A)

    @classmethod
    def from_kernels(cls, C, V, name=None) -> "QdeSystem":
        """Build a system from possibly non-symmetric kernels ``C_i``.

        Each kernel is replaced by ``(C_i + C_i^T) / 2``, which leaves the
        quadratic form unchanged. Already-symmetric kernels come back
        bit-identical.
        """
        C = np.array(C, dtype=float)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise InvalidSystemError(f"quadratic kernels must be a stack of square matrices, got {C.shape}")
        sym = np.swapaxes(C, 1, 2)
        A = np.where(C == sym, C, 0.5 * (C + sym))
        return cls(A, V, name=name)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"n": self.n, "A": self.A.tolist(), "v": self.V.tolist()}
        if self.name is not None:
            doc["name"] = self.name
        return doc


def _real_array(value, what):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidSystemError(f"{what}: entries must be real numbers") from exc
    return arr


def parse_system(document) -> QdeSystem:
    """Parse a JSON document (text, bytes or already-decoded mapping).

    The schema is ``{"n": int, "A": [n matrices], "v": [n vectors]}`` with an
    optional ``"name"``. Constant terms are not part of the schema.
    """
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise InvalidSystemError(f"invalid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise InvalidSystemError("system document must be a JSON object")
    for key in ("n", "A", "v"):
        if key not in document:
            raise InvalidSystemError(f"missing field {key!r}")
    extra = set(document) - {"n", "A", "v", "name"}
    if extra:
        raise InvalidSystemError(f"unknown fields: {sorted(extra)}")

    n = document["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise InvalidSystemError("'n' must be an integer")
    if n <= 0:
        raise InvalidSystemError("'n' must be positive")
    if n > MAX_DIM:
        raise InvalidSystemError(f"'n' exceeds the supported maximum {MAX_DIM}")

    raw_A, raw_v = document["A"], document["v"]
    if not isinstance(raw_A, list) or len(raw_A) != n:
        raise InvalidSystemError(f"'A' must list {n} matrices")
    if not isinstance(raw_v, list) or len(raw_v) != n:
        raise InvalidSystemError(f"'v' must list {n} vectors")
    _reject_complex(raw_A, "A")
    _reject_complex(raw_v, "v")
    try:
        C = _real_array(raw_A, "A")
        V = _real_array(raw_v, "v")
    except ValueError as exc:
        raise InvalidSystemError(str(exc)) from exc
    if C.shape != (n, n, n):
        raise InvalidSystemError(f"'A' must contain {n} matrices of shape {n}x{n}")
    if V.shape != (n, n):
        raise InvalidSystemError(f"'v' must contain {n} vectors of length {n}")

    name = document.get("name")
    if name is not None and not isinstance(name, str):
        raise InvalidSystemError("'name' must be a string")
    return QdeSystem.from_kernels(C, V, name=name)


def _reject_complex(obj, what):
    if isinstance(obj, list):
        for item in obj:
            _reject_complex(item, what)
    elif isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise InvalidSystemError(f"{what}: entries must be real numbers, got {obj!r}")


def load_system(path) -> QdeSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_system(fh.read())


@dataclass(frozen=True)
class State:
    """A point ``x`` of a trajectory at time ``t``."""

    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)) or not np.isfinite(self.t):
            raise InvalidSystemError("state must be a finite vector at a finite time")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


def rhs(system: QdeSystem, x) -> np.ndarray:
    """Right-hand side ``x^T A_i x + v_i^T x`` for every component."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,):
        raise InvalidSystemError(f"state must have shape ({system.n},), got {x.shape}")
    return (system.A @ x) @ x + system.V @ x


def jacobian(system: QdeSystem, x) -> np.ndarray:
    """``J_ij = 2 (A_i x)_j + V_ij``."""
    x = np.asarray(x, dtype=float)
    return 2.0 * (system.A @ x) + system.V


def negated(system: QdeSystem) -> QdeSystem:
    """The time-reversed system ``dx/dt = -f(x)``."""
    return QdeSystem(-system.A, -system.V, name=system.name)
