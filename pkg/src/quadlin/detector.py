"""Decide whether a quadratic system linearizes under ``y = x / (x^T B x)``.

For an eigenmatrix ``B`` (``V^T B + B V = lam B``) the transformed system is
linear, ``dy/dt = M y + w`` with ``M = V - lam I``, exactly when every
quadratic kernel has the form

    A_i = w_i B - (B w) e_i^T - e_i (B w)^T.

Deleting row and column ``i`` leaves ``A_i`` proportional to ``B`` (the
proportionality check); the remaining ``i``-th column must equal
``w_i B e_i - B w - (e_i^T B w) e_i`` (the column check).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import QdeSystem
from .spectral import (
    TOL_EIG,
    CandidateEigenmatrix,
    CandidateSubspace,
    SpectralAnalysis,
    analyze,
    canonicalize,
    eigenmatrix_residual,
)

log = logging.getLogger(__name__)

TOL_MATCH = 1e-8
N_STARTS = 16
MAX_ALTERNATIONS = 200
ALS_STALL = 1e-14


class EigenmatrixError(ValueError):
    """``B`` is not an eigenmatrix of ``V`` for the given ``lam``."""


@dataclass(frozen=True)
class LinearReduction:
    """A verified transformation to ``dy/dt = M y + w``.

    ``coefficients`` holds the combination weights over a degenerate
    subspace basis; ``None`` for single candidates.
    """

    B: np.ndarray
    lam: float
    w: np.ndarray
    M: np.ndarray
    residuals: dict = field(default_factory=dict, compare=False)
    coefficients: np.ndarray | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def rescaled(self, c: float) -> "LinearReduction":
        """Equivalent reduction with ``(c B, w / c)``."""
        return LinearReduction(c * self.B, self.lam, self.w / c, self.M, dict(self.residuals))

    def to_dict(self) -> dict:
        return {
            "B": self.B.tolist(),
            "lambda": self.lam,
            "w": self.w.tolist(),
            "M": self.M.tolist(),
            "residuals": dict(self.residuals),
        }


@dataclass
class ProportionalityCheck:
    """Outcome of the proportionality check.

    ``w`` carries NaN where both deleted blocks vanish; those components are
    left to the column check.
    """

    w: np.ndarray
    verdicts: list[str]
    failures: list[int]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def first_failure(self) -> int | None:
        return self.failures[0] if self.failures else None

    @property
    def determined(self) -> np.ndarray:
        return ~np.isnan(self.w)


@dataclass
class ColumnCheck:
    w: np.ndarray | None
    rhs: list[np.ndarray]
    failures: list[int]
    residual: float

    @property
    def ok(self) -> bool:
        return not self.failures and self.w is not None

    @property
    def first_failure(self) -> int | None:
        return self.failures[0] if self.failures else None


@dataclass
class CandidateVerdict:
    """One row of the human-readable candidate table."""

    label: str
    lam: float
    B: np.ndarray
    proportionality: ProportionalityCheck | None = None
    column: ColumnCheck | None = None
    coefficients: np.ndarray | None = None
    note: str = ""

    @property
    def stage(self) -> str:
        if self.proportionality is not None and not self.proportionality.ok:
            return "proportionality"
        if self.column is not None and not self.column.ok:
            return "column"
        if self.column is None:
            return "untested"
        return "accepted"

    def to_dict(self) -> dict:
        doc = {"label": self.label, "lambda": self.lam, "B": self.B.tolist(), "stage": self.stage}
        if self.proportionality is not None:
            doc["proportionality"] = {
                "w": [None if np.isnan(x) else float(x) for x in self.proportionality.w],
                "verdicts": self.proportionality.verdicts,
                "failed_indices": [i + 1 for i in self.proportionality.failures],
            }
        if self.column is not None:
            doc["column"] = {
                "rhs": [r.tolist() for r in self.column.rhs],
                "failed_indices": [i + 1 for i in self.column.failures],
                "w": None if self.column.w is None else self.column.w.tolist(),
            }
        if self.coefficients is not None:
            doc["coefficients"] = self.coefficients.tolist()
        if self.note:
            doc["note"] = self.note
        return doc


@dataclass
class Detection:
    system: QdeSystem
    analysis: SpectralAnalysis
    reductions: list[LinearReduction]
    verdicts: list[CandidateVerdict]
    diagnostics: list[str] = field(default_factory=list)

    @property
    def solvable(self) -> bool:
        return bool(self.reductions)

    def to_dict(self) -> dict:
        return {
            "solvable": self.solvable,
            "reductions": [r.to_dict() for r in self.reductions],
            "candidates": [v.to_dict() for v in self.verdicts],
            "spectrum": [
                {"s": [p.s.real, p.s.imag] if isinstance(p.s, complex) else [float(p.s), 0.0]}
                for p in self.analysis.pairs
            ],
            "route": self.analysis.route,
            "diagnostics": list(self.analysis.notes) + list(self.diagnostics),
        }


# --- the quadratic kernel map -------------------------------------------------

def quadratic_kernels(B, w) -> np.ndarray:
    """Kernels ``w_i B - (B w) e_i^T - e_i (B w)^T`` for every ``i``."""
    B = np.asarray(B, dtype=float)
    w = np.asarray(w, dtype=float)
    n = B.shape[0]
    Bw = B @ w
    Q = w[:, None, None] * B[None, :, :]
    idx = np.arange(n)
    Q[idx, :, idx] -= Bw
    Q[idx, idx, :] -= Bw
    return Q


def _column_operator(B) -> np.ndarray:
    """Stacked ``G`` with ``G[i] @ w`` the i-th column right-hand side."""
    n = B.shape[0]
    G = np.empty((n, n, n))
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        G[i] = np.outer(B[:, i], E[i]) - B - E @ B
    return G


def _deleted(X, i):
    keep = np.arange(X.shape[0]) != i
    return X[np.ix_(keep, keep)]


def _a_norm(system):
    return float(np.linalg.norm(system.A))


# --- checks -------------------------------------------------------------------

def proportionality_check(system: QdeSystem, B) -> ProportionalityCheck:
    """Compare each ``A_i`` with ``B`` after deleting row and column ``i``.

    All indices are evaluated so the verdict row is complete; ``failures``
    lists every violating index in ascending order.
    """
    B = np.asarray(B, dtype=float)
    n = system.n
    w = np.full(n, np.nan)
    verdicts, failures = [], []
    for i in range(n):
        At = _deleted(system.A[i], i)
        Bt = _deleted(B, i)
        a_norm, b_norm = np.linalg.norm(At), np.linalg.norm(Bt)
        if b_norm > TOL_MATCH:
            ratio = float(np.vdot(At, Bt) / np.vdot(Bt, Bt))
            if np.linalg.norm(At - ratio * Bt) <= TOL_MATCH * (1.0 + a_norm):
                w[i] = ratio
                verdicts.append("ratio")
            else:
                verdicts.append("not proportional")
                failures.append(i)
        elif a_norm <= TOL_MATCH * (1.0 + a_norm):
            verdicts.append("undetermined")
        else:
            verdicts.append("deleted B block vanishes")
            failures.append(i)
    return ProportionalityCheck(w, verdicts, failures)


def column_check(system: QdeSystem, B, w) -> ColumnCheck:
    """Check the ``i``-th column of every kernel; solve undetermined ``w_i``.

    ``w`` may contain NaN entries (undetermined components). The column
    conditions are linear in ``w``, so the missing entries come from a
    least-squares solve of the stacked system.
    """
    B = np.asarray(B, dtype=float)
    w = np.array(w, dtype=float)
    n = system.n
    G = _column_operator(B)
    cols = np.array([system.A[i][:, i] for i in range(n)])
    free = np.isnan(w)
    if free.any():
        fixed = np.where(free, 0.0, w)
        target = (cols - G @ fixed).ravel()
        Gf = G[:, :, free].reshape(n * n, -1)
        sol, *_ = np.linalg.lstsq(Gf, target, rcond=None)
        w[free] = sol
    rhs = [G[i] @ w for i in range(n)]
    tol = TOL_MATCH * (1.0 + _a_norm(system))
    failures = [i for i in range(n) if np.linalg.norm(rhs[i] - cols[i]) > tol]
    residual = float(np.linalg.norm(np.array(rhs) - cols))
    return ColumnCheck(w if not failures else None, rhs, failures, residual)


def reduction_residuals(system: QdeSystem, B, lam, w) -> dict:
    B = np.asarray(B, dtype=float)
    M = system.V - lam * np.eye(system.n)
    return {
        "eigenmatrix": eigenmatrix_residual(system.V, B, lam)
        / (max(np.linalg.norm(system.V), 1.0) * np.linalg.norm(B)),
        "quadratic": float(np.linalg.norm(system.A - quadratic_kernels(B, w))) / (1.0 + _a_norm(system)),
        "linear": float(np.linalg.norm(M + lam * np.eye(system.n) - system.V)),
    }


def verify_reduction(system: QdeSystem, B, lam, w) -> LinearReduction | None:
    """Full re-verification; returns the reduction only if every condition holds."""
    B = np.asarray(B, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(w)) and np.isfinite(lam)):
        return None
    if np.linalg.norm(B) == 0.0 or not np.array_equal(B, B.T):
        return None
    res = reduction_residuals(system, B, lam, w)
    if res["eigenmatrix"] > TOL_EIG or res["quadratic"] > TOL_MATCH:
        return None
    M = system.V - lam * np.eye(system.n)
    return LinearReduction(B, float(lam), w, M, res)


# --- subspace search ------------------------------------------------------------

def _check_single(system, cand: CandidateEigenmatrix):
    B = cand.P
    prop = proportionality_check(system, B)
    verdict = CandidateVerdict(cand.label, cand.lam, B, proportionality=prop)
    if not prop.ok:
        return verdict, None
    col = column_check(system, B, prop.w)
    verdict.column = col
    if not col.ok:
        return verdict, None
    red = verify_reduction(system, B, cand.lam, col.w)
    if red is None:
        verdict.note = "failed re-verification"
    return verdict, red


def _kernel_columns_in_w(B) -> np.ndarray:
    n = B.shape[0]
    return np.array([quadratic_kernels(B, e).ravel() for e in np.eye(n)]).T


def _kernel_columns_in_c(Ps, w) -> np.ndarray:
    return np.array([quadratic_kernels(P, w).ravel() for P in Ps]).T


def _als(a, Ps, c, max_iter):
    """Alternating least squares for ``a = vec Q(sum c_k P_k, w)``."""
    prev = np.inf
    w = np.zeros(Ps.shape[1])
    res = np.inf
    for _ in range(max_iter):
        B = np.tensordot(c, Ps, axes=1)
        w, *_ = np.linalg.lstsq(_kernel_columns_in_w(B), a, rcond=None)
        H = _kernel_columns_in_c(Ps, w)
        c, *_ = np.linalg.lstsq(H, a, rcond=None)
        norm = np.linalg.norm(c)
        if norm == 0.0:
            break
        res = float(np.linalg.norm(H @ c - a))
        c, w = c / norm, w * norm
        if prev - res < ALS_STALL:
            break
        prev = res
    return c, w, res


def solve_subspace(system: QdeSystem, subspace: CandidateSubspace, seed: int = 0,
                   n_starts: int = N_STARTS, max_iter: int = MAX_ALTERNATIONS,
                   diagnostics: list | None = None) -> list[LinearReduction]:
    """All verified reductions whose ``B`` lies in ``subspace``."""
    return _solve_subspace(system, subspace, seed, n_starts, max_iter, diagnostics)[0]


def _solve_subspace(system, subspace, seed, n_starts, max_iter, diagnostics):
    if subspace.dim == 1:
        verdict, red = _check_single(system, subspace.basis[0])
        return ([red] if red is not None else []), [verdict]

    Ps = subspace.matrices()
    a = system.A.ravel()
    tol = TOL_MATCH * (1.0 + _a_norm(system))
    rng = np.random.default_rng(seed)
    found: list[LinearReduction] = []
    best = np.inf
    for _ in range(n_starts):
        c0 = rng.standard_normal(subspace.dim)
        c, w, res = _als(a, Ps, c0 / np.linalg.norm(c0), max_iter)
        best = min(best, res)
        if not res <= tol:
            continue
        combo = np.tensordot(c, Ps, axes=1)
        if np.max(np.abs(combo)) <= TOL_MATCH:
            continue
        B = canonicalize(combo)
        if any(np.linalg.norm(B - r.B) <= TOL_MATCH for r in found):
            continue
        # re-derive w from the canonical B through both checks
        prop = proportionality_check(system, B)
        if not prop.ok:
            continue
        col = column_check(system, B, prop.w)
        if not col.ok:
            continue
        red = verify_reduction(system, B, subspace.lam, col.w)
        if red is None:
            continue
        coef, *_ = np.linalg.lstsq(Ps.reshape(subspace.dim, -1).T, B.ravel(), rcond=None)
        found.append(LinearReduction(red.B, red.lam, red.w, red.M, red.residuals, coef))

    labels = ", ".join(b.label for b in subspace.basis)
    verdicts = []
    for red in found:
        verdicts.append(CandidateVerdict(
            f"span({labels})", subspace.lam, red.B,
            proportionality=proportionality_check(system, red.B),
            column=column_check(system, red.B, red.w),
            coefficients=red.coefficients))
    if not found:
        msg = f"no combination in span({labels}) at lambda={subspace.lam:.6g}; best residual {best:.3e}"
        verdicts.append(CandidateVerdict(f"span({labels})", subspace.lam, Ps[0], note=msg))
        if diagnostics is not None:
            diagnostics.append(msg)
    return found, verdicts


def _sort_key(red: LinearReduction):
    return (round(red.lam, 9), tuple(np.round(red.B.ravel(), 9)))


def run_detection(system: QdeSystem, seed: int = 0) -> Detection:
    """Spectral enumeration followed by a search over every subspace.

    Candidate verdicts cover each individual candidate as well as the
    combinations searched in degenerate subspaces.
    """
    analysis = analyze(system)
    reductions: list[LinearReduction] = []
    verdicts: list[CandidateVerdict] = []
    diagnostics: list[str] = []

    listed = analysis.candidates if analysis.route == "outer" else [
        c for sub in analysis.subspaces for c in sub.basis]
    for cand in listed:
        verdicts.append(_check_single(system, cand)[0])

    for k, sub in enumerate(analysis.subspaces):
        found, sub_verdicts = _solve_subspace(system, sub, seed + k, N_STARTS, MAX_ALTERNATIONS, diagnostics)
        reductions.extend(found)
        if sub.dim > 1:
            verdicts.extend(sub_verdicts)
    reductions.sort(key=_sort_key)
    return Detection(system, analysis, reductions, verdicts, diagnostics)


def detect(system: QdeSystem, seed: int = 0) -> list[LinearReduction]:
    """Every verified reduction, ordered by ``lam`` then canonical ``B``."""
    return run_detection(system, seed).reductions


def reconstruct_quadratic(B, lam, w, M, name=None) -> QdeSystem:
    """The quadratic system that ``(B, lam, w, M)`` linearizes.

    Raises
    ------
    EigenmatrixError
        If ``B`` is not an eigenmatrix of ``V = M + lam I`` with value ``lam``.
    """
    B = np.asarray(B, dtype=float)
    B = 0.5 * (B + B.T)
    M = np.asarray(M, dtype=float)
    n = B.shape[0]
    V = M + lam * np.eye(n)
    res = eigenmatrix_residual(V, B, lam)
    if res > TOL_EIG * max(np.linalg.norm(V), 1.0) * np.linalg.norm(B) or not np.any(B):
        raise EigenmatrixError(f"V^T B + B V != lam B (residual {res:.3e})")
    return QdeSystem(quadratic_kernels(B, w), V, name=name)
