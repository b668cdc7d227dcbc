"""Symmetric eigenmatrices of the linear part.

A symmetric ``B`` is an eigenmatrix of ``V`` with matrix-eigenvalue ``lam``
when ``V^T B + B V = lam B``. Two routes produce them:

* outer products ``(r_j r_m^T + r_m r_j^T) / 2`` of eigenvectors of ``V^T``,
  with ``lam = s_j + s_m`` (complete when ``V`` is diagonalizable);
* the eigenspaces of the linear operator ``B -> V^T B + B V`` restricted to
  symmetric matrices (complete in general, also for defective ``V``).
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, subspace_angles

from .model import QdeSystem

log = logging.getLogger(__name__)

TOL_EIG = 1e-9
TOL_DEGEN = 1e-8
# eigenvalue clusters handed to the null-space step; defective blocks split
# eigenvalues by ~sqrt(eps), far above TOL_DEGEN
_CLUSTER = 1e-6
_NULL_RTOL = 1e-8
_ZERO = 1e-12


class SpectralError(RuntimeError):
    """The eigen-solver failed to converge."""


@dataclass(frozen=True)
class EigenPair:
    s: complex
    r: np.ndarray

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.r)


@dataclass(frozen=True)
class CandidateEigenmatrix:
    P: np.ndarray
    lam: float
    source: tuple[int, int] | None = None
    part: str = "re"

    @property
    def label(self) -> str:
        if self.source is None:
            return "P_op"
        j, m = self.source
        tag = f"P_{j + 1}{m + 1}"
        return tag if self.part == "re" else f"{tag}(im)"


@dataclass(frozen=True)
class CandidateSubspace:
    lam: float
    basis: tuple[CandidateEigenmatrix, ...]

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrices(self) -> np.ndarray:
        return np.array([c.P for c in self.basis])


@dataclass
class SpectralAnalysis:
    """Everything step one produces for a system."""

    pairs: list[EigenPair]
    candidates: list[CandidateEigenmatrix]
    subspaces: list[CandidateSubspace]
    operator_subspaces: list[CandidateSubspace]
    route: str
    discarded: int = 0
    notes: list[str] = field(default_factory=list)


def canonicalize(P) -> np.ndarray:
    """Scale so the largest-magnitude entry is +-1 and the first nonzero
    entry (row-major) is positive."""
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    flat = P.ravel()
    k = int(np.argmax(np.abs(flat)))
    if flat[k] == 0.0:
        raise ValueError("cannot canonicalize a zero matrix")
    P = P / flat[k]
    lead = np.flatnonzero(np.abs(P.ravel()) > _ZERO)[0]
    if P.ravel()[lead] < 0:
        P = -P
    return P + 0.0  # no negative zeros


def eigenmatrix_residual(V, P, lam) -> float:
    """Frobenius norm of ``V^T P + P V - lam P``."""
    V = np.asarray(V, dtype=float)
    return float(np.linalg.norm(V.T @ P + P @ V - lam * P))


def _normalize(r: np.ndarray) -> np.ndarray:
    r = r / np.linalg.norm(r)
    if np.iscomplexobj(r):
        # fix the phase on the largest component
        k = int(np.argmax(np.abs(r)))
        r = r * (abs(r[k]) / r[k])
        return r
    lead = np.flatnonzero(np.abs(r) > _ZERO)[0]
    return -r if r[lead] < 0 else r


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    """Group indices whose values lie within ``tol * (1 + |value|)`` of a
    cluster's first member, preserving first-appearance order."""
    groups: list[list[int]] = []
    for i, val in enumerate(values):
        for g in groups:
            ref = values[g[0]]
            if abs(val - ref) <= tol * (1.0 + abs(ref)):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def eigendecompose_vt(system: QdeSystem) -> list[EigenPair]:
    """Eigenpairs of ``V^T`` up to geometric multiplicity.

    Repeated eigenvalues contribute an orthonormal basis of the actual
    eigenspace, so a defective ``V`` yields fewer than ``n`` pairs.
    Complex eigenvalues come back as conjugate pairs.
    """
    Vt = system.V.T
    n = system.n
    try:
        vals, vecs = np.linalg.eig(Vt)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigen-decomposition of V^T failed: {exc}") from exc

    scale = max(1.0, float(np.linalg.norm(Vt, 2)))
    pairs: list[EigenPair] = []
    vals = np.where(np.abs(vals.imag) <= _ZERO * scale, vals.real, vals)
    for group in _clusters(vals, _CLUSTER):
        s = complex(np.mean(vals[group]))
        if s.imag < 0:
            continue  # emitted with its conjugate
        real = s.imag == 0.0
        shift = Vt - (s.real if real else s) * np.eye(n)
        basis = null_space(shift, rcond=_NULL_RTOL * scale / max(np.linalg.norm(shift, 2), 1e-300))
        if basis.shape[1] == 0:
            # close but distinct eigenvalues: fall back to the raw vectors
            members = [(complex(vals[i]), vecs[:, i]) for i in group]
        else:
            members = [(s, basis[:, k]) for k in range(basis.shape[1])]
        for sk, r in members:
            if real:
                pairs.append(EigenPair(sk.real, _normalize(np.real(r))))
            else:
                rn = _normalize(np.asarray(r, dtype=complex))
                pairs.append(EigenPair(sk, rn))
                pairs.append(EigenPair(sk.conjugate(), rn.conj()))
    return pairs


def _independent(mats: list[np.ndarray], new: np.ndarray, tol: float = 1e-8) -> bool:
    if not mats:
        return True
    stack = np.array([m.ravel() / np.linalg.norm(m) for m in mats]).T
    v = new.ravel() / np.linalg.norm(new)
    coef, *_ = np.linalg.lstsq(stack, v, rcond=None)
    return np.linalg.norm(v - stack @ coef) > tol


def _index_pairs(N: int):
    """Diagonal pairs first, then off-diagonal pairs in lexicographic order."""
    yield from ((j, j) for j in range(N))
    yield from itertools.combinations(range(N), 2)


def enumerate_candidates(pairs: list[EigenPair]) -> list[CandidateEigenmatrix]:
    """Outer-product eigenmatrices for every index pair with a real sum."""
    return _enumerate(pairs)[0]


def _enumerate(pairs):
    out: list[CandidateEigenmatrix] = []
    discarded = 0
    for j, m in _index_pairs(len(pairs)):
        lam = complex(pairs[j].s) + complex(pairs[m].s)
        if abs(lam.imag) > TOL_DEGEN * (1.0 + abs(lam)):
            discarded += 1
            continue
        rj, rm = pairs[j].r, pairs[m].r
        P = 0.5 * (np.outer(rj, rm) + np.outer(rm, rj))
        emitted: list[np.ndarray] = []
        for part, piece in (("re", np.real(P)), ("im", np.imag(P))):
            if np.max(np.abs(piece), initial=0.0) <= _ZERO or not _independent(emitted, piece):
                continue
            emitted.append(piece)
            out.append(CandidateEigenmatrix(canonicalize(piece), lam.real, (j, m), part))
    return out, discarded


def group_degenerate(candidates: list[CandidateEigenmatrix]) -> list[CandidateSubspace]:
    """Merge candidates with equal matrix-eigenvalue into subspaces."""
    lams = np.array([c.lam for c in candidates])
    subspaces = []
    for group in _clusters(lams, TOL_DEGEN):
        basis: list[CandidateEigenmatrix] = []
        for i in group:
            if _independent([b.P for b in basis], candidates[i].P):
                basis.append(candidates[i])
        subspaces.append(CandidateSubspace(float(np.mean(lams[group])), tuple(basis)))
    return subspaces


def _sym_basis(n: int) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of the symmetric n x n matrices."""
    basis = []
    for a in range(n):
        E = np.zeros((n, n))
        E[a, a] = 1.0
        basis.append(E)
    for a, b in itertools.combinations(range(n), 2):
        E = np.zeros((n, n))
        E[a, b] = E[b, a] = np.sqrt(0.5)
        basis.append(E)
    return basis


def lyapunov_operator(V) -> tuple[np.ndarray, list[np.ndarray]]:
    """Matrix of ``B -> V^T B + B V`` on the symmetric basis of ``_sym_basis``."""
    V = np.asarray(V, dtype=float)
    basis = _sym_basis(V.shape[0])
    flat = np.array([E.ravel() for E in basis])
    K = np.array([flat @ (V.T @ E + E @ V).ravel() for E in basis]).T
    return K, basis


def lyapunov_eigenmatrices(system: QdeSystem) -> list[CandidateSubspace]:
    """Real-eigenvalue eigenspaces of the symmetric Lyapunov operator.

    Subspaces are sorted by ascending matrix-eigenvalue.
    """
    K, basis = lyapunov_operator(system.V)
    try:
        vals = np.linalg.eigvals(K)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigen-decomposition of the Lyapunov operator failed: {exc}") from exc
    scale = max(1.0, float(np.linalg.norm(K, 2)))
    real = np.sort(vals.real[np.abs(vals.imag) <= TOL_EIG * scale])
    flat = np.array([E.ravel() for E in basis]).T  # columns: basis matrices

    subspaces = []
    for group in _clusters(real, _CLUSTER):
        lam_bar = float(np.mean(real[group]))
        spaces = [(lam_bar, _null(K, lam_bar, scale))]
        if spaces[0][1].shape[1] == 0:
            spaces = [(float(real[i]), _null(K, float(real[i]), scale)) for i in group]
        for lam, vecs in spaces:
            if vecs.shape[1] == 0:
                continue
            mats = [(flat @ vecs[:, k]).reshape(system.n, system.n) for k in range(vecs.shape[1])]
            # Rayleigh quotient sharpens the clustered eigenvalue
            lam = float(np.mean([np.vdot(Mk, system.V.T @ Mk + Mk @ system.V) / np.vdot(Mk, Mk) for Mk in mats]))
            subspaces.append(CandidateSubspace(
                lam, tuple(CandidateEigenmatrix(canonicalize(Mk), lam) for Mk in mats)))
    subspaces.sort(key=lambda sub: sub.lam)
    return _merge_equal(subspaces)


def _merge_equal(subspaces):
    merged: list[CandidateSubspace] = []
    for sub in subspaces:
        if merged and abs(sub.lam - merged[-1].lam) <= TOL_DEGEN * (1.0 + abs(sub.lam)):
            prev = merged[-1]
            basis = list(prev.basis)
            for c in sub.basis:
                if _independent([b.P for b in basis], c.P):
                    basis.append(c)
            merged[-1] = CandidateSubspace(prev.lam, tuple(basis))
        else:
            merged.append(sub)
    return merged


def _null(K, lam, scale):
    shift = K - lam * np.eye(K.shape[0])
    norm = np.linalg.norm(shift, 2)
    if norm == 0.0:
        return np.eye(K.shape[0])
    return null_space(shift, rcond=min(1.0, _NULL_RTOL * scale / norm))


def spans_agree(first: list[CandidateSubspace], second: list[CandidateSubspace],
                tol: float = 1e-8) -> bool:
    """True when both lists hold the same eigenvalues with equal spans."""
    if len(first) != len(second):
        return False
    remaining = list(second)
    for sub in first:
        match = next((o for o in remaining
                      if abs(o.lam - sub.lam) <= max(TOL_DEGEN, tol) * (1.0 + abs(sub.lam))), None)
        if match is None or match.dim != sub.dim:
            return False
        remaining.remove(match)
        a = np.array([c.P.ravel() for c in sub.basis]).T
        b = np.array([c.P.ravel() for c in match.basis]).T
        if np.max(subspace_angles(a, b)) > tol:
            return False
    return True


def analyze(system: QdeSystem) -> SpectralAnalysis:
    """Run both routes and pick the subspaces handed to the detector.

    The outer-product route is used when it reproduces the operator
    eigenspaces exactly (diagonalizable ``V``); otherwise the operator route
    is authoritative.
    """
    pairs = eigendecompose_vt(system)
    candidates, discarded = _enumerate(pairs)
    for c in candidates:
        res = eigenmatrix_residual(system.V, c.P, c.lam)
        bound = TOL_EIG * max(np.linalg.norm(system.V), 1.0) * np.linalg.norm(c.P)
        if res > bound:
            log.debug("candidate %s residual %.3e exceeds %.3e", c.label, res, bound)
    outer = group_degenerate(candidates)
    operator = lyapunov_eigenmatrices(system)
    notes = []
    if discarded:
        notes.append(f"{discarded} eigenvector pair(s) with non-real matrix-eigenvalue discarded")
    if len(pairs) == system.n and spans_agree(outer, operator):
        route = "outer"
        subspaces = sorted(outer, key=lambda sub: sub.lam)
    else:
        route = "operator"
        subspaces = operator
        notes.append("outer-product candidates incomplete (defective or clustered spectrum); "
                     "using Lyapunov-operator eigenspaces")
    return SpectralAnalysis(pairs, candidates, subspaces, operator, route, discarded, notes)
