"""Random quadratic systems that are linearizable by construction."""
from __future__ import annotations

import numpy as np

from .detector import reconstruct_quadratic
from .model import QdeSystem

MAX_SYNTH_DIM = 8


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_eigenbasis(rng, n, cond=2.0):
    """Random matrix with singular values in ``[1, cond]``."""
    sigma = rng.uniform(1.0, cond, size=n)
    return _orthogonal(rng, n) @ np.diag(sigma) @ _orthogonal(rng, n).T


def synthesize(seed: int, dim: int, eigenvalues=None, pair=None) -> tuple[QdeSystem, dict]:
    """Build a solvable system and the data it was built from.

    ``V`` gets random eigenvalues in ``[-3, 3]`` (or ``eigenvalues``) and a
    well-conditioned random eigenbasis; ``B`` is the symmetrized outer product
    of two left eigenvectors (indices ``pair`` or random); ``w`` is uniform in
    ``[-2, 2]``.
    """
    if not 1 <= dim <= MAX_SYNTH_DIM:
        raise ValueError(f"dim must lie in [1, {MAX_SYNTH_DIM}]")
    rng = np.random.default_rng(seed)
    s = rng.uniform(-3.0, 3.0, size=dim) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    if s.shape != (dim,):
        raise ValueError("need one eigenvalue per dimension")
    S = random_eigenbasis(rng, dim)
    S_inv = np.linalg.inv(S)
    V = S @ np.diag(s) @ S_inv
    R = S_inv.T  # columns are eigenvectors of V^T
    if pair is None:
        j, m = sorted(int(k) for k in rng.integers(0, dim, size=2))
    else:
        j, m = pair
    B = 0.5 * (np.outer(R[:, j], R[:, m]) + np.outer(R[:, m], R[:, j]))
    lam = float(s[j] + s[m])
    w = rng.uniform(-2.0, 2.0, size=dim)
    M = V - lam * np.eye(dim)
    system = reconstruct_quadratic(B, lam, w, M, name=f"synthetic seed={seed} dim={dim}")
    truth = {"B": B, "lam": lam, "w": w, "M": M, "eigenvalues": s, "pair": (j, m)}
    return system, truth
