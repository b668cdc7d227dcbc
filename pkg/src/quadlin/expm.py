"""Matrix exponential by scaling and squaring with diagonal Pade kernels.

Follows the degree-selection scheme of Higham (2005): the lowest Pade degree
whose backward-error bound covers ``||A||_1`` is used directly; otherwise the
matrix is scaled by ``2**-s`` to fit the degree-13 bound and squared back.
"""
from __future__ import annotations

import math

import numpy as np


class MatrixExponentialOverflow(OverflowError):
    """The exponential does not fit in double precision."""


_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}

_PADE = {
    3: (120., 60., 12., 1.),
    5: (30240., 15120., 3360., 420., 30., 1.),
    7: (17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.),
    9: (17643225600., 8821612800., 2075673600., 302702400., 30270240.,
        2162160., 110880., 3960., 90., 1.),
    13: (64764752532480000., 32382376266240000., 7771770303897600.,
         1187353796428800., 129060195264000., 10559470521600.,
         670442572800., 33522128640., 1323241920., 40840800., 960960.,
         16380., 182., 1.),
}


def _pade_low(A, m):
    b = _PADE[m]
    ident = np.eye(A.shape[0])
    A2 = A @ A
    powers = [ident, A2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ A2)
    U = A @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
    V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return U, V


def _pade13(A):
    b = _PADE[13]
    ident = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def expm(A) -> np.ndarray:
    """``exp(A)`` for a real square matrix.

    Raises
    ------
    MatrixExponentialOverflow
        When the result (or an intermediate square) is not finite.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norm = float(np.linalg.norm(A, 1))
    if norm == 0.0:
        return np.eye(n)

    with np.errstate(over="ignore", invalid="ignore"):
        for m in (3, 5, 7, 9):
            if norm <= _THETA[m]:
                U, V = _pade_low(A, m)
                return _finish(U, V, 0)
        s = max(0, math.ceil(math.log2(norm / _THETA[13])))
        U, V = _pade13(A / 2.0 ** s)
        return _finish(U, V, s)


def _finish(U, V, squarings):
    R = np.linalg.solve(V - U, V + U)
    for _ in range(squarings):
        R = R @ R
        if not np.all(np.isfinite(R)):
            break
    if not np.all(np.isfinite(R)):
        raise MatrixExponentialOverflow("matrix exponential overflows double precision")
    return R
