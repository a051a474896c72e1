"""Dense symmetric eigendecomposition by cyclic Jacobi rotations.

The matrices met here are small (2N x 2N with N up to ~100 electrons), so a
plain Jacobi sweep is fast enough and gives eigenvectors that are orthonormal
to rounding error without any re-orthogonalisation pass.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InputError

__all__ = ["SymmetricMatrix", "eig_symmetric"]


class SymmetricMatrix:
    """Square real matrix stored with bit-exact symmetry.

    The input is symmetrised as ``(a + a.T) / 2``; floating point addition is
    commutative, so ``entries[i, j] == entries[j, i]`` holds exactly.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
        a = (a + a.T) / 2
        a.setflags(write=False)
        self._a = a

    @property
    def order(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"SymmetricMatrix(order={self.order})"


def _as_symmetric(m) -> np.ndarray:
    if isinstance(m, SymmetricMatrix):
        a = np.array(m.entries)
    else:
        a = np.array(m, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InputError(f"expected a non-empty square matrix, got shape {a.shape}")
        a = (a + a.T) / 2
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    return a


def eig_symmetric(m, *, max_sweeps: int = 60):
    """Eigenvalues and eigenvectors of a real symmetric matrix.

    Parameters
    ----------
    m : SymmetricMatrix or array_like
        Symmetric input. A plain array is symmetrised first.
    max_sweeps : int
        Cap on full cyclic sweeps; convergence is quadratic so ~10 suffice.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Sorted ascending.
    eigenvectors : ndarray, shape (n, n)
        Column ``k`` belongs to ``eigenvalues[k]``. Each column is signed so
        its largest-magnitude component is positive (first index on ties).
    """
    a = _as_symmetric(m)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n > 1 and scale > 0:
        target = (np.finfo(float).eps * scale) ** 2
        iu = np.triu_indices(n, 1)
        for _ in range(max_sweeps):
            if np.sum(a[iu] ** 2) <= target:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    app, aqq = a[p, p], a[q, q]
                    # Rotation is pointless once a_pq is below rounding of the diagonal.
                    if abs(apq) < 1e-18 * (abs(app) + abs(aqq)):
                        a[p, q] = a[q, p] = 0.0
                        continue
                    theta = (aqq - app) / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    col_p = a[:, p].copy()
                    col_q = a[:, q]
                    new_p = c * col_p - s * col_q
                    new_q = s * col_p + c * col_q
                    a[:, p] = new_p
                    a[:, q] = new_q
                    a[p, :] = new_p
                    a[q, :] = new_q
                    a[p, p] = app - t * apq
                    a[q, q] = aqq + t * apq
                    a[p, q] = a[q, p] = 0.0
                    vp = v[:, p].copy()
                    v[:, p] = c * vp - s * v[:, q]
                    v[:, q] = s * vp + c * v[:, q]
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[idx, np.arange(n)] < 0, -1.0, 1.0)
    v = v * signs
    return w, v
