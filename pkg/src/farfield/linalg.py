"""Batched Hermitian positive-definite solves over frequency bins."""
from __future__ import annotations

import numpy as np


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def load_diagonal(a: np.ndarray, eps: float) -> np.ndarray:
    """Add ``eps * trace(a) / n`` to the diagonal of each matrix in the batch."""
    n = a.shape[-1]
    tr = np.real(np.trace(a, axis1=-2, axis2=-1))
    return a + (eps * tr / n)[..., None, None] * np.eye(n)


def _cho_solve(a, b):
    low = np.linalg.cholesky(a)
    y = np.linalg.solve(low, b)
    return np.linalg.solve(np.conj(np.swapaxes(low, -1, -2)), y)


def solve_hpd(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``a[i] x[i] = b[i]`` for a batch of Hermitian PD matrices.

    Uses a Cholesky factorisation.  Items whose matrix is not numerically
    positive definite, or whose solution is not finite, get ``x = 0``.

    Returns
    -------
    x : ndarray, same shape as ``b``
    failed : ndarray of bool, one flag per batch item
    """
    a = np.asarray(a)
    b = np.asarray(b)
    x = np.zeros(np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + b.shape[-2:],
                 dtype=np.result_type(a, b))
    failed = np.zeros(a.shape[:-2], dtype=bool)
    finite = np.isfinite(a).all(axis=(-2, -1)) & np.isfinite(b).all(axis=(-2, -1))
    try:
        if not finite.all():
            raise np.linalg.LinAlgError
        x[...] = _cho_solve(a, b)
    except np.linalg.LinAlgError:
        # locate the offending items one at a time
        for i in np.ndindex(*a.shape[:-2]):
            if not finite[i]:
                failed[i] = True
                continue
            try:
                x[i] = _cho_solve(a[i], b[i])
            except np.linalg.LinAlgError:
                failed[i] = True
    bad = ~np.isfinite(x).all(axis=(-2, -1))
    failed |= bad
    x[failed] = 0
    return x, failed
