"""Spectral norms: exact SVD for small matrices, power iteration otherwise."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["spectral_norm", "power_iteration_norm", "SVD_LIMIT"]

#: Largest dimension for which norms are computed by a dense SVD.
SVD_LIMIT = 200


def power_iteration_norm(
    M,
    rtol: float = 1e-6,
    max_iter: int = 10_000,
    seed: int = 0,
    rmatvec=None,
    shape: tuple[int, int] | None = None,
) -> float:
    """Largest singular value via power iteration on M^H M.

    ``M`` may be a dense array, a sparse matrix, or a callable matvec (then
    ``rmatvec`` and ``shape`` are required).
    """
    if callable(M):
        matvec, n = M, shape[1]
    else:
        matvec = M.__matmul__
        rmatvec = M.conj().T.__matmul__
        n = M.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 0j
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = rmatvec(matvec(v))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        new = np.sqrt(nrm)
        v = w / nrm
        if abs(new - est) <= rtol * new:
            return float(new)
        est = new
    return float(est)


def spectral_norm(M, rtol: float = 1e-6) -> float:
    """2-norm of a dense or sparse matrix."""
    if sp.issparse(M):
        if max(M.shape) <= SVD_LIMIT:
            return float(np.linalg.norm(M.toarray(), 2)) if M.nnz else 0.0
        return power_iteration_norm(M.tocsr(), rtol=rtol)
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0 or not np.any(M):
        return 0.0
    if max(M.shape) <= SVD_LIMIT:
        return float(np.linalg.norm(M, 2))
    return power_iteration_norm(M, rtol=rtol)
