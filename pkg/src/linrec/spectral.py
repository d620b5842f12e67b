"""Item-space eigendecomposition of the Gram matrix XᵀX."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

_log = logging.getLogger(__name__)

#: Largest item count for which the dense n x n Gram matrix is decomposed.
DEFAULT_MAX_ITEMS = 20_000


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Singular values of X with the matching right singular vectors.

    ``sigma`` is sorted non-increasing and ``V`` holds one eigenvector of XᵀX
    per column.  In every column the entry of largest magnitude is positive.
    """

    sigma: np.ndarray
    V: np.ndarray
    rank_tolerance: float = 0.0

    @property
    def rank(self):
        return len(self.sigma)

    @property
    def num_items(self):
        return self.V.shape[0]

    def truncate(self, k):
        if k > self.rank:
            raise ValueError(f"k={k} exceeds rank {self.rank}")
        return np.ascontiguousarray(self.sigma[:k]), np.ascontiguousarray(self.V[:, :k])

    def gram(self):
        return (self.V * self.sigma**2) @ self.V.T


def default_rank_tolerance(sigma_max, num_items):
    # eigenvalues of the Gram matrix carry absolute error ~ n*eps*sigma_1^2,
    # so singular values below ~sqrt(n*eps)*sigma_1 are noise
    eps = np.finfo(np.float64).eps
    return 10.0 * np.sqrt(max(num_items, 1) * eps) * sigma_max


def fix_signs(V):
    """Flip columns so the largest-magnitude entry (first on ties) is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def gram_eigen(data, rank_tolerance=None, max_items=DEFAULT_MAX_ITEMS):
    """Decompose XᵀX once; every closed-form model is built from the result.

    Eigenvalues below ``rank_tolerance**2`` are discarded.  When no tolerance
    is given, one scaled to the round-off level of the Gram eigensolver is used.
    """
    if data.nnz == 0:
        raise DataError("cannot decompose an empty interaction matrix")
    n = data.num_items
    if n > max_items:
        raise NumericalError(
            f"{n} items exceeds the dense eigendecomposition budget of {max_items} items"
        )
    G = data.gram()
    try:
        evals, evecs = np.linalg.eigh(G)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"eigendecomposition failed: {e}") from e

    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    sigma_max = float(np.sqrt(max(evals[0], 0.0)))
    if rank_tolerance is None:
        rank_tolerance = default_rank_tolerance(sigma_max, n)
    keep = evals > rank_tolerance**2
    sigma = np.sqrt(evals[keep])
    V = fix_signs(evecs[:, keep])
    _log.info("gram eigendecomposition: n=%d, rank=%d", n, len(sigma))
    return SpectralDecomposition(sigma, np.ascontiguousarray(V), float(rank_tolerance))


def left_factors(data, spec, k):
    """Left singular vectors U_k = X V_k diag(1/sigma_k), one column per dimension."""
    if k > spec.rank:
        raise ValueError(f"k={k} exceeds rank {spec.rank}")
    sigma, Vk = spec.truncate(k)
    return np.asarray(data.to_csr() @ Vk) / sigma
